//! Disease classifier behind the master's diagnose action, and the linear
//! SVM baselines.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Goal;
use crate::domain::{DialogueState, DiseaseId};
use crate::error::{Error, Result};
use crate::neuralnet::{DenseNet, DenseNetSpec, Head, Mode, Optimizer, OptimizerKind};
use crate::policy::{argmax, ReplayBuffer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Passes over the stored pairs per refit.
    pub fit_epochs: usize,
    /// Most recent labelled states kept for refits.
    pub pair_capacity: usize,
    pub optimizer: OptimizerKind,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: vec![512],
            dropout: 0.5,
            learning_rate: 0.0005,
            batch_size: 32,
            fit_epochs: 1,
            pair_capacity: 10_000,
            optimizer: OptimizerKind::default(),
        }
    }
}

/// A terminal dialogue state labelled with its goal disease.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledState {
    pub state: Vec<f64>,
    pub disease: DiseaseId,
}

#[derive(Debug, Clone)]
pub struct DiseaseClassifier {
    pub config: ClassifierConfig,
    net: DenseNet,
    optimizer: Optimizer,
    pub pairs: ReplayBuffer<LabeledState>,
}

impl DiseaseClassifier {
    pub fn new<R: Rng + ?Sized>(state_width: usize, num_diseases: usize, config: ClassifierConfig, rng: &mut R) -> Result<Self> {
        let mut widths = vec![state_width];
        widths.extend_from_slice(&config.hidden);
        widths.push(num_diseases);
        let net = DenseNet::new(DenseNetSpec::new(widths, config.dropout, Head::Softmax)?, rng)?;
        Ok(Self::from_parts(net, None, config))
    }

    pub fn from_parts(net: DenseNet, optimizer: Option<Optimizer>, config: ClassifierConfig) -> Self {
        let optimizer = optimizer.unwrap_or_else(|| Optimizer::new(config.optimizer, config.learning_rate));
        DiseaseClassifier { pairs: ReplayBuffer::new(config.pair_capacity), net, optimizer, config }
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.optimizer
    }

    pub fn num_diseases(&self) -> usize {
        self.net.spec().output_width()
    }

    /// Distribution over diseases and its argmax.
    pub fn classify(&self, state: &[f64]) -> Result<(Vec<f64>, DiseaseId)> {
        if state.len() != self.net.spec().input_width() {
            return Err(Error::ShapeMismatch { expected: self.net.spec().input_width(), actual: state.len() });
        }
        let probs = self.net.predict(state)?;
        let best = argmax(&probs);
        Ok((probs, DiseaseId(best)))
    }

    pub fn record(&mut self, state: Vec<f64>, disease: DiseaseId) {
        self.pairs.push(LabeledState { state, disease });
    }

    /// Shuffled mini-batch cross-entropy descent over `pairs` for `epochs`
    /// passes. Returns the mean loss of the last pass.
    pub fn fit<R: Rng + ?Sized>(&mut self, pairs: &[&LabeledState], epochs: usize, rng: &mut R) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::InvalidConfig("classifier fit on no pairs".into()));
        }
        let batch = self.config.batch_size.max(1);
        let width = self.net.spec().input_width();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut last = f64::NAN;
        for _ in 0..epochs {
            order.shuffle(rng);
            let mut total = 0.0;
            let mut count = 0;
            for chunk in order.chunks(batch) {
                let mut states = Vec::with_capacity(chunk.len() * width);
                let mut labels = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    states.extend_from_slice(&pairs[i].state);
                    labels.push(pairs[i].disease.0);
                }
                let (loss, grads) = self.net.ce_loss_grad(&states, &labels, Mode::Train, rng)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite("classifier loss"));
                }
                self.optimizer.step(&mut self.net, &grads)?;
                total += loss;
                count += 1;
            }
            last = total / count as f64;
        }
        Ok(last)
    }

    /// Refit on the stored pairs; `None` when nothing is stored yet.
    pub fn refit<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>> {
        if self.pairs.is_empty() {
            return Ok(None);
        }
        let pairs: Vec<LabeledState> = self.pairs.iter().cloned().collect();
        let refs: Vec<&LabeledState> = pairs.iter().collect();
        self.fit(&refs, self.config.fit_epochs, rng).map(Some)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Explicit symptoms only.
    Ex,
    /// Explicit and implicit symptoms.
    ExIm,
}

impl FeatureMode {
    pub fn label(self) -> &'static str {
        match self {
            FeatureMode::Ex => "SVM-ex",
            FeatureMode::ExIm => "SVM-ex&im",
        }
    }
}

/// State encoding of a goal as seen by an SVM baseline.
pub fn goal_features(goal: &Goal, num_symptoms: usize, mode: FeatureMode) -> Vec<f64> {
    let mut state = DialogueState::empty(num_symptoms);
    for &(s, status) in &goal.explicit {
        state.set(s, status);
    }
    if mode == FeatureMode::ExIm {
        for &(s, status) in &goal.implicit {
            state.set(s, status);
        }
    }
    state.into_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub eta0: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { lambda: 1e-4, epochs: 50, eta0: 0.1 }
    }
}

/// One-vs-rest linear SVM stored as a single linear layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvm {
    net: DenseNet,
}

impl LinearSvm {
    pub fn zeros(features: usize, classes: usize) -> Result<Self> {
        Ok(LinearSvm { net: DenseNet::zeros(DenseNetSpec::new(vec![features, classes], 0.0, Head::Linear)?)? })
    }

    pub fn from_net(net: DenseNet) -> Result<Self> {
        if net.layers().len() != 1 || net.spec().head != Head::Linear {
            return Err(Error::InvalidConfig("an SVM is a single linear layer".into()));
        }
        Ok(LinearSvm { net })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    pub fn num_features(&self) -> usize {
        self.net.spec().input_width()
    }

    pub fn num_classes(&self) -> usize {
        self.net.spec().output_width()
    }

    /// Subgradient descent on the L2-regularized hinge loss of every
    /// one-vs-rest problem, step size `eta0 / (1 + eta0 * lambda * t)`.
    pub fn fit<R: Rng + ?Sized>(
        features: &[Vec<f64>],
        labels: &[usize],
        classes: usize,
        config: &SvmConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::ShapeMismatch { expected: features.len(), actual: labels.len() });
        }
        let Some(first) = labels.first() else {
            return Err(Error::InvalidConfig("SVM fit on no samples".into()));
        };
        if labels.iter().all(|l| l == first) {
            return Err(Error::SingleClass(*first));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::IndexOutOfRange { index: bad, len: classes });
        }
        let width = features[0].len();
        if let Some(f) = features.iter().find(|f| f.len() != width) {
            return Err(Error::ShapeMismatch { expected: width, actual: f.len() });
        }
        let mut svm = LinearSvm::zeros(width, classes)?;
        let layer = &mut svm.net.layers_mut()[0];
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut t = 0usize;
        for _ in 0..config.epochs {
            order.shuffle(rng);
            for &i in &order {
                t += 1;
                let eta = config.eta0 / (1.0 + config.eta0 * config.lambda * t as f64);
                let shrink = 1.0 - eta * config.lambda;
                let x = &features[i];
                for c in 0..classes {
                    let y = if labels[i] == c { 1.0 } else { -1.0 };
                    let w = &mut layer.weights[c * width..(c + 1) * width];
                    let margin = y * (w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + layer.bias[c]);
                    for v in w.iter_mut() {
                        *v *= shrink;
                    }
                    if margin < 1.0 {
                        for (v, xi) in w.iter_mut().zip(x) {
                            *v += eta * y * xi;
                        }
                        layer.bias[c] += eta * y;
                    }
                }
            }
        }
        Ok(svm)
    }

    pub fn margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(x)
    }

    /// Class with the largest margin, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.margins(x)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.net.save(None, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (net, _) = DenseNet::load(path)?;
        LinearSvm::from_net(net)
    }
}

/// Trains an SVM baseline on resolved goals.
pub fn fit_svm<R: Rng + ?Sized>(
    goals: &[Goal],
    num_symptoms: usize,
    num_diseases: usize,
    mode: FeatureMode,
    config: &SvmConfig,
    rng: &mut R,
) -> Result<LinearSvm> {
    let features: Vec<Vec<f64>> = goals.iter().map(|g| goal_features(g, num_symptoms, mode)).collect();
    let labels: Vec<usize> = goals.iter().map(|g| g.disease.0).collect();
    LinearSvm::fit(&features, &labels, num_diseases, config, rng)
}

/// Fraction of goals whose disease the SVM predicts.
pub fn svm_accuracy(svm: &LinearSvm, goals: &[Goal], num_symptoms: usize, mode: FeatureMode) -> Result<f64> {
    if goals.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for g in goals {
        if svm.predict(&goal_features(g, num_symptoms, mode))? == g.disease.0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / goals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, ConditionalProbabilityTable, UserGoal};
    use crate::domain::SymptomStatus;
    use crate::rng::{stream, Stream};
    use std::collections::BTreeMap;

    fn one_hot(i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn distribution_is_normalized() {
        let c = DiseaseClassifier::new(9, 4, ClassifierConfig::default(), &mut stream(0, Stream::Init, 0)).unwrap();
        let (p, d) = c.classify(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|v| *v >= 0.0));
        assert!(d.0 < 4);
        assert!(c.classify(&[0.0; 3]).is_err());
    }

    #[test]
    fn memorizes_a_single_pair() {
        let config = ClassifierConfig { hidden: vec![16], learning_rate: 0.01, ..Default::default() };
        let mut c = DiseaseClassifier::new(6, 3, config, &mut stream(1, Stream::Init, 0)).unwrap();
        let pair = LabeledState { state: one_hot(2, 6), disease: DiseaseId(1) };
        c.fit(&[&pair], 300, &mut stream(1, Stream::Dropout, 0)).unwrap();
        let (p, d) = c.classify(&pair.state).unwrap();
        assert_eq!(d, DiseaseId(1));
        assert!(p[1] > 0.99, "{p:?}");
    }

    #[test]
    fn separates_disjoint_diseases_and_loss_decreases() {
        let config = ClassifierConfig { hidden: vec![32], learning_rate: 0.005, batch_size: 8, ..Default::default() };
        let mut c = DiseaseClassifier::new(12, 4, config, &mut stream(2, Stream::Init, 0)).unwrap();
        let pairs: Vec<LabeledState> =
            (0..40).map(|i| LabeledState { state: one_hot(3 * (i % 4), 12), disease: DiseaseId(i % 4) }).collect();
        let refs: Vec<&LabeledState> = pairs.iter().collect();
        let mut rng = stream(2, Stream::Dropout, 0);
        let mut losses = Vec::new();
        for _ in 0..10 {
            losses.push(c.fit(&refs, 1, &mut rng).unwrap());
        }
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
        for p in &pairs {
            assert_eq!(c.classify(&p.state).unwrap().1, p.disease);
        }
    }

    #[test]
    fn edema_goal_is_cerebral_edema() {
        let cpt = ConditionalProbabilityTable::toy();
        let onto = cpt.ontology().clone();
        let ds = generate_dataset(&cpt, 200, 3).unwrap();
        let goals = Goal::resolve_all(&ds.goals, &onto).unwrap();
        let pairs: Vec<LabeledState> = goals
            .iter()
            .map(|g| LabeledState { state: goal_features(g, onto.num_symptoms(), FeatureMode::ExIm), disease: g.disease })
            .collect();
        let refs: Vec<&LabeledState> = pairs.iter().collect();
        let config = ClassifierConfig { hidden: vec![64], learning_rate: 0.002, ..Default::default() };
        let mut c = DiseaseClassifier::new(onto.state_width(), onto.num_diseases(), config, &mut stream(3, Stream::Init, 0)).unwrap();
        c.fit(&refs, 20, &mut stream(3, Stream::Dropout, 0)).unwrap();

        let mut implicit: BTreeMap<String, SymptomStatus> = ["focal weakness", "diminished vision", "vomiting", "loss of sensation"]
            .iter()
            .map(|n| (n.to_string(), SymptomStatus::True))
            .collect();
        implicit.insert("fever".into(), SymptomStatus::False);
        let user = UserGoal {
            disease: "Cerebral edema".into(),
            group: "neurological".into(),
            explicit: [("headache".to_string(), SymptomStatus::True)].into(),
            implicit,
        };
        let goal = Goal::resolve(&user, &onto).unwrap();
        let (_, d) = c.classify(&goal_features(&goal, onto.num_symptoms(), FeatureMode::ExIm)).unwrap();
        assert_eq!(onto.disease_name(d), "Cerebral edema");
    }

    #[test]
    fn svm_separable_and_tie_break() {
        let zero = LinearSvm::zeros(4, 3).unwrap();
        assert_eq!(zero.predict(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 0);

        let features: Vec<Vec<f64>> = (0..30).map(|i| one_hot(i % 2, 4)).collect();
        let labels: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let svm = LinearSvm::fit(&features, &labels, 2, &SvmConfig::default(), &mut stream(0, Stream::Svm, 0)).unwrap();
        for (x, y) in features.iter().zip(&labels) {
            assert_eq!(svm.predict(x).unwrap(), *y);
        }
        assert!(matches!(
            LinearSvm::fit(&features, &vec![1; 30], 2, &SvmConfig::default(), &mut stream(0, Stream::Svm, 0)),
            Err(Error::SingleClass(1))
        ));
    }

    #[test]
    fn svm_margins_match_brute_force() {
        let cpt = ConditionalProbabilityTable::toy();
        let onto = cpt.ontology();
        let goals = Goal::resolve_all(&generate_dataset(&cpt, 50, 4).unwrap().goals, onto).unwrap();
        let svm = fit_svm(&goals, onto.num_symptoms(), onto.num_diseases(), FeatureMode::ExIm, &SvmConfig { epochs: 5, ..Default::default() }, &mut stream(4, Stream::Svm, 0)).unwrap();
        let layer = &svm.net().layers()[0];
        let mut rng = stream(4, Stream::Eval, 0);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..svm.num_features()).map(|_| if rng.gen::<f64>() < 0.1 { 1.0 } else { 0.0 }).collect();
            let m: Vec<f64> = (0..svm.num_classes())
                .map(|c| layer.bias[c] + (0..x.len()).map(|i| layer.weights[c * x.len() + i] * x[i]).sum::<f64>())
                .collect();
            let mut best = 0;
            for c in 1..m.len() {
                if m[c] > m[best] {
                    best = c;
                }
            }
            assert_eq!(svm.predict(&x).unwrap(), best);
        }
    }

    #[test]
    fn ex_features_ignore_implicit_content() {
        let cpt = ConditionalProbabilityTable::toy();
        let onto = cpt.ontology();
        let goals = Goal::resolve_all(&generate_dataset(&cpt, 20, 5).unwrap().goals, onto).unwrap();
        for g in &goals {
            let mut stripped = g.clone();
            stripped.implicit.clear();
            assert_eq!(
                goal_features(g, onto.num_symptoms(), FeatureMode::Ex),
                goal_features(&stripped, onto.num_symptoms(), FeatureMode::Ex)
            );
            assert_eq!(
                goal_features(&stripped, onto.num_symptoms(), FeatureMode::Ex),
                goal_features(&stripped, onto.num_symptoms(), FeatureMode::ExIm)
            );
        }
        let ex = fit_svm(&goals, onto.num_symptoms(), onto.num_diseases(), FeatureMode::Ex, &SvmConfig::default(), &mut stream(5, Stream::Svm, 0)).unwrap();
        let stripped: Vec<Goal> = goals.iter().cloned().map(|mut g| { g.implicit.clear(); g }).collect();
        let im = fit_svm(&stripped, onto.num_symptoms(), onto.num_diseases(), FeatureMode::ExIm, &SvmConfig::default(), &mut stream(5, Stream::Svm, 0)).unwrap();
        assert_eq!(ex, im);
    }

    #[test]
    fn ex_im_beats_ex_on_toy_data() {
        let cpt = ConditionalProbabilityTable::toy();
        let onto = cpt.ontology();
        let goals = Goal::resolve_all(&generate_dataset(&cpt, 300, 6).unwrap().goals, onto).unwrap();
        let (test, train): (Vec<_>, Vec<_>) = goals.into_iter().enumerate().partition(|(i, _)| i % 5 == 0);
        let train: Vec<Goal> = train.into_iter().map(|(_, g)| g).collect();
        let test: Vec<Goal> = test.into_iter().map(|(_, g)| g).collect();
        let mut acc = Vec::new();
        for mode in [FeatureMode::Ex, FeatureMode::ExIm] {
            let svm = fit_svm(&train, onto.num_symptoms(), onto.num_diseases(), mode, &SvmConfig::default(), &mut stream(6, Stream::Svm, 0)).unwrap();
            acc.push(svm_accuracy(&svm, &test, onto.num_symptoms(), mode).unwrap());
        }
        assert!(acc[1] > acc[0] + 0.2, "{acc:?}");
    }

    #[test]
    fn svm_checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let features: Vec<Vec<f64>> = (0..10).map(|i| one_hot(i % 3, 3)).collect();
        let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();
        let svm = LinearSvm::fit(&features, &labels, 3, &SvmConfig::default(), &mut stream(7, Stream::Svm, 0)).unwrap();
        let path = dir.path().join("svm.bin");
        svm.save(&path).unwrap();
        assert_eq!(LinearSvm::load(&path).unwrap(), svm);
    }
}
