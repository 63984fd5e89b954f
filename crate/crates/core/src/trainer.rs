//! Training loops for the hierarchical policy and the flat baseline.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{CheckpointMeta, Exploration, FlatPolicy, Hierarchy, Policy, PolicyKind};
use crate::classifier::ClassifierConfig;
use crate::datagen::Goal;
use crate::domain::Ontology;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, EvalReport};
use crate::policy::AgentConfig;
use crate::rng::{stream, Stream};
use crate::simulator::EpisodeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub master: AgentConfig,
    pub worker: AgentConfig,
    pub classifier: ClassifierConfig,
    pub flat: AgentConfig,
    pub episode: EpisodeConfig,
    /// Workers replay every this many epochs.
    pub worker_period: usize,
    /// The classifier is refit every this many epochs.
    pub classifier_period: usize,
    /// Training goals used for the per-epoch greedy evaluation.
    pub eval_sample: usize,
    /// Empty all replay buffers whenever the evaluation sets a new best.
    pub flush_on_best: bool,
    pub seed: u64,
    pub jobs: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            episodes_per_epoch: 100,
            master: AgentConfig::default(),
            worker: AgentConfig::default(),
            classifier: ClassifierConfig::default(),
            flat: AgentConfig::default(),
            episode: EpisodeConfig::default(),
            worker_period: 10,
            classifier_period: 10,
            eval_sample: 500,
            flush_on_best: true,
            seed: 0,
            jobs: 1,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.worker_period == 0 || self.classifier_period == 0 {
            return Err(Error::InvalidConfig("update periods must be at least 1".into()));
        }
        if self.episodes_per_epoch == 0 {
            return Err(Error::InvalidConfig("episodes_per_epoch must be at least 1".into()));
        }
        self.master.validate()?;
        self.worker.validate()?;
        self.flat.validate()?;
        self.episode.validate()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// One row of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub success: f64,
    pub avg_reward: f64,
    pub avg_turns: f64,
    /// Mean replay loss of the epoch's master (or flat agent) pass.
    pub loss: Option<f64>,
}

pub fn curves_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("epoch,success,avg_reward,avg_turns,loss\n");
    for p in points {
        let loss = p.loss.map(|l| l.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{},{}\n", p.epoch, p.success, p.avg_reward, p.avg_turns, loss));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last epoch.
    pub policy: Policy,
    /// Parameters of the epoch with the best evaluation.
    pub best_policy: Option<Policy>,
    pub curves: Vec<CurvePoint>,
    pub best_epoch: Option<usize>,
    pub best_success: f64,
}

/// Fixed sample of training goals for the per-epoch evaluation.
pub fn eval_subset(goals: &[Goal], size: usize, seed: u64) -> Vec<Goal> {
    if goals.len() <= size {
        return goals.to_vec();
    }
    let mut idx = rand::seq::index::sample(&mut stream(seed, Stream::Eval, 0), goals.len(), size).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| goals[i].clone()).collect()
}

/// Runs `f` on every index with its own rollout stream, in index order.
fn map_episodes<T, F>(jobs: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

fn meta(config: &TrainConfig, kind: PolicyKind, epoch: usize, curves: &[CurvePoint]) -> CheckpointMeta {
    CheckpointMeta {
        kind,
        epoch,
        success_history: curves.iter().map(|c| c.success).collect(),
        master: if kind == PolicyKind::Flat { config.flat.clone() } else { config.master.clone() },
        worker: config.worker.clone(),
        classifier: config.classifier.clone(),
        episode: config.episode,
        seed: config.seed,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains the master, the workers and the classifier jointly.
pub fn train(config: &TrainConfig, ontology: &Ontology, goals: &[Goal]) -> Result<TrainOutcome> {
    config.validate()?;
    let hier = Hierarchy::new(ontology.clone(), &config.master, &config.worker, &config.classifier, config.seed)?;
    run(config, Policy::Hierarchical(hier), goals)
}

/// Trains the single-level baseline agent.
pub fn train_flat(config: &TrainConfig, ontology: &Ontology, goals: &[Goal]) -> Result<TrainOutcome> {
    config.validate()?;
    let flat = FlatPolicy::new(ontology.clone(), &config.flat, config.seed)?;
    run(config, Policy::Flat(flat), goals)
}

fn run(config: &TrainConfig, mut policy: Policy, goals: &[Goal]) -> Result<TrainOutcome> {
    if goals.is_empty() {
        return Err(Error::EmptyGoalSource);
    }
    let kind = policy.kind();
    let seed = config.seed;
    let ep = config.episode;
    let per_epoch = config.episodes_per_epoch;
    let eval_goals = eval_subset(goals, config.eval_sample, seed);
    let h = policy.ontology().num_groups() as u64;
    let mut curves: Vec<CurvePoint> = Vec::with_capacity(config.epochs);
    let mut best = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut best_policy = None;
    if let Some(dir) = &config.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    for epoch in 1..=config.epochs {
        let base = ((epoch - 1) * per_epoch) as u64;
        let pick = |i: usize| {
            let mut rng = stream(seed, Stream::Rollout, base + i as u64);
            let goal = &goals[rng.gen_range(0..goals.len())];
            (goal, rng)
        };
        let loss = match &mut policy {
            Policy::Hierarchical(hier) => {
                let explore = Exploration { master: config.master.epsilon, worker: config.worker.epsilon, mask_known: false };
                let rollouts = {
                    let hier = &*hier;
                    map_episodes(config.jobs, per_epoch, |i| {
                        let (goal, mut rng) = pick(i);
                        hier.run_episode(goal, &ep, explore, true, &mut rng)
                    })?
                };
                for r in rollouts {
                    for t in r.master {
                        hier.master.buffer.push(t);
                    }
                    for (g, t) in r.workers {
                        hier.workers[g.0].buffer.push(t);
                    }
                    for p in r.pairs {
                        hier.classifier.pairs.push(p);
                    }
                }
                let replay_base = (epoch as u64) * (h + 1);
                let loss = hier.master.replay_pass(ep.master_gamma, &mut stream(seed, Stream::Replay, replay_base))?;
                if epoch % config.worker_period == 0 {
                    for (g, w) in hier.workers.iter_mut().enumerate() {
                        w.replay_pass(ep.worker_gamma, &mut stream(seed, Stream::Replay, replay_base + 1 + g as u64))?;
                    }
                }
                if epoch % config.classifier_period == 0 {
                    if let Some(l) = hier.classifier.refit(&mut stream(seed, Stream::Dropout, epoch as u64))? {
                        info!(target: "train", "epoch {epoch}: classifier refit on {} pairs, loss {l:.4}", hier.classifier.pairs.len());
                    }
                }
                loss
            }
            Policy::Flat(flat) => {
                let explore = Exploration { master: config.flat.epsilon, worker: 0.0, mask_known: false };
                let rollouts = {
                    let flat = &*flat;
                    map_episodes(config.jobs, per_epoch, |i| {
                        let (goal, mut rng) = pick(i);
                        flat.run_episode(goal, &ep, explore, true, &mut rng)
                    })?
                };
                for r in rollouts {
                    for t in r.transitions {
                        flat.agent.buffer.push(t);
                    }
                }
                flat.agent.replay_pass(ep.master_gamma, &mut stream(seed, Stream::Replay, epoch as u64))?
            }
        };

        let (report, _) = evaluate(&policy, &eval_goals, &ep, false, config.jobs)?;
        let point = curve_point(epoch, &report, loss);
        info!(
            target: "train",
            "epoch {epoch}: success {:.4} reward {:.4} turns {:.3} loss {}",
            point.success,
            point.avg_reward,
            point.avg_turns,
            loss.map(|l| format!("{l:.5}")).unwrap_or_else(|| "-".into())
        );
        curves.push(point);
        if report.success_rate > best {
            best = report.success_rate;
            best_epoch = Some(epoch);
            if config.flush_on_best {
                match &mut policy {
                    Policy::Hierarchical(hier) => hier.flush_buffers(),
                    Policy::Flat(flat) => flat.agent.buffer.flush(),
                }
            }
            if let Some(dir) = &config.checkpoint_dir {
                policy.save(dir.join("best"), &meta(config, kind, epoch, &curves))?;
            }
            best_policy = Some(policy.clone());
        }
        if let Some(dir) = &config.checkpoint_dir {
            write_file(&dir.join("curves.csv"), &curves_csv(&curves))?;
        }
    }

    if let Some(dir) = &config.checkpoint_dir {
        policy.save(dir.join("checkpoint"), &meta(config, kind, config.epochs, &curves))?;
    }
    if best_epoch.is_none() {
        warn!(target: "train", "no epochs were run");
    }
    Ok(TrainOutcome { policy, best_policy, curves, best_epoch, best_success: best })
}

fn curve_point(epoch: usize, report: &EvalReport, loss: Option<f64>) -> CurvePoint {
    CurvePoint {
        epoch,
        success: report.success_rate,
        avg_reward: report.average_reward.unwrap_or(0.0),
        avg_turns: report.average_turns.unwrap_or(0.0),
        loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, ConditionalProbabilityTable};

    fn tiny() -> (Ontology, Vec<Goal>, TrainConfig) {
        let cpt = ConditionalProbabilityTable::toy();
        let onto = cpt.ontology().clone();
        let goals = Goal::resolve_all(&generate_dataset(&cpt, 10, 2).unwrap().goals, &onto).unwrap();
        let small = AgentConfig { hidden: vec![16], batch_size: 16, ..Default::default() };
        let config = TrainConfig {
            epochs: 4,
            episodes_per_epoch: 20,
            master: small.clone(),
            worker: small.clone(),
            flat: small,
            classifier: ClassifierConfig { hidden: vec![16], ..Default::default() },
            worker_period: 2,
            classifier_period: 2,
            eval_sample: 30,
            seed: 5,
            ..Default::default()
        };
        (onto, goals, config)
    }

    #[test]
    fn runs_are_reproducible_and_job_independent() {
        let (onto, goals, config) = tiny();
        let a = train(&config, &onto, &goals).unwrap();
        let b = train(&config, &onto, &goals).unwrap();
        let c = train(&TrainConfig { jobs: 3, ..config.clone() }, &onto, &goals).unwrap();
        assert_eq!(a.curves, b.curves);
        assert_eq!(a.curves, c.curves);
        assert_eq!(a.curves.len(), 4);
        let f1 = train_flat(&config, &onto, &goals).unwrap();
        let f2 = train_flat(&TrainConfig { jobs: 2, ..config }, &onto, &goals).unwrap();
        assert_eq!(f1.curves, f2.curves);
    }

    #[test]
    fn buffers_are_empty_after_a_best_epoch() {
        let (onto, goals, config) = tiny();
        let config = TrainConfig { epochs: 1, ..config };
        let out = train(&config, &onto, &goals).unwrap();
        assert_eq!(out.best_epoch, Some(1));
        match out.policy {
            Policy::Hierarchical(h) => {
                assert!(h.master.buffer.is_empty());
                assert!(h.workers.iter().all(|w| w.buffer.is_empty()));
                assert!(!h.classifier.pairs.is_empty());
            }
            Policy::Flat(_) => unreachable!(),
        }
    }

    #[test]
    fn checkpoints_and_curves_are_written() {
        let (onto, goals, config) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let config = TrainConfig { checkpoint_dir: Some(dir.path().to_path_buf()), ..config };
        let out = train(&config, &onto, &goals).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(dir.path().join("best/meta.json").exists());
        let (loaded, meta) = Policy::load(dir.path().join("checkpoint")).unwrap();
        assert_eq!(meta.epoch, 4);
        let eval = eval_subset(&goals, config.eval_sample, config.seed);
        let (report, _) = evaluate(&loaded, &eval, &config.episode, false, 1).unwrap();
        assert_eq!(report.success_rate, out.curves.last().unwrap().success);
    }

    #[test]
    fn config_json_defaults() {
        let c = TrainConfig::from_json_str(r#"{"epochs": 3, "master": {"epsilon": 0.2}}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.master.epsilon, 0.2);
        assert_eq!(c.master.gamma, 0.95);
        assert_eq!(c.worker_period, 10);
        assert!(TrainConfig { worker_period: 0, ..Default::default() }.validate().is_err());
    }
}
