//! Policy bundles (hierarchical and flat), episode rollouts with traces, and
//! checkpoint directories.

use std::path::Path;

use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, DiseaseClassifier, LabeledState};
use crate::datagen::Goal;
use crate::domain::{extract_worker_state, DiseaseId, GroupId, MasterAction, Ontology, SymptomStatus, WorkerAction};
use crate::error::{Error, Result};
use crate::neuralnet::DenseNet;
use crate::policy::{
    accumulate_master_reward, flat_action, greedy_masked, select_action, AgentConfig, DqnAgent, FlatTransition,
    MasterTransition, WorkerTransition,
};
use crate::rng::{stream, Stream};
use crate::simulator::{
    intrinsic_reward, shaped_reward, subtask_status, Dialogue, EnvAction, EpisodeConfig, EpisodeStatus, SubtaskStatus,
};

/// Who produced a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Worker(GroupId),
    Classifier,
    /// The single policy of the flat agent.
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub actor: Actor,
    pub action: EnvAction,
    pub answer: Option<SymptomStatus>,
    /// Raw extrinsic reward.
    pub reward: f64,
    pub shaped_reward: f64,
    pub intrinsic_reward: Option<f64>,
    /// Request answered True on one of the goal's implicit symptoms.
    pub implicit_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRecord {
    pub group: GroupId,
    pub turns: usize,
    /// `Ongoing` when the episode ended first.
    pub status: SubtaskStatus,
    pub intrinsic_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub disease: DiseaseId,
    pub group: GroupId,
    pub turns: Vec<TurnRecord>,
    pub subtasks: Vec<SubtaskRecord>,
    pub status: EpisodeStatus,
    pub diagnosis: Option<DiseaseId>,
}

impl EpisodeTrace {
    fn new(goal: &Goal) -> Self {
        EpisodeTrace {
            disease: goal.disease,
            group: goal.group,
            turns: Vec::new(),
            subtasks: Vec::new(),
            status: EpisodeStatus::Ongoing,
            diagnosis: None,
        }
    }

    pub fn num_turns(&self) -> usize {
        self.turns.len()
    }

    pub fn total_reward(&self) -> f64 {
        self.turns.iter().map(|t| t.reward).sum()
    }

    /// `sum_t gamma^t r_t` with turns counted from 1.
    pub fn discounted_reward(&self, gamma: f64) -> f64 {
        self.turns.iter().map(|t| gamma.powi(t.turn as i32) * t.reward).sum()
    }

    pub fn is_success(&self) -> bool {
        self.status == EpisodeStatus::SuccessDiagnosis
    }

    /// Replays the recorded actions against a fresh dialogue on `goal`.
    pub fn replay<'g>(&self, goal: &'g Goal, num_symptoms: usize, max_turns: usize) -> Result<Dialogue<'g>> {
        let mut d = Dialogue::start(goal, num_symptoms, max_turns);
        for t in &self.turns {
            d.step(t.action)?;
        }
        Ok(d)
    }
}

/// Exploration rates for one rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exploration {
    pub master: f64,
    pub worker: f64,
    /// Greedy choices skip already-known symptoms.
    pub mask_known: bool,
}

impl Exploration {
    pub fn greedy(mask_known: bool) -> Self {
        Exploration { master: 0.0, worker: 0.0, mask_known }
    }
}

fn choose<R: Rng + ?Sized>(q: &[f64], epsilon: f64, allowed: Option<&[bool]>, rng: &mut R) -> usize {
    match allowed {
        Some(mask) if epsilon == 0.0 => greedy_masked(q, mask),
        _ => select_action(q, epsilon, rng),
    }
}

#[derive(Debug, Clone, Default)]
pub struct HierarchicalRollout {
    pub trace: Option<EpisodeTrace>,
    pub master: Vec<MasterTransition>,
    pub workers: Vec<(GroupId, WorkerTransition)>,
    pub pairs: Vec<LabeledState>,
}

/// Master, one worker per group and the disease classifier.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub ontology: Ontology,
    pub master: DqnAgent<MasterTransition>,
    pub workers: Vec<DqnAgent<WorkerTransition>>,
    pub classifier: DiseaseClassifier,
}

impl Hierarchy {
    pub fn new(
        ontology: Ontology,
        master: &AgentConfig,
        worker: &AgentConfig,
        classifier: &ClassifierConfig,
        seed: u64,
    ) -> Result<Self> {
        let h = ontology.num_groups();
        let width = ontology.state_width();
        let master = DqnAgent::new(width, h + 1, master.clone(), &mut stream(seed, Stream::Init, 0))?;
        let workers = (0..h)
            .map(|g| {
                let n = ontology.group_symptoms(GroupId(g)).len();
                DqnAgent::new(3 * n, n, worker.clone(), &mut stream(seed, Stream::Init, 1 + g as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let classifier = DiseaseClassifier::new(
            width,
            ontology.num_diseases(),
            classifier.clone(),
            &mut stream(seed, Stream::Init, 1 + h as u64),
        )?;
        Ok(Hierarchy { ontology, master, workers, classifier })
    }

    pub fn flush_buffers(&mut self) {
        self.master.buffer.flush();
        for w in &mut self.workers {
            w.buffer.flush();
        }
    }

    /// Plays one episode. Transitions are collected only when `collect` is
    /// set; the classifier is never updated here.
    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        goal: &Goal,
        config: &EpisodeConfig,
        explore: Exploration,
        collect: bool,
        rng: &mut R,
    ) -> Result<HierarchicalRollout> {
        let onto = &self.ontology;
        let h = onto.num_groups();
        let (lambda, gamma) = (config.shaping_lambda, config.master_gamma);
        let mut dialogue = Dialogue::start(goal, onto.num_symptoms(), config.max_turns);
        let mut trace = EpisodeTrace::new(goal);
        let mut out = HierarchicalRollout::default();
        while !dialogue.status().is_terminal() {
            let state = dialogue.state().clone();
            let q = self.master.q_values(state.as_slice())?;
            let a = select_action(&q, explore.master, rng);
            match MasterAction::from_index(a, h).expect("master output width is h + 1") {
                MasterAction::InvokeClassifier => {
                    let (_, disease) = self.classifier.classify(state.as_slice())?;
                    let step = dialogue.step(EnvAction::Inform(disease))?;
                    let shaped = shaped_reward(step.reward, &state, dialogue.state(), true, lambda, gamma);
                    trace.diagnosis = Some(disease);
                    trace.turns.push(TurnRecord {
                        turn: dialogue.turn(),
                        actor: Actor::Classifier,
                        action: EnvAction::Inform(disease),
                        answer: None,
                        reward: step.reward,
                        shaped_reward: shaped,
                        intrinsic_reward: None,
                        implicit_hit: false,
                    });
                    if collect {
                        out.master.push(MasterTransition {
                            state: state.as_slice().to_vec(),
                            action: a,
                            reward: shaped,
                            next_state: dialogue.state().as_slice().to_vec(),
                            steps: 1,
                            terminal: true,
                        });
                        out.pairs.push(LabeledState { state: state.into_vec(), disease: goal.disease });
                    }
                }
                MasterAction::InvokeWorker(g) => {
                    let worker = &self.workers[g.0];
                    let mut shaped_rewards = Vec::new();
                    let mut intrinsic_total = 0.0;
                    let mut sub;
                    let mut k = 0;
                    loop {
                        k += 1;
                        let before = dialogue.state().clone();
                        let ws = extract_worker_state(&before, g, onto)?;
                        let q = worker.q_values(&ws)?;
                        let mask: Option<Vec<bool>> = explore.mask_known.then(|| {
                            onto.group_symptoms(g).iter().map(|&s| !dialogue.is_known(s)).collect()
                        });
                        let slot = choose(&q, explore.worker, mask.as_deref(), rng);
                        let act = WorkerAction::from_slot(onto, g, slot)?;
                        let step = dialogue.step(EnvAction::Request(act.symptom))?;
                        let ended = step.status.is_terminal();
                        let r_i = intrinsic_reward(step.answer, step.repeated, k, config.max_subtask_turns);
                        sub = subtask_status(step.answer, step.repeated, k, config.max_subtask_turns);
                        let shaped = shaped_reward(step.reward, &before, dialogue.state(), ended, lambda, gamma);
                        shaped_rewards.push(shaped);
                        intrinsic_total += r_i;
                        trace.turns.push(TurnRecord {
                            turn: dialogue.turn(),
                            actor: Actor::Worker(g),
                            action: EnvAction::Request(act.symptom),
                            answer: step.answer,
                            reward: step.reward,
                            shaped_reward: shaped,
                            intrinsic_reward: Some(r_i),
                            implicit_hit: step.answer == Some(SymptomStatus::True) && goal.is_implicit_true(act.symptom),
                        });
                        let sub_end = sub != SubtaskStatus::Ongoing || ended;
                        if collect {
                            out.workers.push((
                                g,
                                WorkerTransition {
                                    state: ws,
                                    action: slot,
                                    reward: r_i,
                                    next_state: extract_worker_state(dialogue.state(), g, onto)?,
                                    terminal: sub_end,
                                },
                            ));
                        }
                        if sub_end {
                            break;
                        }
                    }
                    trace.subtasks.push(SubtaskRecord { group: g, turns: k, status: sub, intrinsic_reward: intrinsic_total });
                    let ended = dialogue.status().is_terminal();
                    if collect {
                        out.master.push(MasterTransition {
                            state: state.into_vec(),
                            action: a,
                            reward: accumulate_master_reward(&shaped_rewards, gamma),
                            next_state: dialogue.state().as_slice().to_vec(),
                            steps: k,
                            terminal: ended,
                        });
                        if ended {
                            out.pairs.push(LabeledState { state: dialogue.state().as_slice().to_vec(), disease: goal.disease });
                        }
                    }
                }
            }
        }
        trace.status = dialogue.status();
        out.trace = Some(trace);
        Ok(out)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FlatRollout {
    pub trace: Option<EpisodeTrace>,
    pub transitions: Vec<FlatTransition>,
}

/// One DQN over symptom requests and disease informs.
#[derive(Debug, Clone)]
pub struct FlatPolicy {
    pub ontology: Ontology,
    pub agent: DqnAgent<FlatTransition>,
}

impl FlatPolicy {
    pub fn new(ontology: Ontology, config: &AgentConfig, seed: u64) -> Result<Self> {
        let agent = DqnAgent::new(
            ontology.state_width(),
            ontology.num_symptoms() + ontology.num_diseases(),
            config.clone(),
            &mut stream(seed, Stream::Init, 0),
        )?;
        Ok(FlatPolicy { ontology, agent })
    }

    pub fn run_episode<R: Rng + ?Sized>(
        &self,
        goal: &Goal,
        config: &EpisodeConfig,
        explore: Exploration,
        collect: bool,
        rng: &mut R,
    ) -> Result<FlatRollout> {
        let onto = &self.ontology;
        let (ns, nd) = (onto.num_symptoms(), onto.num_diseases());
        let mut dialogue = Dialogue::start(goal, ns, config.max_turns);
        let mut trace = EpisodeTrace::new(goal);
        let mut out = FlatRollout::default();
        while !dialogue.status().is_terminal() {
            let state = dialogue.state().clone();
            let q = self.agent.q_values(state.as_slice())?;
            let mask: Option<Vec<bool>> = explore.mask_known.then(|| {
                (0..ns + nd).map(|i| i >= ns || !dialogue.is_known(crate::domain::SymptomId(i))).collect()
            });
            let a = choose(&q, explore.master, mask.as_deref(), rng);
            let action = flat_action(a, ns, nd)?;
            let step = dialogue.step(action)?;
            let ended = step.status.is_terminal();
            let shaped = shaped_reward(
                step.reward,
                &state,
                dialogue.state(),
                ended,
                config.shaping_lambda,
                config.master_gamma,
            );
            if let EnvAction::Inform(d) = action {
                trace.diagnosis = Some(d);
            }
            trace.turns.push(TurnRecord {
                turn: dialogue.turn(),
                actor: Actor::Agent,
                action,
                answer: step.answer,
                reward: step.reward,
                shaped_reward: shaped,
                intrinsic_reward: None,
                implicit_hit: match action {
                    EnvAction::Request(s) => step.answer == Some(SymptomStatus::True) && goal.is_implicit_true(s),
                    EnvAction::Inform(_) => false,
                },
            });
            if collect {
                out.transitions.push(FlatTransition {
                    state: state.into_vec(),
                    action: a,
                    reward: shaped,
                    next_state: dialogue.state().as_slice().to_vec(),
                    terminal: ended,
                });
            }
        }
        trace.status = dialogue.status();
        out.trace = Some(trace);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Hierarchical,
    Flat,
}

/// Sidecar stored next to the network files of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: PolicyKind,
    pub epoch: usize,
    pub success_history: Vec<f64>,
    pub master: AgentConfig,
    pub worker: AgentConfig,
    pub classifier: ClassifierConfig,
    pub episode: EpisodeConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum Policy {
    Hierarchical(Hierarchy),
    Flat(FlatPolicy),
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Policy::Hierarchical(_) => PolicyKind::Hierarchical,
            Policy::Flat(_) => PolicyKind::Flat,
        }
    }

    pub fn ontology(&self) -> &Ontology {
        match self {
            Policy::Hierarchical(p) => &p.ontology,
            Policy::Flat(p) => &p.ontology,
        }
    }

    /// Greedy episode trace.
    pub fn run_greedy(&self, goal: &Goal, config: &EpisodeConfig, mask_known: bool) -> Result<EpisodeTrace> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let explore = Exploration::greedy(mask_known);
        let trace = match self {
            Policy::Hierarchical(p) => p.run_episode(goal, config, explore, false, &mut rng)?.trace,
            Policy::Flat(p) => p.run_episode(goal, config, explore, false, &mut rng)?.trace,
        };
        Ok(trace.expect("rollouts always produce a trace"))
    }

    /// Writes `meta.json`, `ontology.json` and one `.bin` per network.
    pub fn save(&self, dir: impl AsRef<Path>, meta: &CheckpointMeta) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_json(&dir.join("meta.json"), meta)?;
        self.ontology().save(dir.join("ontology.json"))?;
        match self {
            Policy::Hierarchical(p) => {
                p.master.net().save(Some(p.master.optimizer()), dir.join("master.bin"))?;
                for (i, w) in p.workers.iter().enumerate() {
                    w.net().save(Some(w.optimizer()), dir.join(format!("worker_{i}.bin")))?;
                }
                p.classifier.net().save(Some(p.classifier.optimizer()), dir.join("classifier.bin"))?;
            }
            Policy::Flat(p) => p.agent.net().save(Some(p.agent.optimizer()), dir.join("flat.bin"))?,
        }
        info!(target: "checkpoint", "saved {} checkpoint to {}", match meta.kind {
            PolicyKind::Hierarchical => "hierarchical",
            PolicyKind::Flat => "flat",
        }, dir.display());
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Policy, CheckpointMeta)> {
        let dir = dir.as_ref();
        let meta_path = dir.join("meta.json");
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::json(&meta_path, e))?;
        let ontology = Ontology::load(dir.join("ontology.json"))?;
        let check = |net: &DenseNet, inputs: usize, outputs: usize, path: &Path| -> Result<()> {
            if net.spec().input_width() != inputs || net.spec().output_width() != outputs {
                return Err(Error::Checkpoint {
                    path: path.to_path_buf(),
                    reason: format!(
                        "network is {}x{}, ontology needs {inputs}x{outputs}",
                        net.spec().input_width(),
                        net.spec().output_width()
                    ),
                });
            }
            Ok(())
        };
        let width = ontology.state_width();
        let policy = match meta.kind {
            PolicyKind::Hierarchical => {
                let h = ontology.num_groups();
                let path = dir.join("master.bin");
                let (net, opt) = DenseNet::load(&path)?;
                check(&net, width, h + 1, &path)?;
                let master = DqnAgent::from_parts(net, opt, meta.master.clone());
                let mut workers = Vec::with_capacity(h);
                for g in 0..h {
                    let path = dir.join(format!("worker_{g}.bin"));
                    let (net, opt) = DenseNet::load(&path)?;
                    let n = ontology.group_symptoms(GroupId(g)).len();
                    check(&net, 3 * n, n, &path)?;
                    workers.push(DqnAgent::from_parts(net, opt, meta.worker.clone()));
                }
                let path = dir.join("classifier.bin");
                let (net, opt) = DenseNet::load(&path)?;
                check(&net, width, ontology.num_diseases(), &path)?;
                let classifier = DiseaseClassifier::from_parts(net, opt, meta.classifier.clone());
                Policy::Hierarchical(Hierarchy { ontology, master, workers, classifier })
            }
            PolicyKind::Flat => {
                let path = dir.join("flat.bin");
                let (net, opt) = DenseNet::load(&path)?;
                check(&net, width, ontology.num_symptoms() + ontology.num_diseases(), &path)?;
                let agent = DqnAgent::from_parts(net, opt, meta.master.clone());
                Policy::Flat(FlatPolicy { ontology, agent })
            }
        };
        Ok((policy, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, ConditionalProbabilityTable};
    use crate::policy::Transition;

    fn small() -> AgentConfig {
        AgentConfig { hidden: vec![16], ..Default::default() }
    }

    fn setup() -> (Hierarchy, Vec<Goal>) {
        let cpt = ConditionalProbabilityTable::toy();
        let onto = cpt.ontology().clone();
        let goals = Goal::resolve_all(&generate_dataset(&cpt, 5, 1).unwrap().goals, &onto).unwrap();
        let clf = ClassifierConfig { hidden: vec![16], ..Default::default() };
        (Hierarchy::new(onto, &small(), &small(), &clf, 7).unwrap(), goals)
    }

    #[test]
    fn hierarchical_rollout_invariants() {
        let (hier, goals) = setup();
        let config = EpisodeConfig::default();
        let explore = Exploration { master: 0.5, worker: 0.5, mask_known: false };
        let mut rng = stream(1, Stream::Rollout, 0);
        for goal in goals.iter().cycle().take(200) {
            let out = hier.run_episode(goal, &config, explore, true, &mut rng).unwrap();
            let trace = out.trace.unwrap();
            assert!(trace.status.is_terminal());
            assert!(trace.num_turns() <= config.max_turns);
            let steps: usize = out.master.iter().map(|t| t.steps).sum();
            assert_eq!(steps, trace.num_turns());
            assert!(out.master.last().unwrap().terminal);
            assert!(out.master[..out.master.len() - 1].iter().all(|t| !t.terminal));
            for t in &out.master {
                if t.action == hier.ontology.num_groups() {
                    assert_eq!(t.steps, 1);
                }
            }
            for (_, w) in &out.workers {
                assert!([-1.0, 0.0, 1.0].contains(&w.reward));
            }
            // exact option rewards: rebuild each subtask's shaped sequence
            let mut cursor = 0;
            for t in &out.master {
                let shaped: Vec<f64> = trace.turns[cursor..cursor + t.steps].iter().map(|r| r.shaped_reward).collect();
                if t.action < hier.ontology.num_groups() {
                    assert_eq!(t.reward, accumulate_master_reward(&shaped, config.master_gamma));
                } else {
                    assert_eq!(t.reward, shaped[0]);
                }
                cursor += t.steps;
            }
            assert!(out.pairs.iter().all(|p| p.disease == goal.disease));
            assert_eq!(out.pairs.len(), 1);
            let replayed = trace.replay(goal, hier.ontology.num_symptoms(), config.max_turns).unwrap();
            assert_eq!(replayed.status(), trace.status);
            assert_eq!(out.master.last().unwrap().next_state(), replayed.state().as_slice());
        }
    }

    #[test]
    fn flat_rollout_and_turn_one_diagnosis() {
        let (hier, goals) = setup();
        let mut flat = FlatPolicy::new(hier.ontology.clone(), &small(), 3).unwrap();
        let config = EpisodeConfig::default();
        let ns = flat.ontology.num_symptoms();
        // bias the output layer so informing the goal disease dominates
        let last = flat.agent.net_mut().layers_mut().last_mut().unwrap();
        last.bias[ns + goals[0].disease.0] = 100.0;
        let policy = Policy::Flat(flat);
        let trace = policy.run_greedy(&goals[0], &config, false).unwrap();
        assert_eq!(trace.num_turns(), 1);
        assert_eq!(trace.status, EpisodeStatus::SuccessDiagnosis);
        assert_eq!(trace.total_reward(), 1.0);
        assert!((trace.discounted_reward(0.95) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn greedy_rollouts_are_deterministic() {
        let (hier, goals) = setup();
        let policy = Policy::Hierarchical(hier);
        let config = EpisodeConfig::default();
        for goal in &goals {
            assert_eq!(policy.run_greedy(goal, &config, false).unwrap(), policy.run_greedy(goal, &config, false).unwrap());
        }
    }

    #[test]
    fn masked_greedy_never_repeats() {
        let (hier, goals) = setup();
        let policy = Policy::Hierarchical(hier);
        let config = EpisodeConfig::default();
        for goal in &goals {
            let trace = policy.run_greedy(goal, &config, true).unwrap();
            assert_ne!(trace.status, EpisodeStatus::RepeatedAction);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (hier, goals) = setup();
        let dir = tempfile::tempdir().unwrap();
        let meta = CheckpointMeta {
            kind: PolicyKind::Hierarchical,
            epoch: 3,
            success_history: vec![0.1, 0.2],
            master: small(),
            worker: small(),
            classifier: ClassifierConfig { hidden: vec![16], ..Default::default() },
            episode: EpisodeConfig::default(),
            seed: 7,
        };
        let policy = Policy::Hierarchical(hier);
        policy.save(dir.path(), &meta).unwrap();
        let (loaded, meta2) = Policy::load(dir.path()).unwrap();
        assert_eq!(meta, meta2);
        let config = EpisodeConfig::default();
        for goal in &goals {
            assert_eq!(policy.run_greedy(goal, &config, false).unwrap(), loaded.run_greedy(goal, &config, false).unwrap());
        }
        std::fs::remove_file(dir.path().join("worker_1.bin")).unwrap();
        assert!(Policy::load(dir.path()).is_err());
    }
}
