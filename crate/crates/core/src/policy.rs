//! DQN machinery shared by the master, the workers and the flat baseline.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DiseaseId, SymptomId};
use crate::error::{Error, Result};
use crate::neuralnet::{DenseNet, DenseNetSpec, Head, Mode, Optimizer, OptimizerKind};
use crate::simulator::EnvAction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub optimizer: OptimizerKind,
    /// Greedy evaluation skips actions whose symptom is already known.
    pub mask_known: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            epsilon: 0.1,
            gamma: 0.95,
            learning_rate: 0.0005,
            buffer_capacity: 10_000,
            batch_size: 32,
            hidden: vec![512, 512],
            dropout: 0.5,
            optimizer: OptimizerKind::default(),
            mask_known: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("buffer capacity and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn net_spec(&self, inputs: usize, outputs: usize, head: Head) -> Result<DenseNetSpec> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(inputs);
        widths.extend_from_slice(&self.hidden);
        widths.push(outputs);
        DenseNetSpec::new(widths, self.dropout, head)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice: one uniform draw decides explore/exploit, a second
/// draw picks the exploratory action.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], epsilon: f64, rng: &mut R) -> usize {
    assert!(!q_values.is_empty(), "empty action space");
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Greedy choice restricted to `allowed` actions; falls back to the plain
/// argmax when nothing is allowed.
pub fn greedy_masked(q_values: &[f64], allowed: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (i, (&q, &ok)) in q_values.iter().zip(allowed).enumerate() {
        if ok && best.is_none_or(|b| q > q_values[b]) {
            best = Some(i);
        }
    }
    best.unwrap_or_else(|| argmax(q_values))
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    entries: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, entries: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, item: T) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(item);
    }

    pub fn flush(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.entries.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }

    /// Uniform indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| rng.gen_range(0..self.entries.len())).collect()
    }
}

/// Common view of a stored transition for Q-learning updates.
pub trait Transition {
    fn state(&self) -> &[f64];
    fn action(&self) -> usize;
    fn reward(&self) -> f64;
    fn next_state(&self) -> &[f64];
    /// Multiplier of the bootstrapped value, `None` for terminal transitions.
    fn bootstrap(&self, gamma: f64) -> Option<f64>;
}

/// `(s, a^m, r^m, s_{t+N})` with the number of turns `N` the option lasted.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterTransition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub steps: usize,
    pub terminal: bool,
}

impl Transition for MasterTransition {
    fn state(&self) -> &[f64] {
        &self.state
    }
    fn action(&self) -> usize {
        self.action
    }
    fn reward(&self) -> f64 {
        self.reward
    }
    fn next_state(&self) -> &[f64] {
        &self.next_state
    }
    fn bootstrap(&self, gamma: f64) -> Option<f64> {
        (!self.terminal).then(|| gamma.powi(self.steps as i32))
    }
}

/// One-step transition (workers and the flat agent).
#[derive(Debug, Clone, PartialEq)]
pub struct StepTransition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

pub type WorkerTransition = StepTransition;
pub type FlatTransition = StepTransition;

impl Transition for StepTransition {
    fn state(&self) -> &[f64] {
        &self.state
    }
    fn action(&self) -> usize {
        self.action
    }
    fn reward(&self) -> f64 {
        self.reward
    }
    fn next_state(&self) -> &[f64] {
        &self.next_state
    }
    fn bootstrap(&self, gamma: f64) -> Option<f64> {
        (!self.terminal).then_some(gamma)
    }
}

/// Discounted option reward `sum_{k=1..N} gamma^k r_k`.
pub fn accumulate_master_reward(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for r in rewards {
        discount *= gamma;
        total += discount * r;
    }
    total
}

fn max_q(net: &DenseNet, state: &[f64]) -> Result<f64> {
    Ok(net.predict(state)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// SMDP target `r^m + gamma^N max_a' Q^-(s', a')`.
pub fn master_target(tr: &MasterTransition, target: &DenseNet, gamma: f64) -> Result<f64> {
    match tr.bootstrap(gamma) {
        None => Ok(tr.reward),
        Some(k) => Ok(tr.reward + k * max_q(target, &tr.next_state)?),
    }
}

/// Worker target `r^i + gamma_w max_a' Q^-(s', a')`.
pub fn worker_target(tr: &WorkerTransition, target: &DenseNet, gamma: f64) -> Result<f64> {
    match tr.bootstrap(gamma) {
        None => Ok(tr.reward),
        Some(k) => Ok(tr.reward + k * max_q(target, &tr.next_state)?),
    }
}

/// A Q-network with its frozen target copy, optimizer and replay buffer.
#[derive(Debug, Clone)]
pub struct DqnAgent<T> {
    pub config: AgentConfig,
    current: DenseNet,
    target: DenseNet,
    optimizer: Optimizer,
    pub buffer: ReplayBuffer<T>,
}

impl<T: Transition> DqnAgent<T> {
    pub fn new<R: Rng + ?Sized>(inputs: usize, actions: usize, config: AgentConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let net = DenseNet::new(config.net_spec(inputs, actions, Head::Linear)?, rng)?;
        Ok(Self::from_parts(net, None, config))
    }

    pub fn from_parts(net: DenseNet, optimizer: Option<Optimizer>, config: AgentConfig) -> Self {
        let optimizer = optimizer.unwrap_or_else(|| Optimizer::new(config.optimizer, config.learning_rate));
        DqnAgent {
            target: net.clone(),
            current: net,
            optimizer,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            config,
        }
    }

    pub fn net(&self) -> &DenseNet {
        &self.current
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        &mut self.current
    }

    pub fn target_net(&self) -> &DenseNet {
        &self.target
    }

    pub fn optimizer(&self) -> &Optimizer {
        &self.optimizer
    }

    pub fn num_actions(&self) -> usize {
        self.current.spec().output_width()
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.current.predict(state)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        Ok(select_action(&self.q_values(state)?, epsilon, rng))
    }

    /// Target network becomes a deep copy of the current network.
    pub fn sync_target(&mut self) {
        self.target = self.current.clone();
    }

    /// One mini-batch update against the frozen target network.
    pub fn replay_update<R: Rng + ?Sized>(&mut self, gamma: f64, rng: &mut R) -> Result<f64> {
        if self.buffer.is_empty() {
            return Err(Error::InvalidConfig("replay on an empty buffer".into()));
        }
        let idx = self.buffer.sample_indices(self.config.batch_size, rng);
        let width = self.current.spec().input_width();
        let mut states = Vec::with_capacity(idx.len() * width);
        let mut actions = Vec::with_capacity(idx.len());
        let mut targets = Vec::with_capacity(idx.len());
        let mut next_states = Vec::new();
        let mut boot = Vec::new();
        for (k, &i) in idx.iter().enumerate() {
            let tr = self.buffer.get(i).expect("sampled index in range");
            states.extend_from_slice(tr.state());
            actions.push(tr.action());
            targets.push(tr.reward());
            if let Some(m) = tr.bootstrap(gamma) {
                next_states.extend_from_slice(tr.next_state());
                boot.push((k, m));
            }
        }
        if !boot.is_empty() {
            let q = self.target.predict(&next_states)?;
            let n = self.target.spec().output_width();
            for (row, &(k, m)) in boot.iter().enumerate() {
                let best = q[row * n..(row + 1) * n].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                targets[k] += m * best;
            }
        }
        let (loss, grads) = self.current.q_loss_grad(&states, &actions, &targets, Mode::Train, rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("Q loss"));
        }
        self.optimizer.step(&mut self.current, &grads)?;
        Ok(loss)
    }

    /// One experience-replay pass: `ceil(len / batch)` mini-batches, then
    /// the target network is refreshed. Returns the mean loss, `None` when
    /// the buffer is empty.
    pub fn replay_pass<R: Rng + ?Sized>(&mut self, gamma: f64, rng: &mut R) -> Result<Option<f64>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let batches = self.buffer.len().div_ceil(self.config.batch_size);
        let mut total = 0.0;
        for _ in 0..batches {
            total += self.replay_update(gamma, rng)?;
        }
        self.sync_target();
        Ok(Some(total / batches as f64))
    }
}

/// Maps a flat-agent output index onto a dialogue act: the first `|S|`
/// outputs request symptoms, the rest inform diseases.
pub fn flat_action(index: usize, num_symptoms: usize, num_diseases: usize) -> Result<EnvAction> {
    if index < num_symptoms {
        Ok(EnvAction::Request(SymptomId(index)))
    } else if index < num_symptoms + num_diseases {
        Ok(EnvAction::Inform(DiseaseId(index - num_symptoms)))
    } else {
        Err(Error::IndexOutOfRange { index, len: num_symptoms + num_diseases })
    }
}
