//! Hierarchical reinforcement learning for symptom-checking diagnosis
//! dialogues.
//!
//! A master policy chooses between per-group symptom-checker workers and a
//! disease classifier; workers ask the (simulated) patient about symptoms of
//! their group until an internal critic ends their subtask. The crate also
//! ships a synthetic user-goal generator, a flat DQN baseline, linear SVM
//! baselines and evaluation tooling.

pub mod agent;
pub mod classifier;
pub mod cli;
pub mod datagen;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod neuralnet;
pub mod policy;
pub mod rng;
pub mod session;
pub mod simulator;
pub mod trainer;

pub use error::{Error, Result};
