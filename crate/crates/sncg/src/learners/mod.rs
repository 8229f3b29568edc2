//! Learning algorithms: the variance-minimizing central agent with
//! per-agent best-response Q-learners (VMQ), and the IL / MFQ / NFSP
//! baselines. One training loop drives any of them against any
//! environment.

mod central;
mod individual;
mod trainer;

pub use central::CentralAgent;
pub use individual::IndividualAgent;
pub use trainer::{MetricsRow, Trainer, TrainerError};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Vmq,
    Il,
    Mfq,
    Nfsp,
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LearnerKind::Vmq => "vmq",
            LearnerKind::Il => "il",
            LearnerKind::Mfq => "mfq",
            LearnerKind::Nfsp => "nfsp",
        };
        f.write_str(s)
    }
}

/// Exponentially decayed exploration rate with a floor.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub start: f64,
    /// Multiplicative decay applied once per environment step.
    pub decay: f64,
    pub floor: f64,
}

impl ExplorationSchedule {
    pub fn value(&self, step: u64) -> f64 {
        (self.start * self.decay.powi(step as i32)).max(self.floor)
    }

    pub fn at_floor(&self, step: u64) -> bool {
        self.value(step) <= self.floor
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    pub gamma: f64,
    pub lr: f64,
    pub hidden_dim: usize,
    pub dropout: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub central_buffer_capacity: usize,
    pub target_period: u64,
    /// Environment steps before minibatch updates begin (buffers warm up).
    pub update_start: u64,
    /// Round-robin period for individual-agent updates: each agent trains
    /// on every `update_stride`-th step. 1 = every agent every step.
    pub update_stride: u64,
    pub eps1: ExplorationSchedule,
    pub eps2: ExplorationSchedule,
    /// NFSP anticipatory parameter (probability of playing best response).
    pub anticipatory: f64,
    /// Entropy-bonus coefficient on the central suggestion policy. Keeps the
    /// suggestion off the simplex vertices where the variance critic has no
    /// training data.
    pub mu_entropy: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            kind: LearnerKind::Vmq,
            gamma: 0.99,
            lr: 1e-5,
            hidden_dim: 256,
            dropout: 0.2,
            batch: 32,
            buffer_capacity: 50_000,
            central_buffer_capacity: 50_000,
            target_period: 200,
            update_start: 1000,
            update_stride: 1,
            eps1: ExplorationSchedule {
                start: 0.5,
                decay: 0.9995,
                floor: 0.05,
            },
            eps2: ExplorationSchedule {
                start: 1.0,
                decay: 0.9995,
                floor: 0.05,
            },
            anticipatory: 0.8,
            mu_entropy: 0.01,
        }
    }
}
