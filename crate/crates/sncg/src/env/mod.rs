//! Environment abstraction shared by all benchmarks. Environments are
//! single-threaded state machines; learners drive them step by step and
//! assemble per-agent transitions from the per-step rewards reported here.

mod multistage;
mod packet;
mod taxi;

pub use multistage::MultiStageEnv;
pub use packet::PacketEnv;
pub use taxi::{ArrivalPattern, DemandConfig, TaxiEnv, TripPattern, ZoneGraph};

use crate::game::{FlowDistribution, GameStructure, GlobalState};
use crate::rng::StreamRng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("expected {expect} actions (one per pending agent), got {got}")]
    ActionCountMismatch { expect: usize, got: usize },
    #[error("agent ({population},{index}) in local state {local_state}: action {action} is not admissible")]
    InvalidAction {
        population: usize,
        index: usize,
        local_state: usize,
        action: usize,
    },
    #[error("episode exceeded the horizon cap of {cap} steps without all agents arriving")]
    HorizonExceeded { cap: u64 },
    #[error(transparent)]
    Game(#[from] crate::game::GameError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentId {
    pub population: usize,
    pub index: usize,
}

/// An agent that needs an action this step, with its current local state.
#[derive(Debug, Clone, Copy)]
pub struct PendingDecision {
    pub agent: AgentId,
    pub local_state: usize,
}

/// Result of advancing an environment one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    /// The executed joint action, aggregated over the pending agents.
    pub flow: FlowDistribution,
    /// Rewards accrued this step, sparse over agents.
    pub rewards: Vec<(AgentId, f64)>,
    /// Agents that reached a terminal local state this step (episodic
    /// environments only).
    pub terminated: Vec<AgentId>,
    pub episode_done: bool,
}

pub trait Environment {
    fn name(&self) -> &'static str;
    fn structure(&self) -> &GameStructure;
    /// True for episodic environments (the learner resets on episode end).
    fn episodic(&self) -> bool;
    /// Length of the global feature encoding.
    fn feature_len(&self) -> usize;
    /// Observable global features (normalized mass entries).
    fn global_features(&self) -> Vec<f64>;
    fn global_state(&self) -> GlobalState;
    fn reset(&mut self, rng: &mut StreamRng);
    /// Agents requiring an action this step, in a deterministic order
    /// (populations ascending, agent indices ascending).
    fn pending(&self) -> Vec<PendingDecision>;
    /// Advances one step. `actions[i]` is the action of `pending()[i]`.
    fn step(&mut self, actions: &[usize], rng: &mut StreamRng) -> Result<StepOutcome, EnvError>;
}
