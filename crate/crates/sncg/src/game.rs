//! Shared game abstractions: populations of equal-mass agents, local/global
//! states, flow aggregation and the anonymity contract that every
//! environment implements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for mass-conservation checks.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("agent {agent} in population {population} state {local_state}: action {action} out of range (state has {n_actions} actions)")]
    InvalidAction {
        agent: usize,
        population: usize,
        local_state: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("population {population}: local state {local_state} out of range (population has {n_states} states)")]
    InvalidLocalState {
        population: usize,
        local_state: usize,
        n_states: usize,
    },
    #[error("population {0} out of range")]
    InvalidPopulation(usize),
    #[error("unknown action id {action} for population {population}")]
    UnknownAction { population: usize, action: usize },
}

/// Index of a local state within a population's state set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalStateId(pub usize);

/// Index of a population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopulationId(pub usize);

/// Index into the action set of a local state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

/// Static structure of one population: its total mass, the finite-agent
/// approximation count, and the per-local-state action arity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationStructure {
    pub mass: f64,
    pub n_agents: usize,
    /// `actions_per_state[k]` = |A_k| for local state `k`.
    pub actions_per_state: Vec<usize>,
}

impl PopulationStructure {
    pub fn mass_per_agent(&self) -> f64 {
        self.mass / self.n_agents as f64
    }

    pub fn n_states(&self) -> usize {
        self.actions_per_state.len()
    }

    pub fn max_actions(&self) -> usize {
        self.actions_per_state.iter().copied().max().unwrap_or(0)
    }
}

/// Static structure of the whole game: every population, in ascending index
/// order (the canonical order for all encodings).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameStructure {
    pub populations: Vec<PopulationStructure>,
}

impl GameStructure {
    pub fn n_populations(&self) -> usize {
        self.populations.len()
    }

    /// Total number of (population, local state) groups.
    pub fn n_groups(&self) -> usize {
        self.populations.iter().map(|p| p.n_states()).sum()
    }
}

/// Mass distribution over local states, per population, plus a step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    /// `masses[p][k]` = mass of population `p` agents in local state `k`.
    pub masses: Vec<Vec<f64>>,
    pub time: u64,
}

impl GlobalState {
    /// Checks nonnegativity and per-population mass conservation.
    pub fn check_conservation(&self, structure: &GameStructure) -> bool {
        self.masses.len() == structure.populations.len()
            && self
                .masses
                .iter()
                .zip(&structure.populations)
                .all(|(m, p)| {
                    m.iter().all(|&x| x >= -MASS_TOL)
                        && (m.iter().sum::<f64>() - p.mass).abs() <= MASS_TOL
                })
    }
}

/// Per-local-state mass on each action: the aggregated joint action.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDistribution {
    /// `f[p][k][u]` = mass of population `p` agents in state `k` playing `u`.
    pub f: Vec<Vec<Vec<f64>>>,
}

impl FlowDistribution {
    pub fn zeros(structure: &GameStructure) -> Self {
        FlowDistribution {
            f: structure
                .populations
                .iter()
                .map(|p| p.actions_per_state.iter().map(|&n| vec![0.0; n]).collect())
                .collect(),
        }
    }

    /// Mass of population `p` present in local state `k` (sum over actions).
    pub fn state_mass(&self, p: usize, k: usize) -> f64 {
        self.f[p][k].iter().sum()
    }

    /// Flattened canonical encoding: populations ascending, states ascending,
    /// actions ascending, each state block normalized to fractions of the
    /// mass present in that state (zeros when the state is empty).
    pub fn fraction_features(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for pop in &self.f {
            for state in pop {
                let mass: f64 = state.iter().sum();
                for &x in state {
                    out.push(if mass > MASS_TOL { x / mass } else { 0.0 });
                }
            }
        }
        out
    }
}

/// One agent's (population, local state, chosen action) at a decision point.
#[derive(Debug, Clone, Copy)]
pub struct AgentAssignment {
    pub population: usize,
    pub local_state: usize,
    pub action: usize,
}

/// Aggregates per-agent deterministic choices into a `FlowDistribution`:
/// `f[p][k][u]` = (count of agents of `p` in `k` choosing `u`) x mass-per-agent.
pub fn aggregate_actions(
    structure: &GameStructure,
    assignments: &[AgentAssignment],
) -> Result<FlowDistribution, GameError> {
    let mut flow = FlowDistribution::zeros(structure);
    for (agent, a) in assignments.iter().enumerate() {
        let pop = structure
            .populations
            .get(a.population)
            .ok_or(GameError::InvalidPopulation(a.population))?;
        let n_actions =
            *pop.actions_per_state
                .get(a.local_state)
                .ok_or(GameError::InvalidLocalState {
                    population: a.population,
                    local_state: a.local_state,
                    n_states: pop.n_states(),
                })?;
        if a.action >= n_actions {
            return Err(GameError::InvalidAction {
                agent,
                population: a.population,
                local_state: a.local_state,
                action: a.action,
                n_actions,
            });
        }
        flow.f[a.population][a.local_state][a.action] += pop.mass_per_agent();
    }
    Ok(flow)
}

/// Total mass of population `p` agents selecting action id `u` across all
/// local states where `u` is available (the congestion load of `u`).
pub fn action_mass_total(
    structure: &GameStructure,
    flow: &FlowDistribution,
    p: usize,
    u: usize,
) -> Result<f64, GameError> {
    let pop = structure
        .populations
        .get(p)
        .ok_or(GameError::InvalidPopulation(p))?;
    if u >= pop.max_actions() {
        return Err(GameError::UnknownAction {
            population: p,
            action: u,
        });
    }
    Ok(flow.f[p]
        .iter()
        .filter(|state| u < state.len())
        .map(|state| state[u])
        .sum())
}

/// Deterministic fixed-length feature encoding of a global state. Mass
/// entries are normalized by population mass; an optional one-hot local state
/// (within its population's state set) and an optional flattened flow can be
/// appended, all in canonical ascending order.
pub fn encode_state(
    structure: &GameStructure,
    s: &GlobalState,
    local: Option<(PopulationId, LocalStateId)>,
    flow: Option<&FlowDistribution>,
) -> Vec<f64> {
    let mut out = Vec::new();
    for (p, pop) in structure.populations.iter().enumerate() {
        for &m in &s.masses[p] {
            out.push(m / pop.mass);
        }
    }
    if let Some((PopulationId(p), LocalStateId(k))) = local {
        let n = structure.populations[p].n_states();
        for i in 0..n {
            out.push(if i == k { 1.0 } else { 0.0 });
        }
    }
    if let Some(flow) = flow {
        out.extend(flow.fraction_features());
    }
    out
}
