//! TOML experiment configuration: environment selection, learner
//! hyperparameters and run settings, with defaults for everything except the
//! environment kind.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{DemandConfig, Environment, MultiStageEnv, PacketEnv, TaxiEnv, ZoneGraph};
use crate::learners::LearnerConfig;
use crate::oracle::ConvexFlowProblem;
use crate::routing::{figure1_description, NetworkDescription, RoutingError};

use super::HarnessError;

fn default_n_agents() -> usize {
    100
}

fn default_n_zones() -> usize {
    4
}

/// Which benchmark to run and how it is parameterized. Routing environments
/// default to the two-population benchmark network with unit masses.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Packet {
        #[serde(default = "default_n_agents")]
        n_agents: usize,
        #[serde(default)]
        network: Option<NetworkDescription>,
        #[serde(default)]
        masses: Option<Vec<f64>>,
    },
    Multistage {
        #[serde(default = "default_n_agents")]
        n_agents: usize,
        #[serde(default)]
        network: Option<NetworkDescription>,
        #[serde(default)]
        masses: Option<Vec<f64>>,
    },
    Taxi {
        #[serde(default = "default_n_agents")]
        n_agents: usize,
        #[serde(default = "default_n_zones")]
        n_zones: usize,
        /// Full zone map; overrides `n_zones` when present.
        #[serde(default)]
        zones: Option<ZoneGraph>,
        #[serde(default)]
        demand: Option<DemandConfig>,
    },
}

impl EnvConfig {
    fn routing_parts(
        network: &Option<NetworkDescription>,
        masses: &Option<Vec<f64>>,
    ) -> Result<(crate::routing::RoutingNetwork, Vec<f64>), HarnessError> {
        let desc = network.clone().unwrap_or_else(figure1_description);
        let net = desc.build()?;
        let masses = masses
            .clone()
            .unwrap_or_else(|| vec![1.0; net.populations.len()]);
        if masses.len() != net.populations.len() {
            return Err(HarnessError::Config(format!(
                "{} masses for {} populations",
                masses.len(),
                net.populations.len()
            )));
        }
        if masses.iter().any(|&m| m <= 0.0) {
            return Err(HarnessError::Config("population masses must be positive".into()));
        }
        Ok((net, masses))
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment>, HarnessError> {
        match self {
            EnvConfig::Packet { n_agents, network, masses } => {
                check_agents(*n_agents)?;
                let (net, masses) = Self::routing_parts(network, masses)?;
                Ok(Box::new(PacketEnv::new(net, &masses, *n_agents)))
            }
            EnvConfig::Multistage { n_agents, network, masses } => {
                check_agents(*n_agents)?;
                let (net, masses) = Self::routing_parts(network, masses)?;
                Ok(Box::new(MultiStageEnv::new(net, &masses, *n_agents)))
            }
            EnvConfig::Taxi { n_agents, n_zones, zones, demand } => {
                check_agents(*n_agents)?;
                let zones = zones.clone().unwrap_or_else(|| ZoneGraph::default_map(*n_zones));
                let demand = demand.clone().unwrap_or_default();
                if demand.dar < 0.0 {
                    return Err(HarnessError::Config("dar must be nonnegative".into()));
                }
                Ok(Box::new(TaxiEnv::new(zones, demand, *n_agents)))
            }
        }
    }

    /// The single-stage equilibrium problem matching this environment, for
    /// gap certification. Only the packet benchmark has one.
    pub fn gap_problem(&self) -> Result<Option<ConvexFlowProblem>, HarnessError> {
        match self {
            EnvConfig::Packet { network, masses, .. } => {
                let (net, masses) = Self::routing_parts(network, masses)?;
                Ok(Some(ConvexFlowProblem::new(net, masses)))
            }
            _ => Ok(None),
        }
    }

    /// The routing network and masses, when this is a routing environment
    /// (used by the oracle subcommand).
    pub fn routing_problem(&self) -> Result<Option<ConvexFlowProblem>, HarnessError> {
        match self {
            EnvConfig::Packet { network, masses, .. }
            | EnvConfig::Multistage { network, masses, .. } => {
                let (net, masses) = Self::routing_parts(network, masses)?;
                Ok(Some(ConvexFlowProblem::new(net, masses)))
            }
            EnvConfig::Taxi { .. } => Ok(None),
        }
    }
}

fn check_agents(n: usize) -> Result<(), HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("n_agents must be at least 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Training budget in environment steps.
    pub budget: u64,
    /// Metrics sampling interval in environment steps.
    pub metrics_every: u64,
    /// Greedy evaluation length (non-episodic environments).
    pub eval_steps: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            budget: 5000,
            metrics_every: 100,
            eval_steps: 500,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub env: EnvConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub run: RunConfig,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Fully-resolved snapshot (defaults expanded) for the run directory.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses a standalone TOML network description (`nodes`, `edges`,
/// `populations`), as embedded in experiment configs under `[env.network]`.
pub fn parse_network_toml(text: &str) -> Result<NetworkDescription, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

impl From<RoutingError> for HarnessError {
    fn from(e: RoutingError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LearnerKind;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[env]\nkind = \"packet\"\n").unwrap();
        assert_eq!(cfg.name, "experiment");
        assert_eq!(cfg.learner.kind, LearnerKind::Vmq);
        assert_eq!(cfg.run.budget, 5000);
        let env = cfg.env.build_env().unwrap();
        assert_eq!(env.name(), "packet");
        assert_eq!(env.structure().populations.len(), 2);
        assert_eq!(env.structure().populations[0].n_agents, 100);
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
name = "taxi-mfq"

[env]
kind = "taxi"
n_agents = 20
n_zones = 3

[env.demand]
dar = 0.6
arrival = { kind = "dynamic", period = 50, amplitude = 0.5 }
trip_pattern = { kind = "uniform" }
expiry_steps = 3
movement_cost = 0.1

[learner]
kind = "mfq"
lr = 0.001
hidden_dim = 32

[run]
seed = 7
budget = 200
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.learner.kind, LearnerKind::Mfq);
        assert_eq!(cfg.learner.hidden_dim, 32);
        // untouched learner fields keep defaults
        assert_eq!(cfg.learner.batch, 32);
        assert_eq!(cfg.run.seed, 7);
        let env = cfg.env.build_env().unwrap();
        assert_eq!(env.name(), "taxi");
    }

    #[test]
    fn snapshot_roundtrips() {
        let cfg = ExperimentConfig::from_toml_str("[env]\nkind = \"multistage\"\n").unwrap();
        let snapshot = cfg.to_toml_string();
        let again = ExperimentConfig::from_toml_str(&snapshot).unwrap();
        assert_eq!(again.run.budget, cfg.run.budget);
        assert_eq!(again.learner.gamma, cfg.learner.gamma);
    }

    #[test]
    fn bad_masses_rejected() {
        let cfg =
            ExperimentConfig::from_toml_str("[env]\nkind = \"packet\"\nmasses = [1.0]\n").unwrap();
        assert!(matches!(cfg.env.build_env(), Err(HarnessError::Config(_))));
        let cfg = ExperimentConfig::from_toml_str(
            "[env]\nkind = \"packet\"\nmasses = [1.0, -2.0]\n",
        )
        .unwrap();
        assert!(cfg.env.build_env().is_err());
    }

    #[test]
    fn taxi_has_no_gap_problem() {
        let cfg = ExperimentConfig::from_toml_str("[env]\nkind = \"taxi\"\n").unwrap();
        assert!(cfg.env.gap_problem().unwrap().is_none());
        assert!(cfg.env.routing_problem().unwrap().is_none());
        let cfg = ExperimentConfig::from_toml_str("[env]\nkind = \"packet\"\n").unwrap();
        assert!(cfg.env.gap_problem().unwrap().is_some());
    }

    #[test]
    fn custom_network_description() {
        let text = r#"
[env]
kind = "packet"
n_agents = 10
masses = [2.0]

[env.network]
nodes = ["X", "Y"]
edges = [
  { name = "e1", from = "X", to = "Y", kind = "affine", slope = 1.0, intercept = 0.0 },
  { name = "e2", from = "X", to = "Y", kind = "constant", value = 1.5 },
]

[[env.network.populations]]
origin = "X"
destination = "Y"
paths = [["e1"], ["e2"]]
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let env = cfg.env.build_env().unwrap();
        assert_eq!(env.structure().populations[0].actions_per_state, vec![2]);
        assert!((env.structure().populations[0].mass - 2.0).abs() < 1e-12);
    }
}
