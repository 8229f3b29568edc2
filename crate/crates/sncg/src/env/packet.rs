//! Single-stage packet routing: every agent picks a full path once per
//! episode and pays the congested cost of that path.

use super::{AgentId, EnvError, Environment, PendingDecision, StepOutcome};
use crate::game::{
    aggregate_actions, AgentAssignment, FlowDistribution, GameStructure, GlobalState,
    PopulationStructure,
};
use crate::routing::{PathFlow, RoutingNetwork};
use crate::rng::StreamRng;

pub struct PacketEnv {
    network: RoutingNetwork,
    structure: GameStructure,
    time: u64,
}

impl PacketEnv {
    /// Each population has one local state (its origin) whose actions are
    /// its admissible paths.
    pub fn new(network: RoutingNetwork, masses: &[f64], n_agents: usize) -> Self {
        let populations = network
            .populations
            .iter()
            .zip(masses)
            .map(|(routes, &mass)| PopulationStructure {
                mass,
                n_agents,
                actions_per_state: vec![routes.paths.len()],
            })
            .collect();
        PacketEnv {
            network,
            structure: GameStructure { populations },
            time: 0,
        }
    }

    pub fn network(&self) -> &RoutingNetwork {
        &self.network
    }

    pub fn masses(&self) -> Vec<f64> {
        self.structure.populations.iter().map(|p| p.mass).collect()
    }

    /// Reinterprets an executed flow as per-population path flows.
    pub fn path_flow(&self, flow: &FlowDistribution) -> PathFlow {
        PathFlow {
            flows: flow.f.iter().map(|pop| pop[0].clone()).collect(),
        }
    }
}

impl Environment for PacketEnv {
    fn name(&self) -> &'static str {
        "packet"
    }

    fn structure(&self) -> &GameStructure {
        &self.structure
    }

    fn episodic(&self) -> bool {
        true
    }

    fn feature_len(&self) -> usize {
        self.structure.n_populations()
    }

    fn global_features(&self) -> Vec<f64> {
        // all mass sits at the origins; the normalized encoding is constant
        vec![1.0; self.structure.n_populations()]
    }

    fn global_state(&self) -> GlobalState {
        GlobalState {
            masses: self
                .structure
                .populations
                .iter()
                .map(|p| vec![p.mass])
                .collect(),
            time: self.time,
        }
    }

    fn reset(&mut self, _rng: &mut StreamRng) {}

    fn pending(&self) -> Vec<PendingDecision> {
        let mut out = Vec::new();
        for (p, pop) in self.structure.populations.iter().enumerate() {
            for i in 0..pop.n_agents {
                out.push(PendingDecision {
                    agent: AgentId {
                        population: p,
                        index: i,
                    },
                    local_state: 0,
                });
            }
        }
        out
    }

    fn step(&mut self, actions: &[usize], _rng: &mut StreamRng) -> Result<StepOutcome, EnvError> {
        let pending = self.pending();
        if actions.len() != pending.len() {
            return Err(EnvError::ActionCountMismatch {
                expect: pending.len(),
                got: actions.len(),
            });
        }
        let assignments: Vec<AgentAssignment> = pending
            .iter()
            .zip(actions)
            .map(|(d, &action)| AgentAssignment {
                population: d.agent.population,
                local_state: 0,
                action,
            })
            .collect();
        let flow = aggregate_actions(&self.structure, &assignments)?;
        let costs = self.network.path_costs(&self.path_flow(&flow));
        // all agents on the same path of a population receive equal reward
        let rewards = pending
            .iter()
            .zip(actions)
            .map(|(d, &action)| (d.agent, -costs[d.agent.population][action]))
            .collect();
        self.time += 1;
        Ok(StepOutcome {
            flow,
            rewards,
            terminated: pending.iter().map(|d| d.agent).collect(),
            episode_done: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{figure1_network, FIGURE1_MASSES};
    use crate::rng::{stream_rng, Stream};

    fn env(n: usize) -> PacketEnv {
        PacketEnv::new(figure1_network(), &FIGURE1_MASSES, n)
    }

    #[test]
    fn all_on_ab_pay_three() {
        let mut env = env(10);
        let mut rng = stream_rng(0, Stream::Env);
        // pop 1 all on AB (action 0), pop 2 all on EF (action 0)
        let actions = vec![0; 20];
        let out = env.step(&actions, &mut rng).unwrap();
        for (agent, r) in &out.rewards {
            if agent.population == 0 {
                assert!((r + 3.0).abs() < 1e-12, "c_AB(1) = 3");
            } else {
                assert!((r + 2.0).abs() < 1e-12, "c_EF(1) = 2");
            }
        }
        assert!(out.episode_done);
    }

    #[test]
    fn unilateral_deviation_bounded_by_lipschitz() {
        // one agent of 100 deviates from AB to ADB; everyone else's reward
        // moves by at most (max slope 3) x mass-per-agent
        let n = 100;
        let mut e1 = env(n);
        let mut e2 = env(n);
        let mut rng = stream_rng(0, Stream::Env);
        let mut actions = vec![0usize; 2 * n];
        let base = e1.step(&actions, &mut rng).unwrap();
        actions[0] = 2;
        let dev = e2.step(&actions, &mut rng).unwrap();
        let bound = 3.0 * (1.0 / n as f64) * 3.0; // slope x mass x path length
        for i in 1..2 * n {
            let delta = (base.rewards[i].1 - dev.rewards[i].1).abs();
            assert!(delta <= bound + 1e-12, "agent {i} moved by {delta}");
        }
        // the deviating agent's own reward changes
        assert!((base.rewards[0].1 - dev.rewards[0].1).abs() > 1e-6);
    }

    #[test]
    fn equilibrium_split_rewards() {
        // 1000 agents split close to the benchmark equilibrium fractions
        let n = 1000;
        let mut e = env(n);
        let mut rng = stream_rng(0, Stream::Env);
        let mut actions = Vec::new();
        for i in 0..n {
            actions.push(if i < 187 { 1 } else { 2 });
        }
        for i in 0..n {
            actions.push(if i < 223 {
                0
            } else if i < 276 {
                1
            } else {
                2
            });
        }
        let out = e.step(&actions, &mut rng).unwrap();
        // pop-1 rewards on used paths sit near -1.14
        for (agent, r) in &out.rewards {
            if agent.population == 0 {
                assert!((r + 1.14).abs() < 0.02, "reward {r}");
            }
        }
    }

    #[test]
    fn invalid_path_rejected() {
        let mut e = env(2);
        let mut rng = stream_rng(0, Stream::Env);
        let mut actions = vec![0usize; 4];
        actions[1] = 7;
        assert!(e.step(&actions, &mut rng).is_err());
    }
}
