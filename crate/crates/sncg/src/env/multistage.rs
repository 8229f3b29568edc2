//! Multi-stage traffic routing: agents choose an outgoing edge at every
//! node and pay the per-step congested cost of the edge they traverse.
//! Episodes end when every agent has reached its destination.

use super::{AgentId, EnvError, Environment, PendingDecision, StepOutcome};
use crate::game::{FlowDistribution, GameStructure, GlobalState, PopulationStructure};
use crate::routing::RoutingNetwork;
use crate::rng::StreamRng;

/// Safety net; the longest admissible path in the built-in preset is 3 edges.
pub const HORIZON_CAP: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
enum AgentPos {
    /// Index into the population's decision-state list.
    At(usize),
    Done,
}

/// Per-population decision structure derived from the admissible path set:
/// the decision nodes in visit order, and at each node the outgoing edges
/// that lie on some admissible path.
struct PopulationStages {
    /// Node index (in the network) of each decision state.
    state_nodes: Vec<usize>,
    /// `edges[k][u]` = network edge index of action `u` at decision state `k`.
    edges: Vec<Vec<usize>>,
    /// `next_state[k][u]` = Some(next decision state) or None (destination).
    next_state: Vec<Vec<Option<usize>>>,
}

pub struct MultiStageEnv {
    network: RoutingNetwork,
    structure: GameStructure,
    stages: Vec<PopulationStages>,
    positions: Vec<Vec<AgentPos>>,
    step_in_episode: u64,
    time: u64,
}

impl MultiStageEnv {
    pub fn new(network: RoutingNetwork, masses: &[f64], n_agents: usize) -> Self {
        let mut stages = Vec::new();
        let mut populations = Vec::new();
        for (routes, &mass) in network.populations.iter().zip(masses) {
            // collect decision nodes and admissible outgoing edges in order
            // of first appearance along the admissible paths
            let mut state_nodes: Vec<usize> = Vec::new();
            let mut edges_at: Vec<Vec<usize>> = Vec::new();
            for path in &routes.paths {
                let mut at = routes.origin;
                for &e in path {
                    let k = match state_nodes.iter().position(|&n| n == at) {
                        Some(k) => k,
                        None => {
                            state_nodes.push(at);
                            edges_at.push(Vec::new());
                            state_nodes.len() - 1
                        }
                    };
                    if !edges_at[k].contains(&e) {
                        edges_at[k].push(e);
                    }
                    at = edge_target(&network, e);
                }
            }
            let next_state: Vec<Vec<Option<usize>>> = edges_at
                .iter()
                .map(|edges| {
                    edges
                        .iter()
                        .map(|&e| {
                            let to = edge_target(&network, e);
                            if to == routes.destination {
                                None
                            } else {
                                Some(
                                    state_nodes
                                        .iter()
                                        .position(|&n| n == to)
                                        .expect("admissible edge leads to a decision node"),
                                )
                            }
                        })
                        .collect()
                })
                .collect();
            populations.push(PopulationStructure {
                mass,
                n_agents,
                actions_per_state: edges_at.iter().map(|e| e.len()).collect(),
            });
            stages.push(PopulationStages {
                state_nodes,
                edges: edges_at,
                next_state,
            });
        }
        let positions = populations
            .iter()
            .map(|p: &PopulationStructure| vec![AgentPos::At(0); p.n_agents])
            .collect();
        MultiStageEnv {
            network,
            structure: GameStructure { populations },
            stages,
            positions,
            step_in_episode: 0,
            time: 0,
        }
    }

    /// Mass of population `p` that has arrived at its destination.
    pub fn delivered_mass(&self, p: usize) -> f64 {
        let pop = &self.structure.populations[p];
        self.positions[p]
            .iter()
            .filter(|&&pos| pos == AgentPos::Done)
            .count() as f64
            * pop.mass_per_agent()
    }

    /// Name of the network node behind decision state `k` of population `p`.
    pub fn state_node_name(&self, p: usize, k: usize) -> &str {
        &self.network.nodes[self.stages[p].state_nodes[k]]
    }
}

fn edge_target(network: &RoutingNetwork, e: usize) -> usize {
    let to = &network.edges[e].to;
    network.nodes.iter().position(|n| n == to).unwrap()
}

impl Environment for MultiStageEnv {
    fn name(&self) -> &'static str {
        "multistage"
    }

    fn structure(&self) -> &GameStructure {
        &self.structure
    }

    fn episodic(&self) -> bool {
        true
    }

    fn feature_len(&self) -> usize {
        // per population: decision-state masses plus delivered mass
        self.structure
            .populations
            .iter()
            .map(|p| p.n_states() + 1)
            .sum()
    }

    fn global_features(&self) -> Vec<f64> {
        let s = self.global_state();
        let mut out = Vec::new();
        for (p, pop) in self.structure.populations.iter().enumerate() {
            for &m in &s.masses[p] {
                out.push(m / pop.mass);
            }
            out.push(self.delivered_mass(p) / pop.mass);
        }
        out
    }

    fn global_state(&self) -> GlobalState {
        // node masses over decision states; delivered mass is exposed
        // separately so the per-population totals stay conserved
        let masses = self
            .structure
            .populations
            .iter()
            .enumerate()
            .map(|(p, pop)| {
                let mut m = vec![0.0; pop.n_states()];
                for pos in &self.positions[p] {
                    if let AgentPos::At(k) = pos {
                        m[*k] += pop.mass_per_agent();
                    }
                }
                m
            })
            .collect();
        GlobalState {
            masses,
            time: self.time,
        }
    }

    fn reset(&mut self, _rng: &mut StreamRng) {
        for (p, pop) in self.positions.iter_mut().enumerate() {
            for pos in pop.iter_mut() {
                *pos = AgentPos::At(0);
            }
            let _ = p;
        }
        self.step_in_episode = 0;
    }

    fn pending(&self) -> Vec<PendingDecision> {
        let mut out = Vec::new();
        for (p, positions) in self.positions.iter().enumerate() {
            for (i, pos) in positions.iter().enumerate() {
                if let AgentPos::At(k) = pos {
                    out.push(PendingDecision {
                        agent: AgentId {
                            population: p,
                            index: i,
                        },
                        local_state: *k,
                    });
                }
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
        // validate and aggregate traversal mass per edge (both populations
        // can share an edge within the same step)
        let mut flow = FlowDistribution::zeros(&self.structure);
        let mut edge_mass = vec![0.0; self.network.edges.len()];
        for (d, &u) in pending.iter().zip(actions) {
            let p = d.agent.population;
            let stage = &self.stages[p];
            if u >= stage.edges[d.local_state].len() {
                return Err(EnvError::InvalidAction {
                    population: p,
                    index: d.agent.index,
                    local_state: d.local_state,
                    action: u,
                });
            }
            let mpa = self.structure.populations[p].mass_per_agent();
            flow.f[p][d.local_state][u] += mpa;
            edge_mass[stage.edges[d.local_state][u]] += mpa;
        }
        // costs from this step's traversal mass only
        let mut rewards = Vec::with_capacity(pending.len());
        let mut terminated = Vec::new();
        for (d, &u) in pending.iter().zip(actions) {
            let p = d.agent.population;
            let stage = &self.stages[p];
            let e = stage.edges[d.local_state][u];
            let cost = self.network.edges[e].cost.cost(edge_mass[e]);
            rewards.push((d.agent, -cost));
            match stage.next_state[d.local_state][u] {
                Some(next) => self.positions[p][d.agent.index] = AgentPos::At(next),
                None => {
                    self.positions[p][d.agent.index] = AgentPos::Done;
                    terminated.push(d.agent);
                }
            }
        }
        self.step_in_episode += 1;
        self.time += 1;
        let episode_done = self
            .positions
            .iter()
            .all(|pop| pop.iter().all(|&pos| pos == AgentPos::Done));
        if !episode_done && self.step_in_episode >= HORIZON_CAP {
            return Err(EnvError::HorizonExceeded { cap: HORIZON_CAP });
        }
        Ok(StepOutcome {
            flow,
            rewards,
            terminated,
            episode_done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{figure1_network, FIGURE1_MASSES};
    use crate::rng::{stream_rng, Stream};

    fn env(n: usize) -> MultiStageEnv {
        MultiStageEnv::new(figure1_network(), &FIGURE1_MASSES, n)
    }

    #[test]
    fn derived_decision_structure() {
        let e = env(4);
        // pop 1: A (AB, AC, AD), C (CD), D (DB)
        assert_eq!(e.structure.populations[0].actions_per_state, vec![3, 1, 1]);
        assert_eq!(e.state_node_name(0, 0), "A");
        assert_eq!(e.state_node_name(0, 1), "C");
        assert_eq!(e.state_node_name(0, 2), "D");
        // pop 2: E (EF, EC), C (CD, CF), D (DF)
        assert_eq!(e.structure.populations[1].actions_per_state, vec![2, 2, 1]);
        assert_eq!(e.state_node_name(1, 0), "E");
    }

    #[test]
    fn reset_state_all_mass_at_origin() {
        let mut e = env(100);
        let mut rng = stream_rng(0, Stream::Env);
        e.reset(&mut rng);
        let s = e.global_state();
        assert!((s.masses[0][0] - 1.0).abs() < 1e-12);
        assert_eq!(s.masses[0][1], 0.0);
        assert_eq!(e.pending().len(), 200);
        // feature encoding has 1.0 in the A slot
        assert!((e.global_features()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_via_adb_costs() {
        // all pop-1 agents: A->D then D->B; pop-2 all direct E->F
        let n = 10;
        let mut e = env(n);
        let mut rng = stream_rng(0, Stream::Env);
        // step 1: pop1 action 2 (AD), pop2 action 0 (EF)
        let mut actions = vec![2usize; n];
        actions.extend(vec![0usize; n]);
        let out1 = e.step(&actions, &mut rng).unwrap();
        for (agent, r) in &out1.rewards {
            if agent.population == 0 {
                assert!((r + 1.0).abs() < 1e-12, "c_AD(1) = 1");
            }
        }
        // pop2 is done; step 2 only pop1 at D, single action DB
        assert_eq!(e.pending().len(), n);
        let out2 = e.step(&vec![0usize; n], &mut rng).unwrap();
        for (_, r) in &out2.rewards {
            assert!((r + 1.0 / 3.0).abs() < 1e-12, "c_DB(1) = 1/3");
        }
        assert!(out2.episode_done);
        // cumulative pop-1 cost 4/3
    }

    #[test]
    fn conservation_every_step() {
        let n = 50;
        let mut e = env(n);
        let mut rng = stream_rng(3, Stream::Env);
        use rand::Rng;
        for _ in 0..20 {
            if e.pending().is_empty() {
                e.reset(&mut rng);
            }
            let actions: Vec<usize> = e
                .pending()
                .iter()
                .map(|d| {
                    let n_act =
                        e.structure().populations[d.agent.population].actions_per_state[d.local_state];
                    rng.random_range(0..n_act)
                })
                .collect();
            e.step(&actions, &mut rng).unwrap();
            let s = e.global_state();
            for p in 0..2 {
                let total: f64 = s.masses[p].iter().sum::<f64>() + e.delivered_mass(p);
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn termination_within_path_length() {
        // every admissible action sequence arrives within 3 steps
        let n = 20;
        let mut e = env(n);
        let mut rng = stream_rng(9, Stream::Env);
        use rand::Rng;
        for episode in 0..50 {
            e.reset(&mut rng);
            let mut steps = 0;
            loop {
                let pending = e.pending();
                if pending.is_empty() {
                    break;
                }
                let actions: Vec<usize> = pending
                    .iter()
                    .map(|d| {
                        let n_act = e.structure().populations[d.agent.population].actions_per_state
                            [d.local_state];
                        rng.random_range(0..n_act)
                    })
                    .collect();
                let out = e.step(&actions, &mut rng).unwrap();
                steps += 1;
                if out.episode_done {
                    break;
                }
            }
            assert!(steps <= 3, "episode {episode} took {steps} steps");
        }
    }

    #[test]
    fn equal_treatment_same_edge_same_cost() {
        let n = 30;
        let mut e = env(n);
        let mut rng = stream_rng(11, Stream::Env);
        // half of pop1 on AC, half on AD; pop2 split EF/EC
        let mut actions: Vec<usize> = (0..n).map(|i| if i % 2 == 0 { 1 } else { 2 }).collect();
        actions.extend((0..n).map(|i| if i % 3 == 0 { 0 } else { 1 }));
        let pending = e.pending();
        let out = e.step(&actions, &mut rng).unwrap();
        // group rewards by (population, chosen action); equal within a group
        use std::collections::HashMap;
        let mut groups: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        for ((d, &a), (_, r)) in pending.iter().zip(&actions).zip(&out.rewards) {
            groups.entry((d.agent.population, a)).or_default().push(*r);
        }
        for (_, rs) in groups {
            for w in rs.windows(2) {
                assert!((w[0] - w[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_edge_rejected() {
        let n = 2;
        let mut e = env(n);
        let mut rng = stream_rng(0, Stream::Env);
        let mut actions = vec![0usize; 2 * n];
        actions[0] = 9;
        assert!(matches!(
            e.step(&actions, &mut rng),
            Err(EnvError::InvalidAction { .. })
        ));
    }
}
