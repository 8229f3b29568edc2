//! Synthetic taxi aggregation simulator: zones, stochastic demand with
//! expiry, uniform-random trip assignment, revenue rewards.
//!
//! Step order is fixed: move, assign, generate demand, progress trips.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use super::{AgentId, EnvError, Environment, PendingDecision, StepOutcome};
use crate::game::{FlowDistribution, GameStructure, GlobalState, PopulationStructure};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZoneGraph {
    pub n_zones: usize,
    /// `duration[o][d]` in steps, >= 1.
    pub duration: Vec<Vec<u32>>,
    /// `revenue[o][d]` >= 0.
    pub revenue: Vec<Vec<f64>>,
    /// Relative demand-origin weights per zone.
    pub origin_weights: Vec<f64>,
}

impl ZoneGraph {
    /// Default synthetic map: fully connected movement, trip durations in
    /// 1..=4 steps, revenue proportional to duration, demand concentrated
    /// unevenly across zones so fleet positioning matters.
    pub fn default_map(n_zones: usize) -> Self {
        let duration: Vec<Vec<u32>> = (0..n_zones)
            .map(|o| (0..n_zones).map(|d| 1 + ((o + 2 * d) % 4) as u32).collect())
            .collect();
        let revenue = duration
            .iter()
            .map(|row| row.iter().map(|&d| d as f64).collect())
            .collect();
        // geometric-ish decay over zone index
        let origin_weights = (0..n_zones).map(|z| 1.0 / (1.0 + z as f64 * 0.5)).collect();
        ZoneGraph {
            n_zones,
            duration,
            revenue,
            origin_weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalPattern {
    Static,
    /// Rate modulated by `1 + amplitude * sin(2 pi t / period)`.
    Dynamic { period: u64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TripPattern {
    Uniform,
    /// Trips originating in `long_trip_zones` go to the longest-duration
    /// destination with probability `fraction`.
    NonUniform {
        long_trip_zones: Vec<usize>,
        fraction: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemandConfig {
    /// Demand-to-Agent Ratio: expected demands per step = dar * n_agents.
    pub dar: f64,
    pub arrival: ArrivalPattern,
    pub trip_pattern: TripPattern,
    /// Demands unassigned for this many steps are dropped.
    pub expiry_steps: u32,
    /// Cost charged to an agent that moved zones and was not assigned.
    pub movement_cost: f64,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            dar: 0.5,
            arrival: ArrivalPattern::Static,
            trip_pattern: TripPattern::Uniform,
            expiry_steps: 2,
            movement_cost: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Demand {
    origin: usize,
    destination: usize,
    age: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TaxiStatus {
    Idle { zone: usize },
    OnTrip { destination: usize, remaining: u32 },
}

pub struct TaxiEnv {
    zones: ZoneGraph,
    demand_cfg: DemandConfig,
    structure: GameStructure,
    status: Vec<TaxiStatus>,
    demands: Vec<Demand>,
    time: u64,
}

impl TaxiEnv {
    pub fn new(zones: ZoneGraph, demand_cfg: DemandConfig, n_agents: usize) -> Self {
        assert!(zones.duration.iter().flatten().all(|&d| d >= 1));
        assert!(demand_cfg.expiry_steps >= 1);
        let structure = GameStructure {
            populations: vec![PopulationStructure {
                mass: 1.0,
                n_agents,
                // action u at zone k = move to zone u (fully connected,
                // self-loop included)
                actions_per_state: vec![zones.n_zones; zones.n_zones],
            }],
        };
        let status = (0..n_agents)
            .map(|i| TaxiStatus::Idle {
                zone: i % zones.n_zones,
            })
            .collect();
        TaxiEnv {
            zones,
            demand_cfg,
            structure,
            status,
            demands: Vec::new(),
            time: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.status.len()
    }

    pub fn open_demand_count(&self) -> usize {
        self.demands.len()
    }

    pub fn idle_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| matches!(s, TaxiStatus::Idle { .. }))
            .count()
    }

    pub fn max_demand_age(&self) -> u32 {
        self.demands.iter().map(|d| d.age).max().unwrap_or(0)
    }

    fn demand_rate(&self, t: u64) -> f64 {
        let base = self.demand_cfg.dar * self.n_agents() as f64;
        match self.demand_cfg.arrival {
            ArrivalPattern::Static => base,
            ArrivalPattern::Dynamic { period, amplitude } => {
                let phase = 2.0 * std::f64::consts::PI * (t % period) as f64 / period as f64;
                (base * (1.0 + amplitude * phase.sin())).max(0.0)
            }
        }
    }

    /// Draws this step's new demands. Public so the arrival statistics can
    /// be validated directly.
    pub fn generate_demand(&self, t: u64, rng: &mut StreamRng) -> Vec<(usize, usize)> {
        let rate = self.demand_rate(t);
        if rate <= 0.0 {
            return Vec::new();
        }
        let count = Poisson::new(rate).map(|p| p.sample(rng) as usize).unwrap_or(0);
        let origin_dist = WeightedIndex::new(&self.zones.origin_weights).unwrap();
        (0..count)
            .map(|_| {
                let origin = origin_dist.sample(rng);
                let destination = match &self.demand_cfg.trip_pattern {
                    TripPattern::Uniform => rng.random_range(0..self.zones.n_zones),
                    TripPattern::NonUniform {
                        long_trip_zones,
                        fraction,
                    } => {
                        if long_trip_zones.contains(&origin)
                            && rng.random_range(0.0..1.0) < *fraction
                        {
                            // longest trip available from this origin
                            (0..self.zones.n_zones)
                                .max_by_key(|&d| self.zones.duration[origin][d])
                                .unwrap()
                        } else {
                            rng.random_range(0..self.zones.n_zones)
                        }
                    }
                };
                (origin, destination)
            })
            .collect()
    }
}

impl Environment for TaxiEnv {
    fn name(&self) -> &'static str {
        "taxi"
    }

    fn structure(&self) -> &GameStructure {
        &self.structure
    }

    fn episodic(&self) -> bool {
        false
    }

    fn feature_len(&self) -> usize {
        2 * self.zones.n_zones
    }

    /// Normalized idle-agent count per zone plus normalized open-demand
    /// count per zone.
    fn global_features(&self) -> Vec<f64> {
        let n = self.n_agents() as f64;
        let mut out = vec![0.0; 2 * self.zones.n_zones];
        for s in &self.status {
            if let TaxiStatus::Idle { zone } = s {
                out[*zone] += 1.0 / n;
            }
        }
        for d in &self.demands {
            out[self.zones.n_zones + d.origin] += 1.0 / n;
        }
        out
    }

    fn global_state(&self) -> GlobalState {
        // on-trip agents are attributed to their destination zone so the
        // population mass stays conserved
        let mpa = self.structure.populations[0].mass_per_agent();
        let mut masses = vec![0.0; self.zones.n_zones];
        for s in &self.status {
            match s {
                TaxiStatus::Idle { zone } => masses[*zone] += mpa,
                TaxiStatus::OnTrip { destination, .. } => masses[*destination] += mpa,
            }
        }
        GlobalState {
            masses: vec![masses],
            time: self.time,
        }
    }

    fn reset(&mut self, _rng: &mut StreamRng) {
        let n_zones = self.zones.n_zones;
        for (i, s) in self.status.iter_mut().enumerate() {
            *s = TaxiStatus::Idle { zone: i % n_zones };
        }
        self.demands.clear();
        self.time = 0;
    }

    fn pending(&self) -> Vec<PendingDecision> {
        self.status
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match s {
                TaxiStatus::Idle { zone } => Some(PendingDecision {
                    agent: AgentId {
                        population: 0,
                        index: i,
                    },
                    local_state: *zone,
                }),
                TaxiStatus::OnTrip { .. } => None,
            })
            .collect()
    }

    fn step(&mut self, actions: &[usize], rng: &mut StreamRng) -> Result<StepOutcome, EnvError> {
        let pending = self.pending();
        if actions.len() != pending.len() {
            return Err(EnvError::ActionCountMismatch {
                expect: pending.len(),
                got: actions.len(),
            });
        }
        let n_zones = self.zones.n_zones;
        let mpa = self.structure.populations[0].mass_per_agent();
        let mut flow = FlowDistribution::zeros(&self.structure);
        // 1. move
        let mut moved_from: Vec<Option<usize>> = vec![None; self.status.len()];
        for (d, &target) in pending.iter().zip(actions) {
            if target >= n_zones {
                return Err(EnvError::InvalidAction {
                    population: 0,
                    index: d.agent.index,
                    local_state: d.local_state,
                    action: target,
                });
            }
            flow.f[0][d.local_state][target] += mpa;
            moved_from[d.agent.index] = Some(d.local_state);
            self.status[d.agent.index] = TaxiStatus::Idle { zone: target };
        }
        // 2. assign, zone by zone: min(idle, demand) trips; served agents
        // chosen uniformly at random, oldest demands first
        let mut rewards: Vec<(AgentId, f64)> = Vec::new();
        let mut assigned = vec![false; self.status.len()];
        for zone in 0..n_zones {
            let mut idle_here: Vec<usize> = self
                .status
                .iter()
                .enumerate()
                .filter_map(|(i, s)| match s {
                    TaxiStatus::Idle { zone: z } if *z == zone => Some(i),
                    _ => None,
                })
                .collect();
            let mut demand_idx: Vec<usize> = (0..self.demands.len())
                .filter(|&i| self.demands[i].origin == zone)
                .collect();
            demand_idx.sort_by_key(|&i| std::cmp::Reverse(self.demands[i].age));
            let n_assign = idle_here.len().min(demand_idx.len());
            // uniform choice of served agents
            for pick in 0..n_assign {
                let j = rng.random_range(pick..idle_here.len());
                idle_here.swap(pick, j);
            }
            for (agent, &di) in idle_here.iter().zip(demand_idx.iter()).take(n_assign) {
                let demand = self.demands[di];
                let revenue = self.zones.revenue[zone][demand.destination];
                let duration = self.zones.duration[zone][demand.destination];
                self.status[*agent] = TaxiStatus::OnTrip {
                    destination: demand.destination,
                    remaining: duration,
                };
                assigned[*agent] = true;
                rewards.push((
                    AgentId {
                        population: 0,
                        index: *agent,
                    },
                    revenue,
                ));
                self.demands[di].age = u32::MAX; // mark consumed
            }
        }
        self.demands.retain(|d| d.age != u32::MAX);
        // movement cost for unassigned movers
        if self.demand_cfg.movement_cost != 0.0 {
            for (i, from) in moved_from.iter().enumerate() {
                if let Some(from) = from {
                    if !assigned[i] {
                        if let TaxiStatus::Idle { zone } = self.status[i] {
                            if zone != *from {
                                rewards.push((
                                    AgentId {
                                        population: 0,
                                        index: i,
                                    },
                                    -self.demand_cfg.movement_cost,
                                ));
                            }
                        }
                    }
                }
            }
        }
        // unassigned demands age and expire
        for d in &mut self.demands {
            d.age += 1;
        }
        let expiry = self.demand_cfg.expiry_steps;
        self.demands.retain(|d| d.age < expiry);
        // 3. new demand
        for (origin, destination) in self.generate_demand(self.time, rng) {
            self.demands.push(Demand {
                origin,
                destination,
                age: 0,
            });
        }
        // 4. trip progression
        for s in &mut self.status {
            if let TaxiStatus::OnTrip {
                destination,
                remaining,
            } = s
            {
                *remaining -= 1;
                if *remaining == 0 {
                    *s = TaxiStatus::Idle { zone: *destination };
                }
            }
        }
        self.time += 1;
        Ok(StepOutcome {
            flow,
            rewards,
            terminated: Vec::new(),
            episode_done: false,
        })
    }
}
