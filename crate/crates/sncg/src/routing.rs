//! Routing networks with load-dependent edge costs and fixed per-population
//! path sets. Shared by the single-stage packet game, the multi-stage traffic
//! environment and the equilibrium oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("unknown node `{0}` in network description")]
    UnknownNode(String),
    #[error("unknown edge `{0}` in path description")]
    UnknownEdge(String),
    #[error("path `{path}` of population {population} is not connected from {origin} to {destination}")]
    DisconnectedPath {
        population: usize,
        path: String,
        origin: String,
        destination: String,
    },
    #[error("population {population}: path flow is infeasible ({detail})")]
    InfeasibleFlow { population: usize, detail: String },
}

/// Load-dependent edge cost. Affine slopes must be nonnegative so costs are
/// nondecreasing and continuous in the load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostKind {
    Affine { slope: f64, intercept: f64 },
    Constant { value: f64 },
}

impl CostKind {
    pub fn cost(&self, load: f64) -> f64 {
        match *self {
            CostKind::Affine { slope, intercept } => slope * load + intercept,
            CostKind::Constant { value } => value,
        }
    }

    /// Integral of the cost from 0 to `load` (the edge's Rosenthal term).
    pub fn integral(&self, load: f64) -> f64 {
        match *self {
            CostKind::Affine { slope, intercept } => slope * load * load / 2.0 + intercept * load,
            CostKind::Constant { value } => value * load,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostEdge {
    pub name: String,
    pub from: String,
    pub to: String,
    #[serde(flatten)]
    pub cost: CostKind,
}

/// A directed network with per-population origin/destination pairs and an
/// ordered path set per population (paths as edge-index sequences).
#[derive(Debug, Clone)]
pub struct RoutingNetwork {
    pub nodes: Vec<String>,
    pub edges: Vec<CostEdge>,
    pub populations: Vec<PopulationRoutes>,
}

#[derive(Debug, Clone)]
pub struct PopulationRoutes {
    pub origin: usize,
    pub destination: usize,
    /// Ordered list of paths; each path is a sequence of edge indices.
    pub paths: Vec<Vec<usize>>,
    pub path_names: Vec<String>,
}

/// Per-population path flows: `flows[p][i]` is the mass of population `p`
/// on its `i`-th path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFlow {
    pub flows: Vec<Vec<f64>>,
}

impl PathFlow {
    pub fn uniform(network: &RoutingNetwork, masses: &[f64]) -> Self {
        PathFlow {
            flows: network
                .populations
                .iter()
                .zip(masses)
                .map(|(p, &m)| vec![m / p.paths.len() as f64; p.paths.len()])
                .collect(),
        }
    }

    pub fn validate(&self, network: &RoutingNetwork, masses: &[f64]) -> Result<(), RoutingError> {
        for (p, (flow, routes)) in self.flows.iter().zip(&network.populations).enumerate() {
            if flow.len() != routes.paths.len() {
                return Err(RoutingError::InfeasibleFlow {
                    population: p,
                    detail: format!("{} entries for {} paths", flow.len(), routes.paths.len()),
                });
            }
            if flow.iter().any(|&x| x < -1e-9) {
                return Err(RoutingError::InfeasibleFlow {
                    population: p,
                    detail: "negative path flow".into(),
                });
            }
            let total: f64 = flow.iter().sum();
            if (total - masses[p]).abs() > 1e-6 {
                return Err(RoutingError::InfeasibleFlow {
                    population: p,
                    detail: format!("flow sums to {total}, population mass is {}", masses[p]),
                });
            }
        }
        Ok(())
    }
}

impl RoutingNetwork {
    pub fn edge_index(&self, name: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.name == name)
    }

    /// Total load on every edge: sum over populations and over the paths
    /// containing the edge. Linear in the path flows.
    pub fn edge_loads(&self, flows: &PathFlow) -> Vec<f64> {
        let mut loads = vec![0.0; self.edges.len()];
        for (routes, flow) in self.populations.iter().zip(&flows.flows) {
            for (path, &f) in routes.paths.iter().zip(flow) {
                for &e in path {
                    loads[e] += f;
                }
            }
        }
        loads
    }

    /// Per-population, per-path cost: sum of edge costs at the current loads.
    pub fn path_costs(&self, flows: &PathFlow) -> Vec<Vec<f64>> {
        let loads = self.edge_loads(flows);
        self.populations
            .iter()
            .map(|routes| {
                routes
                    .paths
                    .iter()
                    .map(|path| path.iter().map(|&e| self.edges[e].cost.cost(loads[e])).sum())
                    .collect()
            })
            .collect()
    }
}

/// Serializable network description (config-file form).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDescription {
    pub nodes: Vec<String>,
    pub edges: Vec<CostEdge>,
    pub populations: Vec<PopulationDescription>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationDescription {
    pub origin: String,
    pub destination: String,
    /// Paths as sequences of edge names.
    pub paths: Vec<Vec<String>>,
}

impl NetworkDescription {
    pub fn build(&self) -> Result<RoutingNetwork, RoutingError> {
        let node_idx = |name: &str| {
            self.nodes
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| RoutingError::UnknownNode(name.to_string()))
        };
        for e in &self.edges {
            node_idx(&e.from)?;
            node_idx(&e.to)?;
        }
        let mut populations = Vec::new();
        for (p, desc) in self.populations.iter().enumerate() {
            let origin = node_idx(&desc.origin)?;
            let destination = node_idx(&desc.destination)?;
            let mut paths = Vec::new();
            let mut path_names = Vec::new();
            for path in &desc.paths {
                let mut edge_idx = Vec::new();
                for name in path {
                    edge_idx.push(
                        self.edges
                            .iter()
                            .position(|e| &e.name == name)
                            .ok_or_else(|| RoutingError::UnknownEdge(name.clone()))?,
                    );
                }
                // connectivity check: consecutive edges must chain o -> d
                let mut at = origin;
                for &e in &edge_idx {
                    let edge = &self.edges[e];
                    if node_idx(&edge.from)? != at {
                        return Err(RoutingError::DisconnectedPath {
                            population: p,
                            path: path.join("-"),
                            origin: desc.origin.clone(),
                            destination: desc.destination.clone(),
                        });
                    }
                    at = node_idx(&edge.to)?;
                }
                if at != destination {
                    return Err(RoutingError::DisconnectedPath {
                        population: p,
                        path: path.join("-"),
                        origin: desc.origin.clone(),
                        destination: desc.destination.clone(),
                    });
                }
                path_names.push(path.join(""));
                paths.push(edge_idx);
            }
            populations.push(PopulationRoutes {
                origin,
                destination,
                paths,
                path_names,
            });
        }
        Ok(RoutingNetwork {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            populations,
        })
    }
}

/// The Figure-1 benchmark network: two populations (A->B and E->F) sharing
/// nine edges, with fixed path sets {AB, ACDB, ADB} and {EF, ECDF, ECF}.
pub fn figure1_description() -> NetworkDescription {
    let affine = |name: &str, from: &str, to: &str, slope: f64, intercept: f64| CostEdge {
        name: name.into(),
        from: from.into(),
        to: to.into(),
        cost: CostKind::Affine { slope, intercept },
    };
    NetworkDescription {
        nodes: ["A", "B", "C", "D", "E", "F"].iter().map(|s| s.to_string()).collect(),
        edges: vec![
            affine("AB", "A", "B", 1.0, 2.0),
            affine("AC", "A", "C", 0.5, 0.0),
            affine("AD", "A", "D", 1.0, 0.0),
            affine("DB", "D", "B", 1.0 / 3.0, 0.0),
            affine("CD", "C", "D", 3.0, 0.0),
            CostEdge {
                name: "EC".into(),
                from: "E".into(),
                to: "C".into(),
                cost: CostKind::Constant { value: 0.5 },
            },
            affine("CF", "C", "F", 1.0, 0.0),
            affine("DF", "D", "F", 0.25, 0.0),
            affine("EF", "E", "F", 1.0, 1.0),
        ],
        populations: vec![
            PopulationDescription {
                origin: "A".into(),
                destination: "B".into(),
                paths: vec![
                    vec!["AB".into()],
                    vec!["AC".into(), "CD".into(), "DB".into()],
                    vec!["AD".into(), "DB".into()],
                ],
            },
            PopulationDescription {
                origin: "E".into(),
                destination: "F".into(),
                paths: vec![
                    vec!["EF".into()],
                    vec!["EC".into(), "CD".into(), "DF".into()],
                    vec!["EC".into(), "CF".into()],
                ],
            },
        ],
    }
}

pub fn figure1_network() -> RoutingNetwork {
    figure1_description().build().expect("built-in preset is valid")
}

/// Population masses that reproduce the benchmark's reported equilibrium
/// path costs: each population enters the cost functions with total mass 1.
pub const FIGURE1_MASSES: [f64; 2] = [1.0, 1.0];
