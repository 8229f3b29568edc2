//! Ground-truth machinery for the single-stage routing game: potential
//! minimization over the product of scaled simplices, path-cost evaluation
//! at the minimizer, and certification of arbitrary policies by their
//! unilateral-deviation gap.

use crate::routing::{PathFlow, RoutingError, RoutingNetwork};
use thiserror::Error;

/// Paths carrying less than this mass are treated as unused when certifying
/// Wardrop conditions (policies are reported at 3 decimals; this excludes
/// numerical dust).
pub const USED_THRESHOLD: f64 = 0.005;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Convex potential-minimization problem: a routing network plus the mass
/// each population routes.
#[derive(Debug, Clone)]
pub struct ConvexFlowProblem {
    pub network: RoutingNetwork,
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub flows: PathFlow,
    /// `path_costs[p][i]`: cost of population `p`'s `i`-th path at `flows`.
    pub path_costs: Vec<Vec<f64>>,
    pub potential: f64,
    pub epsilon_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ConvexFlowProblem {
    pub fn new(network: RoutingNetwork, masses: Vec<f64>) -> Self {
        assert_eq!(network.populations.len(), masses.len());
        ConvexFlowProblem { network, masses }
    }

    /// Potential value: sum over edges of the integral of the edge cost from
    /// zero to the edge's load.
    pub fn potential_value(&self, flows: &PathFlow) -> Result<f64, OracleError> {
        flows.validate(&self.network, &self.masses)?;
        Ok(self.potential_unchecked(flows))
    }

    fn potential_unchecked(&self, flows: &PathFlow) -> f64 {
        let loads = self.network.edge_loads(flows);
        self.network
            .edges
            .iter()
            .zip(&loads)
            .map(|(e, &l)| e.cost.integral(l))
            .sum()
    }

    /// Maximum cost reduction available to any agent by unilateral deviation:
    /// max over populations, over used paths, of (path cost - cheapest path
    /// cost of that population). Zero iff Wardrop conditions hold on support.
    pub fn epsilon_gap(&self, flows: &PathFlow) -> f64 {
        let costs = self.network.path_costs(flows);
        let mut gap: f64 = 0.0;
        for (p, flow) in flows.flows.iter().enumerate() {
            let min_cost = costs[p].iter().cloned().fold(f64::INFINITY, f64::min);
            for (i, &f) in flow.iter().enumerate() {
                if f > USED_THRESHOLD {
                    gap = gap.max(costs[p][i] - min_cost);
                }
            }
        }
        gap
    }

    /// Projected-gradient descent on the potential over the product of
    /// scaled simplices. The gradient with respect to a path flow is exactly
    /// that path's cost. Steps backtrack until the potential does not
    /// increase, so the iterate sequence is monotone.
    pub fn minimize_potential(&self, tol: f64, max_iters: usize) -> OracleResult {
        let mut flows = PathFlow::uniform(&self.network, &self.masses);
        let mut potential = self.potential_unchecked(&flows);
        let mut gap = self.epsilon_gap(&flows);
        let mut iterations = 0;
        let mut converged = gap <= tol;

        while !converged && iterations < max_iters {
            iterations += 1;
            let costs = self.network.path_costs(&flows);
            let mut step = 0.25;
            let mut accepted = false;
            for _ in 0..40 {
                let candidate = PathFlow {
                    flows: flows
                        .flows
                        .iter()
                        .zip(&costs)
                        .zip(&self.masses)
                        .map(|((f, c), &m)| {
                            let moved: Vec<f64> =
                                f.iter().zip(c).map(|(&x, &g)| x - step * g).collect();
                            project_simplex(&moved, m)
                        })
                        .collect(),
                };
                let cand_potential = self.potential_unchecked(&candidate);
                if cand_potential <= potential + 1e-15 {
                    flows = candidate;
                    potential = cand_potential;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            gap = self.epsilon_gap(&flows);
            if gap <= tol {
                converged = true;
            } else if !accepted {
                break; // no descent step found at any step size
            }
        }

        OracleResult {
            path_costs: self.network.path_costs(&flows),
            potential,
            epsilon_gap: gap,
            iterations,
            converged,
            flows,
        }
    }
}

/// Euclidean projection onto the simplex scaled to total mass `m`
/// (Held-Wolfe-Crowder thresholding).
pub fn project_simplex(v: &[f64], m: f64) -> Vec<f64> {
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let candidate = (cumsum - m) / (i + 1) as f64;
        if i + 1 == n || sorted[i + 1] <= candidate {
            theta = candidate;
            break;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}
