//! Central variance-minimizing agent: a suggestion policy mu over per-group
//! action blocks and a variance network sigma estimating the discounted sum
//! of value-variance terms. mu descends sigma through the chain rule
//! d sigma / d theta_mu = d sigma / d a . d a / d theta_mu.

use ndarray::Array2;

use crate::game::GameStructure;
use crate::nn::{AdamParams, NnError, ReplayBuffer, TrainedNet};
use crate::rng::StreamRng;

use super::individual::softmax;

/// One central transition: the global observation, the executed joint
/// action (flow fractions per group), the realized variance signal, and the
/// successor observation.
#[derive(Debug, Clone)]
pub struct CentralRecord {
    pub obs: Vec<f64>,
    /// Executed flow as per-group action fractions, in block layout order.
    pub action: Vec<f64>,
    pub nu: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Offsets of the (population, local state) blocks inside the flat logit
/// vector of the suggestion network.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    /// (population, local_state, arity, offset) in canonical order.
    pub blocks: Vec<(usize, usize, usize, usize)>,
    pub total: usize,
}

impl BlockLayout {
    pub fn from_structure(structure: &GameStructure) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        for (p, pop) in structure.populations.iter().enumerate() {
            for (k, &arity) in pop.actions_per_state.iter().enumerate() {
                blocks.push((p, k, arity, offset));
                offset += arity;
            }
        }
        BlockLayout {
            blocks,
            total: offset,
        }
    }

    /// Index of the block for (population, local_state).
    pub fn block(&self, population: usize, local_state: usize) -> &(usize, usize, usize, usize) {
        self.blocks
            .iter()
            .find(|(p, k, _, _)| *p == population && *k == local_state)
            .expect("block exists")
    }
}

pub struct CentralAgent {
    pub mu: TrainedNet,
    pub sigma: TrainedNet,
    pub layout: BlockLayout,
    pub buffer: ReplayBuffer<CentralRecord>,
    pub buffer_rng: StreamRng,
    obs_dim: usize,
    /// Running mean square of observed nu; sigma is trained on targets
    /// divided by its root so the regression operates at unit scale
    /// regardless of the environment's variance magnitude.
    nu_scale_sq: f64,
    nu_scale_n: u64,
}

impl CentralAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        structure: &GameStructure,
        obs_dim: usize,
        hidden_dim: usize,
        dropout: f64,
        adam: AdamParams,
        target_period: u64,
        buffer_capacity: usize,
        init_rng: &mut StreamRng,
        buffer_rng: StreamRng,
    ) -> Self {
        let layout = BlockLayout::from_structure(structure);
        let mu = TrainedNet::new(
            obs_dim,
            hidden_dim,
            layout.total,
            dropout,
            adam,
            target_period,
            init_rng,
        );
        let sigma = TrainedNet::new(
            obs_dim + layout.total,
            hidden_dim,
            1,
            dropout,
            adam,
            target_period,
            init_rng,
        );
        CentralAgent {
            mu,
            sigma,
            layout,
            buffer: ReplayBuffer::new(buffer_capacity),
            buffer_rng,
            obs_dim,
            nu_scale_sq: 0.0,
            nu_scale_n: 0,
        }
    }

    /// Records a central transition, tracking the running nu scale.
    pub fn observe(&mut self, record: CentralRecord) {
        self.nu_scale_n += 1;
        let n = self.nu_scale_n as f64;
        self.nu_scale_sq += (record.nu * record.nu - self.nu_scale_sq) / n;
        self.buffer.push(record);
    }

    /// Root mean square of observed nu (1 before any observation).
    pub fn nu_scale(&self) -> f64 {
        if self.nu_scale_n == 0 {
            1.0
        } else {
            self.nu_scale_sq.sqrt().max(1e-12)
        }
    }

    /// Per-block softmax of a flat logit vector.
    fn blockwise_softmax(&self, logits: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.total];
        for &(_, _, arity, offset) in &self.layout.blocks {
            let probs = softmax(&logits[offset..offset + arity]);
            out[offset..offset + arity].copy_from_slice(&probs);
        }
        out
    }

    /// Suggested action distribution for the given observation, evaluation
    /// mode: one probability block per (population, local state) group.
    pub fn suggest(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        let logits = self.mu.net.forward_eval(obs)?;
        Ok(self.blockwise_softmax(&logits))
    }

    /// Suggestion probabilities for one group.
    pub fn suggest_block(
        &self,
        suggestion: &[f64],
        population: usize,
        local_state: usize,
    ) -> Vec<f64> {
        let &(_, _, arity, offset) = self.layout.block(population, local_state);
        suggestion[offset..offset + arity].to_vec()
    }

    /// Target-network suggestion, used inside the sigma bootstrap.
    fn suggest_target(&self, obs: &[f64]) -> Result<Vec<f64>, NnError> {
        let logits = self.mu.target.net().forward_eval(obs)?;
        Ok(self.blockwise_softmax(&logits))
    }

    /// Variance estimate sigma(s, a) in evaluation mode.
    pub fn sigma_value(&self, obs: &[f64], action: &[f64]) -> Result<f64, NnError> {
        let mut input = obs.to_vec();
        input.extend_from_slice(action);
        Ok(self.sigma.net.forward_eval(&input)?[0])
    }

    /// One TD update of sigma toward nu + gamma sigma'(s', mu'(s')).
    pub fn update_sigma(
        &mut self,
        gamma: f64,
        batch: usize,
        dropout_rng: &mut StreamRng,
    ) -> Result<(), NnError> {
        let records: Vec<CentralRecord> = match self.buffer.sample(batch, &mut self.buffer_rng) {
            Some(r) => r.into_iter().cloned().collect(),
            None => return Ok(()),
        };
        let b = records.len();
        let in_dim = self.sigma.net.input_dim();
        let mut x = Array2::zeros((b, in_dim));
        let mut targets = vec![0.0; b];
        let scale = self.nu_scale();
        for (i, r) in records.iter().enumerate() {
            // the critic is fit at the executed action (DPG style) on
            // scale-normalized targets; the bootstrap term uses the target
            // policy's suggestion
            for (j, &v) in r.obs.iter().chain(r.action.iter()).enumerate() {
                x[[i, j]] = v;
            }
            targets[i] = if r.terminal {
                r.nu / scale
            } else {
                let a_next = self.suggest_target(&r.next_obs)?;
                let mut next_in = r.next_obs.clone();
                next_in.extend_from_slice(&a_next);
                r.nu / scale + gamma * self.sigma.target.net().forward_eval(&next_in)?[0]
            };
        }
        let (y, cache) = self.sigma.net.forward_train_batch(&x, Some(dropout_rng))?;
        let grad_out =
            Array2::from_shape_fn((b, 1), |(i, _)| 2.0 * (y[[i, 0]] - targets[i]) / b as f64);
        let (grads, _) = self.sigma.net.backward_batch(&cache, &grad_out);
        self.sigma.apply(&grads)
    }

    /// One policy update of mu descending sigma(s, mu(s)) - entropy * H(mu).
    /// The action gradient of sigma is pushed through the per-block softmax
    /// Jacobian and then through the mu network. The entropy bonus keeps the
    /// suggestion away from the simplex vertices, where the critic has no
    /// data and its extrapolation would otherwise be exploited.
    pub fn update_mu(
        &mut self,
        batch: usize,
        entropy: f64,
        dropout_rng: &mut StreamRng,
    ) -> Result<(), NnError> {
        let records: Vec<CentralRecord> = match self.buffer.sample(batch, &mut self.buffer_rng) {
            Some(r) => r.into_iter().cloned().collect(),
            None => return Ok(()),
        };
        let b = records.len();
        let mut x = Array2::zeros((b, self.obs_dim));
        for (i, r) in records.iter().enumerate() {
            for (j, &v) in r.obs.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        let (logits, cache) = self.mu.net.forward_train_batch(&x, Some(dropout_rng))?;
        let mut grad_logits = Array2::zeros((b, self.layout.total));
        for (i, r) in records.iter().enumerate() {
            let row: Vec<f64> = logits.row(i).to_vec();
            let probs = self.blockwise_softmax(&row);
            // d sigma / d a at (s, a = softmax(logits))
            let mut sigma_in = r.obs.clone();
            sigma_in.extend_from_slice(&probs);
            let g_full = self.sigma.net.input_gradient_eval(&sigma_in, &[1.0])?;
            let g = &g_full[self.obs_dim..];
            // softmax Jacobian per block: dL/dz_i = p_i (g_i - sum_j p_j g_j),
            // plus the gradient of -entropy * H: entropy * p_i (ln p_i + H)
            for &(_, _, arity, offset) in &self.layout.blocks {
                let p = &probs[offset..offset + arity];
                let gb = &g[offset..offset + arity];
                let dot: f64 = p.iter().zip(gb).map(|(pi, gi)| pi * gi).sum();
                let h: f64 = -p.iter().map(|&pi| pi * pi.ln()).sum::<f64>();
                for j in 0..arity {
                    let g_sigma = p[j] * (gb[j] - dot);
                    let g_entropy = entropy * p[j] * (p[j].ln() + h);
                    grad_logits[[i, offset + j]] = (g_sigma + g_entropy) / b as f64;
                }
            }
        }
        let (grads, _) = self.mu.net.backward_batch(&cache, &grad_logits);
        self.mu.apply(&grads)
    }
}
