//! Per-agent best-response Q-learner, shared by VMQ individuals and all
//! baselines. NFSP agents additionally carry an average-policy network
//! trained by classification on their own best-response actions.

use ndarray::Array2;
use rand::Rng;

use crate::nn::{AdamParams, NnError, ReplayBuffer, TrainedNet};
use crate::rng::StreamRng;

/// One completed decision-to-decision transition.
#[derive(Debug, Clone)]
pub struct Record {
    pub input: Vec<f64>,
    pub local_state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_input: Vec<f64>,
    pub next_state: usize,
    pub terminal: bool,
}

/// Decision context held between an agent's decision point and the next.
#[derive(Debug, Clone)]
pub struct PendingContext {
    pub input: Vec<f64>,
    pub local_state: usize,
    pub action: usize,
    pub accumulated_reward: f64,
}

pub struct IndividualAgent {
    pub q: TrainedNet,
    pub buffer: ReplayBuffer<Record>,
    pub action_rng: StreamRng,
    pub buffer_rng: StreamRng,
    pub pending: Option<PendingContext>,
    /// NFSP only: average-policy network and its supervised buffer.
    pub avg_policy: Option<TrainedNet>,
    pub supervised: Option<ReplayBuffer<(Vec<f64>, usize)>>,
    /// `legal[k]` = number of legal actions in local state `k`; the network
    /// head covers the superset `max(legal)`.
    legal: Vec<usize>,
}

impl IndividualAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        input_dim: usize,
        legal: Vec<usize>,
        hidden_dim: usize,
        dropout: f64,
        adam: AdamParams,
        target_period: u64,
        buffer_capacity: usize,
        with_avg_policy: bool,
        init_rng: &mut StreamRng,
        action_rng: StreamRng,
        buffer_rng: StreamRng,
    ) -> Self {
        let out = legal.iter().copied().max().unwrap_or(1);
        let q = TrainedNet::new(input_dim, hidden_dim, out, dropout, adam, target_period, init_rng);
        let avg_policy = with_avg_policy.then(|| {
            TrainedNet::new(input_dim, hidden_dim, out, dropout, adam, target_period, init_rng)
        });
        IndividualAgent {
            q,
            buffer: ReplayBuffer::new(buffer_capacity),
            action_rng,
            buffer_rng,
            pending: None,
            avg_policy,
            supervised: with_avg_policy.then(|| ReplayBuffer::new(buffer_capacity)),
            legal,
        }
    }

    pub fn n_legal(&self, local_state: usize) -> usize {
        self.legal[local_state]
    }

    /// Value of the agent at a decision point: max Q over the legal actions
    /// of its local state, evaluation mode.
    pub fn value(&self, input: &[f64], local_state: usize) -> Result<f64, NnError> {
        let q = self.q.net.forward_eval(input)?;
        Ok(q[..self.legal[local_state]]
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Greedy action (ties broken uniformly at random).
    pub fn greedy_action(&mut self, input: &[f64], local_state: usize) -> Result<usize, NnError> {
        let q = self.q.net.forward_eval(input)?;
        let legal = &q[..self.legal[local_state]];
        let best = legal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties: Vec<usize> = legal
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == best)
            .map(|(i, _)| i)
            .collect();
        Ok(ties[self.action_rng.random_range(0..ties.len())])
    }

    /// epsilon-greedy over the legal actions of the current local state.
    pub fn epsilon_greedy(
        &mut self,
        input: &[f64],
        local_state: usize,
        eps: f64,
    ) -> Result<usize, NnError> {
        if self.action_rng.random_range(0.0..1.0) < eps {
            Ok(self.action_rng.random_range(0..self.legal[local_state]))
        } else {
            self.greedy_action(input, local_state)
        }
    }

    /// Samples from the average-policy network (NFSP off-anticipatory arm).
    pub fn sample_avg_policy(&mut self, input: &[f64], local_state: usize) -> Result<usize, NnError> {
        let net = &self.avg_policy.as_ref().expect("NFSP agent").net;
        let logits = net.forward_eval(input)?;
        let probs = softmax(&logits[..self.legal[local_state]]);
        let draw: f64 = self.action_rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return Ok(i);
            }
        }
        Ok(probs.len() - 1)
    }

    /// One squared-TD minibatch update: target r + gamma max_{u' legal(k')}
    /// Q'(s', k', u'), or r alone on terminal transitions.
    pub fn update(
        &mut self,
        gamma: f64,
        batch: usize,
        dropout_rng: &mut StreamRng,
    ) -> Result<(), NnError> {
        let records: Vec<Record> = match self.buffer.sample(batch, &mut self.buffer_rng) {
            Some(r) => r.into_iter().cloned().collect(),
            None => return Ok(()),
        };
        let b = records.len();
        let in_dim = self.q.net.input_dim();
        let mut x = Array2::zeros((b, in_dim));
        let mut x_next = Array2::zeros((b, in_dim));
        for (i, r) in records.iter().enumerate() {
            for (j, &v) in r.input.iter().enumerate() {
                x[[i, j]] = v;
            }
            for (j, &v) in r.next_input.iter().enumerate() {
                x_next[[i, j]] = v;
            }
        }
        let q_next = self.q.target.net().forward_eval_batch(&x_next)?;
        let (y, cache) = self.q.net.forward_train_batch(&x, Some(dropout_rng))?;
        let mut grad_out = Array2::zeros((b, self.q.net.output_dim()));
        for (i, r) in records.iter().enumerate() {
            let target = if r.terminal {
                r.reward
            } else {
                let legal = self.legal[r.next_state];
                let best = (0..legal).map(|u| q_next[[i, u]]).fold(f64::NEG_INFINITY, f64::max);
                r.reward + gamma * best
            };
            grad_out[[i, r.action]] = 2.0 * (y[[i, r.action]] - target) / b as f64;
        }
        let (grads, _) = self.q.net.backward_batch(&cache, &grad_out);
        self.q.apply(&grads)
    }

    /// One cross-entropy minibatch update of the NFSP average-policy net on
    /// stored (state, best-response action) pairs.
    pub fn update_avg_policy(
        &mut self,
        batch: usize,
        dropout_rng: &mut StreamRng,
    ) -> Result<(), NnError> {
        let (Some(avg), Some(sup)) = (self.avg_policy.as_mut(), self.supervised.as_mut()) else {
            return Ok(());
        };
        let records: Vec<(Vec<f64>, usize)> = match sup.sample(batch, &mut self.buffer_rng) {
            Some(r) => r.into_iter().cloned().collect(),
            None => return Ok(()),
        };
        let b = records.len();
        let mut x = Array2::zeros((b, avg.net.input_dim()));
        for (i, (input, _)) in records.iter().enumerate() {
            for (j, &v) in input.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        let (logits, cache) = avg.net.forward_train_batch(&x, Some(dropout_rng))?;
        // cross-entropy over the full head; illegal actions are never
        // labeled, so their probability is driven toward zero
        let mut grad_out = Array2::zeros((b, avg.net.output_dim()));
        for (i, (_, action)) in records.iter().enumerate() {
            let row: Vec<f64> = logits.row(i).to_vec();
            let probs = softmax(&row);
            for (j, p) in probs.iter().enumerate() {
                grad_out[[i, j]] = (p - if j == *action { 1.0 } else { 0.0 }) / b as f64;
            }
        }
        let (grads, _) = avg.net.backward_batch(&cache, &grad_out);
        avg.apply(&grads)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
