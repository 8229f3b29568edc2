//! Minimal neural substrate: a single-hidden-layer rectifier MLP with
//! inverted dropout, exact analytic gradients, Adam, target copies and a
//! uniform replay buffer.

mod adam;
mod buffer;
mod checkpoint;
mod mlp;

pub use adam::{Adam, AdamParams};
pub use buffer::ReplayBuffer;
pub use checkpoint::{load_bundle, save_bundle, CheckpointError};
pub use mlp::{ForwardCache, Mlp, MlpGrads, NnError};

use crate::rng::StreamRng;

/// Frozen copy of an MLP synchronized every `period` training updates.
#[derive(Debug, Clone)]
pub struct TargetNetwork {
    net: Mlp,
    period: u64,
    updates_since_sync: u64,
}

impl TargetNetwork {
    pub fn new(source: &Mlp, period: u64) -> Self {
        TargetNetwork {
            net: source.clone(),
            period: period.max(1),
            updates_since_sync: 0,
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// Counts one training update of the source network and copies its
    /// parameters when the period elapses.
    pub fn tick(&mut self, source: &Mlp) {
        self.updates_since_sync += 1;
        if self.updates_since_sync >= self.period {
            self.net = source.clone();
            self.updates_since_sync = 0;
        }
    }
}

/// Glorot-uniform initialized MLP plus its optimizer and target copy.
#[derive(Debug, Clone)]
pub struct TrainedNet {
    pub net: Mlp,
    pub target: TargetNetwork,
    pub opt: Adam,
}

impl TrainedNet {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        dropout: f64,
        params: AdamParams,
        target_period: u64,
        rng: &mut StreamRng,
    ) -> Self {
        let net = Mlp::new(input_dim, hidden_dim, output_dim, dropout, rng);
        let target = TargetNetwork::new(&net, target_period);
        let opt = Adam::new(&net, params);
        TrainedNet { net, target, opt }
    }

    pub fn apply(&mut self, grads: &MlpGrads) -> Result<(), NnError> {
        self.opt.step(&mut self.net, grads)?;
        self.target.tick(&self.net);
        Ok(())
    }
}
