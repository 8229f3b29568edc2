//! Two-layer rectifier MLP with inverted dropout and hand-derived
//! backpropagation, including input gradients (needed for the action
//! gradient of the variance network).

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::rng::StreamRng;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input length {got} does not match network input dim {expect}")]
    DimensionMismatch { got: usize, expect: usize },
    #[error("non-finite {0} encountered; halting before corrupting parameters")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub w1: Array2<f64>, // hidden x input
    pub b1: Array1<f64>,
    pub w2: Array2<f64>, // output x hidden
    pub b2: Array1<f64>,
    pub dropout: f64,
}

/// Intermediate activations of a forward pass, kept for the backward pass.
pub struct ForwardCache {
    x: Array2<f64>,    // batch x input
    h: Array2<f64>,    // batch x hidden, post-activation (and post-dropout)
    mask: Array2<f64>, // dropout keep-mask already scaled by 1/(1-p)
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Mlp {
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        dropout: f64,
        rng: &mut StreamRng,
    ) -> Self {
        let glorot = |rows: usize, cols: usize, rng: &mut StreamRng| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
        };
        Mlp {
            w1: glorot(hidden_dim, input_dim, rng),
            b1: Array1::zeros(hidden_dim),
            w2: glorot(output_dim, hidden_dim, rng),
            b2: Array1::zeros(output_dim),
            dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                got: x.ncols(),
                expect: self.input_dim(),
            });
        }
        Ok(())
    }

    /// Deterministic evaluation-mode forward pass for a batch (rows).
    pub fn forward_eval_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(x)?;
        let h = (x.dot(&self.w1.t()) + &self.b1).mapv(|v| v.max(0.0));
        Ok(h.dot(&self.w2.t()) + &self.b2)
    }

    pub fn forward_eval(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        Ok(self.forward_eval_batch(&x)?.row(0).to_vec())
    }

    /// Training-mode forward pass: hidden units dropped with probability
    /// `dropout`, survivors scaled by 1/(1-p) so the expected pre-output
    /// activation matches evaluation mode. Pass `None` for the rng to run
    /// in training mode without dropout (p = 0 equivalent).
    pub fn forward_train_batch(
        &self,
        x: &Array2<f64>,
        rng: Option<&mut StreamRng>,
    ) -> Result<(Array2<f64>, ForwardCache), NnError> {
        self.check_input(x)?;
        let pre = x.dot(&self.w1.t()) + &self.b1;
        let act = pre.mapv(|v| v.max(0.0));
        let mask = match rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                Array2::from_shape_fn(act.raw_dim(), |_| {
                    if rng.random_range(0.0..1.0) < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            }
            _ => Array2::ones(act.raw_dim()),
        };
        let h = &act * &mask;
        let y = h.dot(&self.w2.t()) + &self.b2;
        Ok((
            y,
            ForwardCache {
                x: x.clone(),
                h,
                mask,
            },
        ))
    }

    /// Backpropagates `grad_out` (batch x output) through the cached forward
    /// pass, returning parameter gradients and the gradient with respect to
    /// the inputs.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        grad_out: &Array2<f64>,
    ) -> (MlpGrads, Array2<f64>) {
        let grad_w2 = grad_out.t().dot(&cache.h);
        let grad_b2 = grad_out.sum_axis(Axis(0));
        let grad_h = grad_out.dot(&self.w2);
        // through dropout and the rectifier: h > 0 iff pre > 0 and kept
        let grad_pre = &grad_h * &cache.mask * cache.h.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let grad_w1 = grad_pre.t().dot(&cache.x);
        let grad_b1 = grad_pre.sum_axis(Axis(0));
        let grad_x = grad_pre.dot(&self.w1);
        (
            MlpGrads {
                w1: grad_w1,
                b1: grad_b1,
                w2: grad_w2,
                b2: grad_b2,
            },
            grad_x,
        )
    }

    /// Gradient of the scalar output sum with respect to a single input row,
    /// in evaluation mode.
    pub fn input_gradient_eval(&self, x: &[f64], grad_out: &[f64]) -> Result<Vec<f64>, NnError> {
        let xa = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let (_, cache) = self.forward_train_batch(&xa, None)?;
        let go = Array2::from_shape_vec((1, grad_out.len()), grad_out.to_vec()).unwrap();
        let (_, gx) = self.backward_batch(&cache, &go);
        Ok(gx.row(0).to_vec())
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        vec![&self.w1, &self.w2]
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }
}
