//! Adam with bias correction, specialized to the two-layer MLP.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpGrads, NnError};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams { lr, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub params: AdamParams,
    pub step_count: u64,
    m_w1: Array2<f64>,
    v_w1: Array2<f64>,
    m_b1: Array1<f64>,
    v_b1: Array1<f64>,
    m_w2: Array2<f64>,
    v_w2: Array2<f64>,
    m_b2: Array1<f64>,
    v_b2: Array1<f64>,
}

impl Adam {
    pub fn new(net: &Mlp, params: AdamParams) -> Self {
        Adam {
            params,
            step_count: 0,
            m_w1: Array2::zeros(net.w1.raw_dim()),
            v_w1: Array2::zeros(net.w1.raw_dim()),
            m_b1: Array1::zeros(net.b1.raw_dim()),
            v_b1: Array1::zeros(net.b1.raw_dim()),
            m_w2: Array2::zeros(net.w2.raw_dim()),
            v_w2: Array2::zeros(net.w2.raw_dim()),
            m_b2: Array1::zeros(net.b2.raw_dim()),
            v_b2: Array1::zeros(net.b2.raw_dim()),
        }
    }

    /// One Adam update. Rejects non-finite gradients before touching any
    /// parameter.
    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) -> Result<(), NnError> {
        let finite = grads.w1.iter().all(|g| g.is_finite())
            && grads.b1.iter().all(|g| g.is_finite())
            && grads.w2.iter().all(|g| g.is_finite())
            && grads.b2.iter().all(|g| g.is_finite());
        if !finite {
            return Err(NnError::NonFinite("gradient"));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let p = self.params;
        let bc1 = 1.0 - p.beta1.powi(t);
        let bc2 = 1.0 - p.beta2.powi(t);

        macro_rules! update {
            ($param:expr, $grad:expr, $m:expr, $v:expr) => {
                ndarray::Zip::from($param)
                    .and($grad)
                    .and($m)
                    .and($v)
                    .for_each(|theta, &g, m, v| {
                        *m = p.beta1 * *m + (1.0 - p.beta1) * g;
                        *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *theta -= p.lr * m_hat / (v_hat.sqrt() + p.eps);
                    });
            };
        }
        update!(&mut net.w1, &grads.w1, &mut self.m_w1, &mut self.v_w1);
        update!(&mut net.b1, &grads.b1, &mut self.m_b1, &mut self.v_b1);
        update!(&mut net.w2, &grads.w2, &mut self.m_w2, &mut self.v_w2);
        update!(&mut net.b2, &grads.b2, &mut self.m_b2, &mut self.v_b2);
        Ok(())
    }
}
