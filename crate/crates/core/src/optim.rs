//! Adam over [`ModelParams`].

use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: ModelParams,
    pub v: ModelParams,
    pub steps: u64,
}

impl Adam {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    /// One bias-corrected update.
    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) -> Result<()> {
        if params.num_params() != self.m.num_params() || grads.num_params() != self.m.num_params() {
            return Err(Error::contract("optimizer state does not match parameters"));
        }
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let c1 = 1.0 - libm::pow(beta1, t as f64);
        let c2 = 1.0 - libm::pow(beta2, t as f64);
        let g = grads.slices();
        let mut m = self.m.slices_mut();
        let mut v = self.v.slices_mut();
        for (k, p) in params.slices_mut().into_iter().enumerate() {
            for i in 0..p.len() {
                let gi = g[k][i];
                m[k][i] = beta1 * m[k][i] + (1.0 - beta1) * gi;
                v[k][i] = beta2 * v[k][i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[k][i] / c1;
                let v_hat = v[k][i] / c2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
