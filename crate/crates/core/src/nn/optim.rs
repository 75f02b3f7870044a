use serde::{Deserialize, Serialize};

use crate::error::{NdpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Gradients are rescaled to this global norm before the update; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            max_grad_norm: Some(0.5),
        }
    }
}

/// Rescale `grads` in place so their L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Clip, then apply one bias-corrected Adam update. Returns the pre-clip norm.
    pub fn step(&mut self, params: &mut [f64], grads: &mut [f64]) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NdpError::Shape(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NdpError::NonFinite(format!("gradient entry {bad}; training aborted")));
        }
        let norm = match self.config.max_grad_norm {
            Some(max) => clip_grad_norm(grads, max),
            None => grads.iter().map(|g| g * g).sum::<f64>().sqrt(),
        };
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps, .. } = self.config;
        let bias1 = 1.0 - beta1.powi(self.t as i32);
        let bias2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads.iter()).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bias1) / ((*v / bias2).sqrt() + eps);
        }
        Ok(norm)
    }
}
