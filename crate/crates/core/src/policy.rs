//! Network heads that turn observations into DMP parameters, and the
//! multi-action critic.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::DmpParamGrads;
use crate::dmp::{DmpConfig, DmpParams};
use crate::error::{NdpError, Result};
use crate::nn::{Mlp, MlpCache, MlpSpec};

/// Half-width of the multiplicative band alpha may move in when it is learned.
pub const ALPHA_BAND: f64 = 0.25;

/// Scale of the final actor layer at initialisation, so that `w` starts near
/// zero and trajectories start close to the unforced attractor.
pub const ACTOR_OUTPUT_INIT: f64 = 0.01;

/// How raw network outputs map onto `(w, g[, alpha])`.
///
/// Output layout: `w` row-major (`dof x n_basis`), then one goal offset per
/// dof, then one alpha logit when `learn_alpha` is set. The goal is relative
/// to the current robot position: `g = y0 + g_scale * out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmpHead {
    pub dmp: DmpConfig,
    pub dof: usize,
    pub w_scale: f64,
    pub g_scale: f64,
}

/// Decoded actor output for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutput {
    pub params: DmpParams,
    /// The DMP configuration to integrate with; differs from the head's only in
    /// alpha when alpha is learned.
    pub config: DmpConfig,
}

impl DmpHead {
    pub fn new(dmp: DmpConfig, dof: usize) -> Self {
        Self {
            dmp,
            dof,
            w_scale: 1.0,
            g_scale: 1.0,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.dof * (self.dmp.n_basis + 1) + usize::from(self.dmp.learn_alpha)
    }

    pub fn decode(&self, out: &[f64], y0: &[f64]) -> Result<ActorOutput> {
        if out.len() != self.output_dim() || y0.len() != self.dof {
            return Err(NdpError::Shape(format!(
                "head expects {} outputs and dof {}, got {} and {}",
                self.output_dim(),
                self.dof,
                out.len(),
                y0.len()
            )));
        }
        let n = self.dmp.n_basis;
        let nw = self.dof * n;
        let w = out[..nw].iter().map(|o| o * self.w_scale).collect();
        let g = (0..self.dof).map(|d| y0[d] + self.g_scale * out[nw + d]).collect();
        let config = if self.dmp.learn_alpha {
            self.dmp.with_alpha(self.dmp.alpha * (1.0 + ALPHA_BAND * out[nw + self.dof].tanh()))
        } else {
            self.dmp.clone()
        };
        Ok(ActorOutput {
            params: DmpParams::new(w, g, n)?,
            config,
        })
    }

    /// Pull `dL/dw`, `dL/dg` and `dL/dalpha` back onto the raw outputs.
    pub fn encode_grad(&self, out: &[f64], grads: &DmpParamGrads, d_alpha: f64) -> Vec<f64> {
        let nw = self.dof * self.dmp.n_basis;
        let mut d_out = Vec::with_capacity(self.output_dim());
        d_out.extend(grads.d_w.iter().map(|g| g * self.w_scale));
        d_out.extend(grads.d_g.iter().map(|g| g * self.g_scale));
        if self.dmp.learn_alpha {
            let t = out[nw + self.dof].tanh();
            d_out.push(d_alpha * self.dmp.alpha * ALPHA_BAND * (1.0 - t * t));
        }
        d_out
    }
}

/// Gradient of a loss with respect to one decoded actor output.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutputGrad {
    pub dmp: DmpParamGrads,
    pub d_alpha: f64,
}

/// The network `Phi(s) -> (w, g[, alpha])`.
#[derive(Debug, Clone)]
pub struct NdpActor {
    pub mlp: Mlp,
    pub head: DmpHead,
}

impl NdpActor {
    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], head: DmpHead, rng: &mut R) -> Self {
        let spec = MlpSpec::new(input_dim, hidden, head.output_dim());
        Self {
            mlp: Mlp::init(spec, ACTOR_OUTPUT_INIT, rng),
            head,
        }
    }

    /// Deterministic outputs for a batch of observations; `y0[b]` is the robot
    /// position the goal offset of sample `b` is relative to.
    pub fn forward(&self, obs: ArrayView2<'_, f64>, y0: &[Vec<f64>]) -> Result<(Vec<ActorOutput>, MlpCache)> {
        if obs.nrows() != y0.len() {
            return Err(NdpError::Shape(format!("{} observations but {} start positions", obs.nrows(), y0.len())));
        }
        let cache = self.mlp.forward(obs)?;
        let outputs = cache
            .output()
            .rows()
            .into_iter()
            .zip(y0)
            .map(|(row, y)| self.head.decode(row.as_slice().expect("contiguous row"), y))
            .collect::<Result<Vec<_>>>()?;
        Ok((outputs, cache))
    }

    pub fn backward(&self, cache: &MlpCache, grads: &[ActorOutputGrad]) -> Result<Vec<f64>> {
        let out = cache.output();
        if grads.len() != out.nrows() {
            return Err(NdpError::Shape("one gradient per forward sample is required".into()));
        }
        let mut d_out = Array2::zeros(out.dim());
        for ((mut dst, row), g) in d_out.rows_mut().into_iter().zip(out.rows()).zip(grads) {
            let encoded = self.head.encode_grad(row.as_slice().expect("contiguous row"), &g.dmp, g.d_alpha);
            dst.assign(&ndarray::ArrayView1::from(&encoded));
        }
        self.mlp.backward(cache, d_out.view())
    }
}

/// Critic trunk with one scalar head per sub-step of a rollout block.
#[derive(Debug, Clone)]
pub struct CriticHeads {
    pub mlp: Mlp,
}

impl CriticHeads {
    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], heads: usize, rng: &mut R) -> Self {
        Self {
            mlp: Mlp::init(MlpSpec::new(input_dim, hidden, heads), 1.0, rng),
        }
    }

    pub fn heads(&self) -> usize {
        self.mlp.spec().output_dim
    }

    /// `batch x heads` value estimates.
    pub fn forward(&self, obs: ArrayView2<'_, f64>) -> Result<MlpCache> {
        self.mlp.forward(obs)
    }
}
