use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autograd::{alpha_sensitivity, trajectory_jacobians};
use crate::dmp::{rollout, subsample_indices, RolloutTape};
use crate::envs::DT as ENV_DT;
use crate::error::{NdpError, Result};
use crate::nn::{Mlp, MlpCache, MlpSpec};
use crate::policy::{DmpHead, ACTOR_OUTPUT_INIT};

pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

const ALPHA_FD_STEP: f64 = 1e-5;

/// What the trunk output means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionHead {
    /// DMP parameters; `k` targets are sub-sampled from one rollout.
    Dmp(DmpHead),
    /// `k` target positions, each `y0 + g_scale * out`.
    Raw { dof: usize, k: usize, g_scale: f64 },
}

impl ActionHead {
    pub fn output_dim(&self) -> usize {
        match self {
            ActionHead::Dmp(h) => h.output_dim(),
            ActionHead::Raw { dof, k, .. } => dof * k,
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            ActionHead::Dmp(h) => h.dof,
            ActionHead::Raw { dof, .. } => *dof,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            ActionHead::Dmp(h) => h.dmp.k_rollout,
            ActionHead::Raw { k, .. } => *k,
        }
    }
}

/// Mean targets for one block.
#[derive(Debug, Clone)]
pub struct BlockPlan {
    /// `k x dof` target positions.
    pub means: Vec<Vec<f64>>,
    /// `k x dof` target velocities in env time; zero for raw heads.
    pub target_vel: Vec<Vec<f64>>,
    tape: Option<RolloutTape>,
}

impl BlockPlan {
    pub fn tape(&self) -> Option<&RolloutTape> {
        self.tape.as_ref()
    }
}

#[derive(Debug, Clone)]
pub struct BlockForward {
    pub plans: Vec<BlockPlan>,
    cache: MlpCache,
}

/// Gaussian policy over the `k` sub-sampled targets of a block.
#[derive(Debug, Clone)]
pub struct BlockPolicy {
    pub mlp: Mlp,
    pub head: ActionHead,
    /// State-independent, one per dof, shared by all sub-steps.
    pub log_std: Vec<f64>,
}

impl BlockPolicy {
    pub fn new<R: Rng>(input_dim: usize, hidden: &[usize], head: ActionHead, log_std_init: f64, rng: &mut R) -> Result<Self> {
        if let ActionHead::Dmp(h) = &head {
            h.dmp.validate()?;
        }
        if head.k() == 0 || head.dof() == 0 {
            return Err(NdpError::Config("head needs k >= 1 and dof >= 1".into()));
        }
        let spec = MlpSpec::new(input_dim, hidden, head.output_dim());
        spec.validate()?;
        Ok(Self {
            mlp: Mlp::init(spec, ACTOR_OUTPUT_INIT, rng),
            log_std: vec![log_std_init; head.dof()],
            head,
        })
    }

    pub fn k(&self) -> usize {
        self.head.k()
    }

    pub fn dof(&self) -> usize {
        self.head.dof()
    }

    /// DMP time per env time: a block of `k` env steps is one rollout of `m` integrator steps.
    fn time_scale(h: &DmpHead) -> f64 {
        h.dmp.k_rollout as f64 * ENV_DT / (h.dmp.m_steps as f64 * h.dmp.dt())
    }

    /// Plan a batch of blocks from observations and the robot state (`y`, `v`).
    pub fn forward(&self, obs: ArrayView2<'_, f64>, y: &[Vec<f64>], v: &[Vec<f64>]) -> Result<BlockForward> {
        if obs.nrows() != y.len() || y.len() != v.len() {
            return Err(NdpError::Shape("one robot state per observation is required".into()));
        }
        let cache = self.mlp.forward(obs)?;
        let out = cache.output();
        let mut plans = Vec::with_capacity(y.len());
        for (b, row) in out.rows().into_iter().enumerate() {
            let row = row.as_slice().expect("contiguous row");
            plans.push(self.plan(row, &y[b], &v[b])?);
        }
        Ok(BlockForward { plans, cache })
    }

    fn plan(&self, out: &[f64], y: &[f64], v: &[f64]) -> Result<BlockPlan> {
        let dof = self.dof();
        if y.len() != dof || v.len() != dof {
            return Err(NdpError::Shape(format!("robot state has {} dofs, policy has {dof}", y.len())));
        }
        match &self.head {
            ActionHead::Raw { k, g_scale, .. } => Ok(BlockPlan {
                means: (0..*k).map(|j| (0..dof).map(|d| y[d] + g_scale * out[j * dof + d]).collect()).collect(),
                target_vel: vec![vec![0.0; dof]; *k],
                tape: None,
            }),
            ActionHead::Dmp(h) => {
                let decoded = h.decode(out, y)?;
                let scale = Self::time_scale(h);
                let y0_dot: Vec<f64> = v.iter().map(|x| x * scale).collect();
                let tape = rollout(&decoded.params, y, &y0_dot, &decoded.config)?;
                let idx = subsample_indices(h.dmp.m_steps, h.dmp.k_rollout)?;
                Ok(BlockPlan {
                    means: idx.iter().map(|&t| tape.states[t].y.clone()).collect(),
                    target_vel: idx.iter().map(|&t| tape.states[t].y_dot.iter().map(|x| x / scale).collect()).collect(),
                    tape: Some(tape),
                })
            }
        }
    }

    /// Parameter gradient of `sum_b sum_j d_means[b][j] . means[b][j]`.
    pub fn backward(&self, fwd: &BlockForward, d_means: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        if d_means.len() != fwd.plans.len() {
            return Err(NdpError::Shape("one mean gradient per planned block is required".into()));
        }
        let out = fwd.cache.output();
        let mut d_out = Array2::<f64>::zeros(out.dim());
        let dof = self.dof();
        for (b, (plan, upstream)) in fwd.plans.iter().zip(d_means).enumerate() {
            match &self.head {
                ActionHead::Raw { g_scale, .. } => {
                    for (j, u) in upstream.iter().enumerate() {
                        for d in 0..dof {
                            d_out[[b, j * dof + d]] = g_scale * u[d];
                        }
                    }
                }
                ActionHead::Dmp(h) => {
                    let tape = plan.tape.as_ref().expect("dmp plans keep their tape");
                    let grads = trajectory_jacobians(tape)?.backward(upstream)?;
                    let d_alpha = if h.dmp.learn_alpha {
                        let sens = alpha_sensitivity(tape, ALPHA_FD_STEP)?;
                        let idx = subsample_indices(h.dmp.m_steps, h.dmp.k_rollout)?;
                        idx.iter()
                            .zip(upstream)
                            .map(|(&t, u)| u.iter().zip(&sens[t]).map(|(a, s)| a * s).sum::<f64>())
                            .sum()
                    } else {
                        0.0
                    };
                    let row = out.row(b);
                    let encoded = h.encode_grad(row.as_slice().expect("contiguous row"), &grads, d_alpha);
                    for (dst, g) in d_out.row_mut(b).iter_mut().zip(encoded) {
                        *dst = g;
                    }
                }
            }
        }
        self.mlp.backward(&fwd.cache, d_out.view())
    }

    pub fn sample<R: Rng>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        mean.iter()
            .zip(&self.log_std)
            .map(|(m, s)| {
                let z: f64 = rng.sample(StandardNormal);
                m + s.exp() * z
            })
            .collect()
    }

    pub fn log_prob(&self, action: &[f64], mean: &[f64]) -> f64 {
        action
            .iter()
            .zip(mean)
            .zip(&self.log_std)
            .map(|((a, m), s)| {
                let z = (a - m) / s.exp();
                -0.5 * z * z - s - 0.5 * LOG_2PI
            })
            .sum()
    }

    /// Entropy of one sub-step's action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|s| s + 0.5 * (1.0 + LOG_2PI)).sum()
    }
}
