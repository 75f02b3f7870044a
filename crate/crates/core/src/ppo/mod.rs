//! PPO over blocks of `k` actions with a `k`-headed critic.
//!
//! One policy evaluation plans a whole block: the DMP head integrates a
//! rollout and sub-samples `k` target positions, the raw head emits `k`
//! targets directly. Gaussian noise is added to each sub-sampled target and
//! the likelihood-ratio gradient flows back through the block means.

mod agent;
mod controller;
mod train;
mod update;

use serde::{Deserialize, Serialize};

pub use agent::{ActionHead, BlockForward, BlockPlan, BlockPolicy, LOG_2PI};
pub use controller::{inverse_controller, InverseController};
pub use train::{
    collect_rollouts, evaluate, trace_episode, train_rl, Algo, CurvePoint, EvalResult, RlConfig, RolloutSettings, Trainer, TrainingRun, EVAL_SEED_BASE,
};
pub use update::{minibatch_grad, ppo_update, surrogate_loss, surrogate_terms, MinibatchGrad, SurrogateTerm, UpdateStats};

use crate::error::{NdpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub batch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub lr: f64,
    pub normalize_obs: bool,
    pub normalize_returns: bool,
    pub linear_lr_decay: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.1,
            epochs: 10,
            minibatches: 32,
            batch_size: 2048,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            lr: 3e-4,
            normalize_obs: true,
            normalize_returns: true,
            linear_lr_decay: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) || !unit(self.gae_lambda) {
            return Err(NdpError::Config("gamma and gae_lambda must lie in [0, 1]".into()));
        }
        if !(self.clip > 0.0) || !(self.lr > 0.0) || !(self.max_grad_norm > 0.0) {
            return Err(NdpError::Config("clip, lr and max_grad_norm must be positive".into()));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.batch_size == 0 {
            return Err(NdpError::Config("epochs, minibatches and batch_size must be positive".into()));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return Err(NdpError::Config("loss coefficients must be non-negative".into()));
        }
        Ok(())
    }
}

/// One executed sub-step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Index into [`EpisodeBuffer::blocks`]; the observation is the block's.
    pub block: usize,
    pub action: Vec<f64>,
    pub logp: f64,
    /// Reward after return scaling; what the critic is trained on.
    pub reward: f64,
    pub raw_reward: f64,
    pub done: bool,
    pub value_head: usize,
    pub value: f64,
    /// Bootstrap value: the next head of the same block, or head 0 of the
    /// next block after the last sub-step.
    pub next_value: f64,
}

/// Decision point: the (normalised) observation and robot state the block was planned from.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub obs: Vec<f64>,
    /// The observation before normalisation, for updating the running statistics.
    pub raw_obs: Vec<f64>,
    pub robot_pos: Vec<f64>,
    pub robot_vel: Vec<f64>,
    pub first: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_return: f64,
    pub success: bool,
    pub length: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeBuffer {
    pub blocks: Vec<BlockRecord>,
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
    /// Policy network evaluations made while collecting.
    pub actor_forwards: usize,
}

impl EpisodeBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Fill `advantages` and `returns` from the stored values.
    pub fn compute_gae(&mut self, gamma: f64, lambda: f64) {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        let next: Vec<f64> = self.transitions.iter().map(|t| t.next_value).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let (adv, ret) = gae(&rewards, &values, &next, &dones, gamma, lambda);
        self.advantages = adv;
        self.returns = ret;
    }
}

/// Generalised advantage estimation over a flat sequence of steps.
///
/// `next_values[t]` is the bootstrap for step `t`; it is ignored when
/// `dones[t]` is set, which also stops the recursion.
pub fn gae(rewards: &[f64], values: &[f64], next_values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_values[t] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Zero mean, unit (population) standard deviation.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len().max(1) as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return adv.iter().map(|a| a - mean).collect();
    }
    adv.iter().map(|a| (a - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_step_hand_example() {
        let r = [1.0, 0.0, 1.0];
        let v = [0.5, 0.5, 0.5];
        let next = [0.5, 0.5, 0.0];
        let done = [false, false, true];
        let (adv, ret) = gae(&r, &v, &next, &done, 0.9, 0.9);
        // d2 = 0.5, d1 = -0.05, d0 = 0.95; A1 = d1 + 0.81 A2, A0 = d0 + 0.81 A1
        let expect = [1.23755, 0.355, 0.5];
        for i in 0..3 {
            assert!((adv[i] - expect[i]).abs() < 1e-12, "{i}: {}", adv[i]);
            assert!((ret[i] - expect[i] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_zero_and_lambda_zero_collapse_to_td_error() {
        let r = [0.3, -1.0, 2.0, 0.1];
        let v = [0.2, 0.4, -0.3, 1.0];
        let next = [0.4, -0.3, 1.0, 0.7];
        let done = [false, false, false, false];
        let (adv, _) = gae(&r, &v, &next, &done, 0.0, 0.95);
        for i in 0..4 {
            assert_eq!(adv[i], r[i] - v[i]);
        }
        let (adv, _) = gae(&r, &v, &next, &done, 0.9, 0.0);
        for i in 0..4 {
            assert!((adv[i] - (r[i] + 0.9 * next[i] - v[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn episode_boundary_stops_the_recursion() {
        let r = [1.0, 1.0, 5.0];
        let v = [0.0; 3];
        let next = [0.0, 100.0, 0.0];
        let done = [false, true, false];
        let (adv, _) = gae(&r, &v, &next, &done, 0.99, 0.95);
        assert_eq!(adv[1], 1.0);
        assert_eq!(adv[2], 5.0);
    }

    #[test]
    fn advantage_normalization_moments() {
        let adv: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sin() * 3.0 + 7.0).collect();
        let n = normalize_advantages(&adv);
        let mean = n.iter().sum::<f64>() / n.len() as f64;
        let std = (n.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n.len() as f64).sqrt();
        assert!(mean.abs() <= 1e-6);
        assert!((std - 1.0).abs() <= 1e-6);
        assert_eq!(normalize_advantages(&[2.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = PpoConfig::default();
        assert_eq!((c.clip, c.epochs, c.minibatches, c.batch_size), (0.1, 10, 32, 2048));
        c.validate().unwrap();
        assert!(PpoConfig { gamma: 1.5, ..c.clone() }.validate().is_err());
        assert!(PpoConfig { minibatches: 0, ..c }.validate().is_err());
    }

    #[test]
    fn config_uses_field_names() {
        let json = serde_json::to_value(PpoConfig::default()).unwrap();
        for key in [
            "gamma",
            "gae_lambda",
            "clip",
            "epochs",
            "minibatches",
            "batch_size",
            "value_coef",
            "entropy_coef",
            "max_grad_norm",
            "lr",
        ] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
