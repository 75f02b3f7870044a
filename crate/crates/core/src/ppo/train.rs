use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{ActionHead, BlockPolicy};
use super::controller::InverseController;
use super::update::{ppo_update, UpdateStats};
use super::{BlockRecord, EpisodeBuffer, EpisodeSummary, PpoConfig, Transition};
use crate::dmp::DmpConfig;
use crate::envs::{EnvConfig, EnvKind, PointEnv, TraceRow};
use crate::error::{NdpError, Result};
use crate::nn::{batch_from_rows, Adam, AdamConfig, Checkpoint, ReturnScaler, RunningMeanStd, Tensor};
use crate::policy::{CriticHeads, DmpHead};

/// Evaluation episodes use seeds `EVAL_SEED_BASE + i`, independent of the training seed.
pub const EVAL_SEED_BASE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "ndp")]
    Ndp,
    #[serde(rename = "ppo")]
    Ppo,
    #[serde(rename = "ppo-multi")]
    PpoMulti,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Ndp, Algo::Ppo, Algo::PpoMulti];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ndp => "ndp",
            Algo::Ppo => "ppo",
            Algo::PpoMulti => "ppo-multi",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| NdpError::Config(format!("unknown algorithm '{name}' (expected ndp, ppo or ppo-multi)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlConfig {
    pub algo: Algo,
    pub env: String,
    /// Actions per policy evaluation; vanilla PPO always uses 1.
    pub k: usize,
    /// Defaults to the task's horizon.
    pub horizon: Option<usize>,
    /// `dmp.k_rollout` must equal `k`.
    pub dmp: DmpConfig,
    pub hidden: Vec<usize>,
    pub w_scale: f64,
    pub g_scale: f64,
    pub log_std_init: f64,
    pub controller: InverseController,
    pub ppo: PpoConfig,
    pub total_steps: usize,
    pub eval_episodes: usize,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Ndp,
            env: "reach".into(),
            k: 5,
            horizon: None,
            dmp: DmpConfig::new(6, 35, 5),
            hidden: vec![100, 100],
            w_scale: 10.0,
            g_scale: 1.0,
            log_std_init: 0.0,
            controller: InverseController::Identity,
            ppo: PpoConfig::default(),
            total_steps: 200_000,
            eval_episodes: 20,
        }
    }
}

impl RlConfig {
    pub fn env_kind(&self) -> Result<EnvKind> {
        EnvKind::from_name(&self.env)
    }

    pub fn effective_k(&self) -> usize {
        match self.algo {
            Algo::Ppo => 1,
            _ => self.k,
        }
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let kind = self.env_kind()?;
        let mut cfg = EnvConfig::new(kind, self.effective_k());
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        cfg.control = self.controller.control_mode();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn head(&self) -> Result<ActionHead> {
        let dof = self.env_kind()?.action_dim();
        Ok(match self.algo {
            Algo::Ndp => ActionHead::Dmp(DmpHead {
                w_scale: self.w_scale,
                g_scale: self.g_scale,
                ..DmpHead::new(self.dmp.clone(), dof)
            }),
            Algo::Ppo | Algo::PpoMulti => ActionHead::Raw {
                dof,
                k: self.effective_k(),
                g_scale: self.g_scale,
            },
        })
    }

    pub fn episodes_per_batch(&self) -> Result<usize> {
        let horizon = self.env_config()?.horizon;
        Ok(self.ppo.batch_size.div_ceil(horizon))
    }

    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        self.env_config()?;
        if self.algo == Algo::Ndp {
            self.dmp.validate()?;
            if self.dmp.k_rollout != self.k {
                return Err(NdpError::Config(format!(
                    "dmp.k_rollout = {} but k = {}; they must agree",
                    self.dmp.k_rollout, self.k
                )));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(NdpError::Config("hidden layer widths must be positive".into()));
        }
        if !(self.g_scale > 0.0) || !(self.w_scale > 0.0) || !self.log_std_init.is_finite() {
            return Err(NdpError::Config("w_scale and g_scale must be positive, log_std_init finite".into()));
        }
        if let InverseController::Pd { kp, kd } = self.controller {
            if !(kp > 0.0) || !(kd >= 0.0) {
                return Err(NdpError::Config("pd gains must be kp > 0, kd >= 0".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutSettings<'a> {
    pub controller: InverseController,
    pub obs_norm: Option<&'a RunningMeanStd>,
    /// Execute the mean targets instead of sampling.
    pub deterministic: bool,
}

/// Run one episode per seed with a frozen policy. Values are filled in from
/// `critic` when given; GAE is left to the caller.
pub fn collect_rollouts<R: Rng>(
    policy: &BlockPolicy,
    critic: Option<&CriticHeads>,
    env: &mut PointEnv,
    settings: RolloutSettings<'_>,
    mut returns: Option<&mut ReturnScaler>,
    seeds: &[u64],
    rng: &mut R,
) -> Result<EpisodeBuffer> {
    let k = policy.k();
    if env.config().k != k {
        return Err(NdpError::Config(format!("env refreshes every {} steps, policy plans {k}", env.config().k)));
    }
    let mut buffer = EpisodeBuffer::default();
    for &seed in seeds {
        let mut raw_obs = env.reset(seed);
        let mut summary = EpisodeSummary {
            episode_return: 0.0,
            success: false,
            length: 0,
        };
        while !env.is_done() {
            let obs = match settings.obs_norm {
                Some(rms) => rms.normalize(&raw_obs),
                None => raw_obs.clone(),
            };
            let block_raw = raw_obs.clone();
            let (y, v) = env.robot_state();
            let fwd = policy.forward(batch_from_rows(&[&obs]).view(), std::slice::from_ref(&y), std::slice::from_ref(&v))?;
            buffer.actor_forwards += 1;
            let plan = &fwd.plans[0];
            let block = buffer.blocks.len();
            let first = buffer.transitions.len();
            for j in 0..k {
                let mean = &plan.means[j];
                let action = if settings.deterministic { mean.clone() } else { policy.sample(mean, rng) };
                let logp = policy.log_prob(&action, mean);
                let (yc, vc) = env.robot_state();
                let command = settings.controller.apply(&action, &plan.target_vel[j], &yc, &vc);
                let out = env.step(&command).map_err(|e| match e {
                    NdpError::Contract(msg) => NdpError::Contract(format!("episode seed {seed}, sub-step {j}: {msg}")),
                    other => other,
                })?;
                let reward = match returns.as_deref_mut() {
                    Some(scaler) => scaler.scale(out.reward, out.done),
                    None => out.reward,
                };
                summary.episode_return += out.reward;
                summary.length += 1;
                summary.success = out.success;
                buffer.transitions.push(Transition {
                    block,
                    action,
                    logp,
                    reward,
                    raw_reward: out.reward,
                    done: out.done,
                    value_head: j,
                    value: 0.0,
                    next_value: 0.0,
                });
                raw_obs = out.obs;
                if out.done && j + 1 != k {
                    return Err(NdpError::Contract("episode ended inside a block".into()));
                }
            }
            buffer.blocks.push(BlockRecord {
                obs,
                raw_obs: block_raw,
                robot_pos: y,
                robot_vel: v,
                first,
                len: k,
            });
        }
        buffer.episodes.push(summary);
    }
    if let Some(critic) = critic {
        fill_values(critic, &mut buffer)?;
    }
    Ok(buffer)
}

fn fill_values(critic: &CriticHeads, buffer: &mut EpisodeBuffer) -> Result<()> {
    if buffer.blocks.is_empty() {
        return Ok(());
    }
    let rows: Vec<&[f64]> = buffer.blocks.iter().map(|b| b.obs.as_slice()).collect();
    let cache = critic.forward(batch_from_rows(&rows).view())?;
    let values = cache.output();
    let heads = critic.heads();
    for (b, block) in buffer.blocks.iter().enumerate() {
        for j in 0..block.len {
            let t = &mut buffer.transitions[block.first + j];
            if j >= heads {
                return Err(NdpError::Shape(format!("critic has {heads} heads, block has {} steps", block.len)));
            }
            t.value = values[[b, j]];
            t.next_value = if t.done {
                0.0
            } else if j + 1 < block.len {
                values[[b, j + 1]]
            } else {
                values[[b + 1, 0]]
            };
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub success_rate: f64,
    pub mean_return: f64,
}

/// Deterministic evaluation on the fixed evaluation seeds.
pub fn evaluate(
    policy: &BlockPolicy,
    env_config: &EnvConfig,
    controller: InverseController,
    obs_norm: Option<&RunningMeanStd>,
    episodes: usize,
) -> Result<EvalResult> {
    let mut env = PointEnv::new(env_config.clone())?;
    let seeds: Vec<u64> = (0..episodes as u64).map(|i| EVAL_SEED_BASE + i).collect();
    let settings = RolloutSettings {
        controller,
        obs_norm,
        deterministic: true,
    };
    // the rng is never drawn from in deterministic mode
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let buffer = collect_rollouts(policy, None, &mut env, settings, None, &seeds, &mut rng)?;
    let n = buffer.episodes.len().max(1) as f64;
    Ok(EvalResult {
        success_rate: buffer.episodes.iter().filter(|e| e.success).count() as f64 / n,
        mean_return: buffer.episodes.iter().map(|e| e.episode_return).sum::<f64>() / n,
    })
}

/// Run the mean policy for one episode and record every sub-step.
pub fn trace_episode(
    policy: &BlockPolicy,
    env_config: &EnvConfig,
    controller: InverseController,
    obs_norm: Option<&RunningMeanStd>,
    seed: u64,
) -> Result<Vec<TraceRow>> {
    let mut env = PointEnv::new(env_config.clone())?;
    let mut raw_obs = env.reset(seed);
    let mut rows = vec![TraceRow::capture(&env, 0.0)];
    while !env.is_done() {
        let obs = match obs_norm {
            Some(rms) => rms.normalize(&raw_obs),
            None => raw_obs.clone(),
        };
        let (y, v) = env.robot_state();
        let fwd = policy.forward(batch_from_rows(&[&obs]).view(), &[y], &[v])?;
        let plan = &fwd.plans[0];
        for j in 0..policy.k() {
            let (yc, vc) = env.robot_state();
            let command = controller.apply(&plan.means[j], &plan.target_vel[j], &yc, &vc);
            let out = env.step(&command)?;
            rows.push(TraceRow::capture(&env, out.reward));
            raw_obs = out.obs;
        }
    }
    Ok(rows)
}

/// One logged point of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub update: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub train_success: f64,
    pub train_return: f64,
    pub eval: Option<EvalResult>,
    pub actor_forwards: usize,
    pub lr: f64,
    pub stats: UpdateStats,
}

/// Owns everything a PPO run mutates; one [`Trainer::iterate`] is one batch
/// of episodes plus one update.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: RlConfig,
    pub env_config: EnvConfig,
    pub policy: BlockPolicy,
    pub critic: CriticHeads,
    pub obs_norm: RunningMeanStd,
    returns: ReturnScaler,
    adam: Adam,
    env: PointEnv,
    rng: ChaCha8Rng,
    pub env_steps: usize,
    pub updates: usize,
    pub track_surrogate: bool,
}

impl Trainer {
    pub fn new(config: RlConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let env_config = config.env_config()?;
        let kind = env_config.kind;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = config.head()?;
        let k = head.k();
        let policy = BlockPolicy::new(kind.obs_dim(), &config.hidden, head, config.log_std_init, &mut rng)?;
        let critic = CriticHeads::new(kind.obs_dim(), &config.hidden, k, &mut rng);
        let n_params = policy.mlp.num_params() + policy.log_std.len() + critic.mlp.num_params();
        let adam = Adam::new(
            AdamConfig {
                lr: config.ppo.lr,
                max_grad_norm: Some(config.ppo.max_grad_norm),
                ..AdamConfig::default()
            },
            n_params,
        );
        Ok(Self {
            env: PointEnv::new(env_config.clone())?,
            obs_norm: RunningMeanStd::new(kind.obs_dim()),
            returns: ReturnScaler::new(config.ppo.gamma),
            env_config,
            policy,
            critic,
            adam,
            rng,
            config,
            env_steps: 0,
            updates: 0,
            track_surrogate: false,
        })
    }

    pub fn total_updates(&self) -> Result<usize> {
        let per = self.config.episodes_per_batch()? * self.env_config.horizon;
        Ok(self.config.total_steps.div_ceil(per))
    }

    fn norm(&self) -> Option<&RunningMeanStd> {
        self.config.ppo.normalize_obs.then_some(&self.obs_norm)
    }

    /// Collect one batch with the current (sampling) policy.
    pub fn collect(&mut self) -> Result<EpisodeBuffer> {
        let episodes = self.config.episodes_per_batch()?;
        let seeds: Vec<u64> = (0..episodes).map(|_| self.rng.next_u64()).collect();
        let settings = RolloutSettings {
            controller: self.config.controller,
            obs_norm: self.config.ppo.normalize_obs.then_some(&self.obs_norm),
            deterministic: false,
        };
        let returns = self.config.ppo.normalize_returns.then_some(&mut self.returns);
        let mut buffer = collect_rollouts(&self.policy, Some(&self.critic), &mut self.env, settings, returns, &seeds, &mut self.rng)?;
        buffer.compute_gae(self.config.ppo.gamma, self.config.ppo.gae_lambda);
        Ok(buffer)
    }

    pub fn evaluate(&self) -> Result<EvalResult> {
        evaluate(&self.policy, &self.env_config, self.config.controller, self.norm(), self.config.eval_episodes)
    }

    pub fn iterate(&mut self) -> Result<CurvePoint> {
        let buffer = self.collect()?;
        if self.config.ppo.normalize_obs {
            let rows: Vec<&[f64]> = buffer.blocks.iter().map(|b| b.raw_obs.as_slice()).collect();
            self.obs_norm.update(&rows);
        }
        if self.config.ppo.linear_lr_decay {
            let total = self.total_updates()?.max(1) as f64;
            self.adam.set_lr(self.config.ppo.lr * (1.0 - self.updates as f64 / total));
        }
        let stats = ppo_update(
            &mut self.policy,
            &mut self.critic,
            &buffer,
            &self.config.ppo,
            &mut self.adam,
            &mut self.rng,
            self.track_surrogate,
        )?;
        self.updates += 1;
        self.env_steps += buffer.len();
        let n = buffer.episodes.len() as f64;
        let eval = if self.config.eval_episodes > 0 { Some(self.evaluate()?) } else { None };
        Ok(CurvePoint {
            update: self.updates,
            env_steps: self.env_steps,
            episodes: buffer.episodes.len(),
            train_success: buffer.episodes.iter().filter(|e| e.success).count() as f64 / n,
            train_return: buffer.episodes.iter().map(|e| e.episode_return).sum::<f64>() / n,
            eval,
            actor_forwards: buffer.actor_forwards,
            lr: self.adam.lr(),
            stats,
        })
    }

    pub fn trace(&self, seed: u64) -> Result<Vec<TraceRow>> {
        trace_episode(&self.policy, &self.env_config, self.config.controller, self.norm(), seed)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut ck = Checkpoint::default();
        ck.push_mlp("actor", &self.policy.mlp)?;
        ck.push_mlp("critic", &self.critic.mlp)?;
        ck.tensors
            .push(Tensor::new("log_std", vec![self.policy.log_std.len()], self.policy.log_std.clone())?);
        let dim = self.obs_norm.mean.len();
        ck.tensors.push(Tensor::new("obs_mean", vec![dim], self.obs_norm.mean.clone())?);
        ck.tensors.push(Tensor::new("obs_var", vec![dim], self.obs_norm.var.clone())?);
        Ok(ck)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub curve: Vec<CurvePoint>,
    pub trainer: Trainer,
}

impl TrainingRun {
    /// Env samples at the first evaluation whose success rate reaches `threshold`.
    pub fn samples_to(&self, threshold: f64) -> Option<usize> {
        self.curve
            .iter()
            .find(|p| p.eval.is_some_and(|e| e.success_rate >= threshold))
            .map(|p| p.env_steps)
    }

    pub fn final_success(&self) -> Option<f64> {
        self.curve.last().and_then(|p| p.eval).map(|e| e.success_rate)
    }

    /// Mean evaluation success over the last `points` evaluations.
    pub fn tail_success(&self, points: usize) -> Option<f64> {
        let evals: Vec<f64> = self.curve.iter().filter_map(|p| p.eval.map(|e| e.success_rate)).collect();
        let tail = &evals[evals.len().saturating_sub(points.max(1))..];
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// Best evaluation success over the run.
    pub fn best_success(&self) -> f64 {
        self.curve.iter().filter_map(|p| p.eval.map(|e| e.success_rate)).fold(0.0, f64::max)
    }
}

/// Train until `total_steps` env samples have been collected.
pub fn train_rl(config: RlConfig, seed: u64, mut on_update: impl FnMut(&CurvePoint)) -> Result<TrainingRun> {
    let mut trainer = Trainer::new(config, seed)?;
    let mut curve = Vec::new();
    while trainer.env_steps < trainer.config.total_steps {
        let point = trainer.iterate()?;
        on_update(&point);
        curve.push(point);
    }
    Ok(TrainingRun { curve, trainer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::{minibatch_grad, normalize_advantages, surrogate_terms};

    fn small(algo: Algo) -> RlConfig {
        RlConfig {
            algo,
            hidden: vec![16, 16],
            ppo: PpoConfig {
                batch_size: 400,
                minibatches: 4,
                ..PpoConfig::default()
            },
            total_steps: 800,
            eval_episodes: 0,
            ..RlConfig::default()
        }
    }

    #[test]
    fn trace_matches_deterministic_evaluation() {
        let mut cfg = small(Algo::Ndp);
        cfg.eval_episodes = 1;
        let t = Trainer::new(cfg, 5).unwrap();
        let rows = t.trace(EVAL_SEED_BASE).unwrap();
        assert_eq!(rows.len(), 101);
        let ret: f64 = rows.iter().map(|r| r.reward).sum();
        assert!((ret - t.evaluate().unwrap().mean_return).abs() < 1e-9);
    }

    #[test]
    fn k_five_uses_one_forward_per_block() {
        let mut t = Trainer::new(small(Algo::Ndp), 3).unwrap();
        let buf = t.collect().unwrap();
        assert_eq!(buf.episodes.len(), 4);
        assert_eq!(buf.actor_forwards, 4 * 20);
        assert_eq!(buf.len(), 4 * 100);
        for (i, tr) in buf.transitions.iter().enumerate() {
            assert_eq!(tr.value_head, i % 5);
            assert_eq!(buf.blocks[tr.block].first + tr.value_head, i);
        }
        assert_eq!(t.critic.heads(), 5);
    }

    #[test]
    fn k_one_is_per_step_execution() {
        let mut t = Trainer::new(small(Algo::Ppo), 3).unwrap();
        let buf = t.collect().unwrap();
        assert_eq!(buf.actor_forwards, buf.len());
        assert!(buf.transitions.iter().all(|tr| tr.value_head == 0));
        assert_eq!(t.critic.heads(), 1);
        assert_eq!(t.env_config.k, 1);
    }

    #[test]
    fn bootstrap_values_follow_heads_then_next_block() {
        let mut t = Trainer::new(small(Algo::Ndp), 5).unwrap();
        let buf = t.collect().unwrap();
        for (i, tr) in buf.transitions.iter().enumerate() {
            if tr.done {
                assert_eq!(tr.next_value, 0.0);
                assert_eq!(tr.value_head, 4);
            } else {
                assert_eq!(tr.next_value, buf.transitions[i + 1].value);
            }
        }
        assert_eq!(buf.transitions.iter().filter(|t| t.done).count(), 4);
    }

    #[test]
    fn same_seed_same_buffers_and_curves() {
        for algo in Algo::ALL {
            let a = train_rl(small(algo), 11, |_| {}).unwrap();
            let b = train_rl(small(algo), 11, |_| {}).unwrap();
            assert_eq!(a.curve, b.curve);
            assert_eq!(a.trainer.policy.mlp.params(), b.trainer.policy.mlp.params());
        }
        let mut a = Trainer::new(small(Algo::Ndp), 2).unwrap();
        let mut b = Trainer::new(small(Algo::Ndp), 2).unwrap();
        assert_eq!(a.collect().unwrap(), b.collect().unwrap());
    }

    #[test]
    fn multi_with_k_one_matches_vanilla() {
        let mut multi = small(Algo::PpoMulti);
        multi.k = 1;
        multi.dmp.k_rollout = 1;
        let a = train_rl(multi, 7, |_| {}).unwrap();
        let b = train_rl(small(Algo::Ppo), 7, |_| {}).unwrap();
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn env_steps_are_horizon_times_episodes() {
        let run = train_rl(small(Algo::Ndp), 0, |_| {}).unwrap();
        let episodes: usize = run.curve.iter().map(|p| p.episodes).sum();
        assert_eq!(run.trainer.env_steps, 100 * episodes);
        assert_eq!(run.curve.last().unwrap().env_steps, 800);
    }

    #[test]
    fn unchanged_policy_has_unit_ratio() {
        let mut t = Trainer::new(small(Algo::Ndp), 1).unwrap();
        let buf = t.collect().unwrap();
        let adv = normalize_advantages(&buf.advantages);
        let terms = surrogate_terms(&t.policy, &buf, &adv, 0.1).unwrap();
        for (term, a) in terms.iter().zip(&adv) {
            assert!((term.ratio - 1.0).abs() < 1e-12);
            assert!((term.term - a).abs() < 1e-12);
        }
        let mean: f64 = terms.iter().map(|t| t.term).sum::<f64>() / terms.len() as f64;
        let mean_adv: f64 = adv.iter().sum::<f64>() / adv.len() as f64;
        assert!((mean - mean_adv).abs() < 1e-12);
    }

    #[test]
    fn zero_advantages_give_zero_policy_gradient() {
        let mut t = Trainer::new(small(Algo::Ndp), 1).unwrap();
        let buf = t.collect().unwrap();
        let zeros = vec![0.0; buf.len()];
        let blocks: Vec<usize> = (0..buf.blocks.len()).collect();
        let g = minibatch_grad(&t.policy, &t.critic, &buf, &blocks, &zeros, &t.config.ppo).unwrap();
        assert!(g.actor.iter().all(|&x| x == 0.0));
        assert!(g.log_std.iter().all(|&x| x == 0.0));
        assert!(g.critic.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn surrogate_contribution_is_bounded_after_updates() {
        let mut t = Trainer::new(small(Algo::Ndp), 4).unwrap();
        t.iterate().unwrap();
        let buf = t.collect().unwrap();
        let adv = normalize_advantages(&buf.advantages);
        let mut moved = t.policy.clone();
        for (i, p) in moved.mlp.params_mut().iter_mut().enumerate() {
            *p += 0.05 * ((i as f64) * 0.37).sin();
        }
        for term in surrogate_terms(&moved, &buf, &adv, 0.1).unwrap().iter().zip(&adv) {
            assert!(term.0.term <= 1.1 * term.1.abs() + 1e-12);
        }
    }

    #[test]
    fn surrogate_loss_falls_across_epochs() {
        let mut cfg = small(Algo::Ndp);
        cfg.ppo.batch_size = 1000;
        let mut t = Trainer::new(cfg, 21).unwrap();
        t.track_surrogate = true;
        let point = t.iterate().unwrap();
        let s = &point.stats.epoch_surrogate;
        assert_eq!(s.len(), 11);
        let falls = s.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(falls >= 8, "{s:?}");
    }

    #[test]
    fn config_errors() {
        let bad_env = RlConfig {
            env: "point-swim".into(),
            ..RlConfig::default()
        };
        assert!(matches!(Trainer::new(bad_env, 0), Err(NdpError::Config(_))));
        let mismatch = RlConfig { k: 7, ..RlConfig::default() };
        assert!(matches!(mismatch.validate(), Err(NdpError::Config(_))));
        let bad_horizon = RlConfig {
            horizon: Some(101),
            ..RlConfig::default()
        };
        assert!(matches!(bad_horizon.validate(), Err(NdpError::Config(_))));
        assert!(Algo::from_name("sac").is_err());
        assert_eq!(RlConfig::default().env_config().unwrap().horizon, 100);
    }

    #[test]
    fn pd_controller_runs_on_force_mode_env() {
        let cfg = RlConfig {
            controller: InverseController::Pd { kp: 100.0, kd: 20.0 },
            ..small(Algo::Ndp)
        };
        let mut t = Trainer::new(cfg, 0).unwrap();
        assert_eq!(t.env_config.control, crate::envs::ControlMode::Force);
        t.iterate().unwrap();
    }

    #[test]
    fn throw_plans_the_gripper_dof() {
        let cfg = RlConfig {
            env: "throw".into(),
            ..small(Algo::Ndp)
        };
        let mut t = Trainer::new(cfg, 0).unwrap();
        let buf = t.collect().unwrap();
        assert!(buf.transitions.iter().all(|tr| tr.action.len() == 3));
    }
}
