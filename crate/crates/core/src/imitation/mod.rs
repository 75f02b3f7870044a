//! Behaviour cloning of trajectories, with a DMP-headed network and a direct
//! regression baseline of matched size.

pub mod strokes;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{alpha_sensitivity, relative_error, trajectory_jacobians, FD_FLOOR};
use crate::dmp::{rollout, subsample_indices, DmpConfig};
use crate::error::{NdpError, Result};
use crate::nn::{batch_from_rows, Adam, AdamConfig, Mlp, MlpSpec};
use crate::policy::{ActorOutputGrad, DmpHead, NdpActor};

pub use strokes::{generate_digit_dataset, split, Demonstration, StrokeSpec};

/// Step used to differentiate a rollout with respect to alpha.
const ALPHA_FD_STEP: f64 = 1e-5;

/// Summed and per-point squared distance between two trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcLoss {
    pub sum: f64,
    pub per_point: f64,
}

pub fn bc_loss<P: AsRef<[f64]>, Q: AsRef<[f64]>>(predicted: &[P], target: &[Q]) -> Result<BcLoss> {
    if predicted.len() != target.len() {
        return Err(NdpError::Shape(format!("predicted {} points, target has {}", predicted.len(), target.len())));
    }
    let mut sum = 0.0;
    for (p, t) in predicted.iter().zip(target) {
        let (p, t) = (p.as_ref(), t.as_ref());
        if p.len() != t.len() {
            return Err(NdpError::Shape("point dimensions differ".into()));
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(BcLoss {
        sum,
        per_point: if predicted.is_empty() { 0.0 } else { sum / predicted.len() as f64 },
    })
}

/// Largest `||y[t+1] - 2 y[t] + y[t-1]||` along a trajectory.
pub fn max_second_difference(path: &[[f64; 2]]) -> f64 {
    path.windows(3)
        .map(|w| (w[2][0] - 2.0 * w[1][0] + w[0][0]).hypot(w[2][1] - 2.0 * w[1][1] + w[0][1]))
        .fold(0.0, f64::max)
}

/// Something that maps a demonstration's condition onto a trajectory.
pub trait TrajectoryModel {
    fn mlp(&self) -> &Mlp;
    fn mlp_mut(&mut self) -> &mut Mlp;
    fn predict(&self, batch: &[&Demonstration]) -> Result<Vec<Vec<[f64; 2]>>>;
    /// Batch mean of the summed loss and its gradient over the network parameters.
    fn loss_and_grad(&self, batch: &[&Demonstration]) -> Result<(f64, Vec<f64>)>;
}

fn conditions(batch: &[&Demonstration]) -> ndarray::Array2<f64> {
    let rows: Vec<&[f64]> = batch.iter().map(|d| d.condition.as_slice()).collect();
    batch_from_rows(&rows)
}

/// DMP-headed network; one rollout of `k = t_points` actions per sample.
#[derive(Debug, Clone)]
pub struct NdpImitator {
    pub actor: NdpActor,
}

impl NdpImitator {
    pub fn new(input_dim: usize, hidden: &[usize], head: DmpHead, seed: u64) -> Result<Self> {
        head.dmp.validate()?;
        if head.dof != 2 {
            return Err(NdpError::Config("stroke imitation is planar, dof must be 2".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            actor: NdpActor::new(input_dim, hidden, head, &mut rng),
        })
    }

    fn dmp(&self) -> &DmpConfig {
        &self.actor.head.dmp
    }

    fn check_length(&self, batch: &[&Demonstration]) -> Result<()> {
        let k = self.dmp().k_rollout;
        match batch.iter().find(|d| d.target.len() != k) {
            Some(d) => Err(NdpError::Config(format!(
                "k_rollout = {k} but a target has {} points; they must match",
                d.target.len()
            ))),
            None => Ok(()),
        }
    }
}

impl TrajectoryModel for NdpImitator {
    fn mlp(&self) -> &Mlp {
        &self.actor.mlp
    }

    fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.actor.mlp
    }

    fn predict(&self, batch: &[&Demonstration]) -> Result<Vec<Vec<[f64; 2]>>> {
        self.check_length(batch)?;
        let starts: Vec<Vec<f64>> = batch.iter().map(|d| d.start.to_vec()).collect();
        let (outputs, _) = self.actor.forward(conditions(batch).view(), &starts)?;
        let k = self.dmp().k_rollout;
        outputs
            .iter()
            .zip(&starts)
            .map(|(out, y0)| {
                let tape = rollout(&out.params, y0, &[0.0, 0.0], &out.config)?;
                Ok(subsample_indices(out.config.m_steps, k)?
                    .into_iter()
                    .map(|t| [tape.states[t].y[0], tape.states[t].y[1]])
                    .collect())
            })
            .collect()
    }

    fn loss_and_grad(&self, batch: &[&Demonstration]) -> Result<(f64, Vec<f64>)> {
        self.check_length(batch)?;
        let starts: Vec<Vec<f64>> = batch.iter().map(|d| d.start.to_vec()).collect();
        let (outputs, cache) = self.actor.forward(conditions(batch).view(), &starts)?;
        let k = self.dmp().k_rollout;
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(batch.len());
        for ((out, y0), demo) in outputs.iter().zip(&starts).zip(batch) {
            let tape = rollout(&out.params, y0, &[0.0, 0.0], &out.config)?;
            let idx = subsample_indices(out.config.m_steps, k)?;
            let mut upstream = Vec::with_capacity(k);
            for (&t, target) in idx.iter().zip(&demo.target) {
                let y = &tape.states[t].y;
                let r = [y[0] - target[0], y[1] - target[1]];
                loss += (r[0] * r[0] + r[1] * r[1]) * scale;
                upstream.push(vec![2.0 * r[0] * scale, 2.0 * r[1] * scale]);
            }
            let dmp = trajectory_jacobians(&tape)?.backward(&upstream)?;
            let d_alpha = if out.config.learn_alpha {
                let sens = alpha_sensitivity(&tape, ALPHA_FD_STEP)?;
                idx.iter().zip(&upstream).map(|(&t, u)| u[0] * sens[t][0] + u[1] * sens[t][1]).sum()
            } else {
                0.0
            };
            grads.push(ActorOutputGrad { dmp, d_alpha });
        }
        Ok((loss, self.actor.backward(&cache, &grads)?))
    }
}

/// Network emitting the whole trajectory as offsets from the start point.
#[derive(Debug, Clone)]
pub struct DirectRegressor {
    pub mlp: Mlp,
    pub t_points: usize,
}

impl DirectRegressor {
    pub fn new(input_dim: usize, hidden: &[usize], t_points: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            mlp: Mlp::init(MlpSpec::new(input_dim, hidden, 2 * t_points), crate::policy::ACTOR_OUTPUT_INIT, &mut rng),
            t_points,
        }
    }

    fn check_length(&self, batch: &[&Demonstration]) -> Result<()> {
        match batch.iter().find(|d| d.target.len() != self.t_points) {
            Some(d) => Err(NdpError::Shape(format!(
                "regressor emits {} points, target has {}",
                self.t_points,
                d.target.len()
            ))),
            None => Ok(()),
        }
    }
}

impl TrajectoryModel for DirectRegressor {
    fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    fn predict(&self, batch: &[&Demonstration]) -> Result<Vec<Vec<[f64; 2]>>> {
        self.check_length(batch)?;
        let cache = self.mlp.forward(conditions(batch).view())?;
        Ok(cache
            .output()
            .rows()
            .into_iter()
            .zip(batch)
            .map(|(row, d)| (0..self.t_points).map(|t| [d.start[0] + row[2 * t], d.start[1] + row[2 * t + 1]]).collect())
            .collect())
    }

    fn loss_and_grad(&self, batch: &[&Demonstration]) -> Result<(f64, Vec<f64>)> {
        self.check_length(batch)?;
        let cache = self.mlp.forward(conditions(batch).view())?;
        let scale = 1.0 / batch.len() as f64;
        let mut d_out = ndarray::Array2::zeros(cache.output().dim());
        let mut loss = 0.0;
        for (b, d) in batch.iter().enumerate() {
            for (t, target) in d.target.iter().enumerate() {
                for c in 0..2 {
                    let r = d.start[c] + cache.output()[[b, 2 * t + c]] - target[c];
                    loss += r * r * scale;
                    d_out[[b, 2 * t + c]] = 2.0 * r * scale;
                }
            }
        }
        Ok((loss, self.mlp.backward(&cache, d_out.view())?))
    }
}

/// Uniform hidden width for a `depth`-layer network whose parameter count is
/// closest to `target`.
pub fn matched_width(input_dim: usize, depth: usize, output_dim: usize, target: usize) -> usize {
    (1..=4096)
        .min_by_key(|&h| MlpSpec::new(input_dim, &vec![h; depth], output_dim).num_params().abs_diff(target))
        .expect("non-empty range")
}

/// Mean per-point loss over a set.
pub fn evaluate<M: TrajectoryModel>(model: &M, data: &[Demonstration]) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for chunk in data.chunks(64) {
        let refs: Vec<&Demonstration> = chunk.iter().collect();
        for (pred, d) in model.predict(&refs)?.iter().zip(chunk) {
            total += bc_loss(pred, &d.target)?.per_point;
        }
    }
    Ok(total / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImitationConfig {
    pub dmp: DmpConfig,
    pub hidden: Vec<usize>,
    pub w_scale: f64,
    pub g_scale: f64,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    /// Anneal the learning rate linearly to zero over the epochs.
    pub linear_lr_decay: bool,
    pub batch_size: usize,
    pub strokes: StrokeSpec,
    pub num_per_class: usize,
    pub train_fraction: f64,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self {
            dmp: DmpConfig::new(15, 300, 300),
            hidden: vec![100, 100],
            w_scale: 1000.0,
            g_scale: 1.0,
            optimizer: AdamConfig {
                lr: 1e-3,
                ..AdamConfig::default()
            },
            epochs: 60,
            linear_lr_decay: true,
            batch_size: 16,
            strokes: StrokeSpec::default(),
            num_per_class: 20,
            train_fraction: 0.8,
        }
    }
}

impl ImitationConfig {
    pub fn validate(&self) -> Result<()> {
        self.dmp.validate()?;
        if self.dmp.k_rollout != self.strokes.t_points {
            return Err(NdpError::Config(format!(
                "k_rollout ({}) must equal the number of target points ({})",
                self.dmp.k_rollout, self.strokes.t_points
            )));
        }
        if self.batch_size == 0 {
            return Err(NdpError::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(NdpError::Config("train_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn head(&self) -> DmpHead {
        DmpHead {
            w_scale: self.w_scale,
            g_scale: self.g_scale,
            ..DmpHead::new(self.dmp.clone(), 2)
        }
    }

    pub fn dataset(&self, seed: u64) -> Result<(Vec<Demonstration>, Vec<Demonstration>)> {
        let data = generate_digit_dataset(self.num_per_class, &self.strokes, seed)?;
        Ok(split(&data, self.train_fraction, seed.wrapping_add(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
}

/// Minibatch Adam on the batch-mean summed loss. Records the per-point
/// losses before training (epoch 0) and after every epoch.
pub fn fit<M: TrajectoryModel>(
    model: &mut M,
    train: &[Demonstration],
    heldout: &[Demonstration],
    config: &ImitationConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Vec<EpochRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(config.optimizer.clone(), model.mlp().num_params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs + 1);
    let mut record = |model: &M, epoch: usize, history: &mut Vec<EpochRecord>| -> Result<()> {
        let r = EpochRecord {
            epoch,
            train_loss: evaluate(model, train)?,
            heldout_loss: evaluate(model, heldout)?,
        };
        if !r.train_loss.is_finite() {
            return Err(NdpError::NonFinite(format!("imitation loss after epoch {epoch}")));
        }
        on_epoch(&r);
        history.push(r);
        Ok(())
    };
    record(model, 0, &mut history)?;
    for epoch in 1..=config.epochs {
        if config.linear_lr_decay {
            adam.set_lr(config.optimizer.lr * (1.0 - (epoch - 1) as f64 / config.epochs as f64));
        }
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Demonstration> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, mut grads) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(NdpError::NonFinite(format!("imitation loss during epoch {epoch}")));
            }
            adam.step(model.mlp_mut().params_mut(), &mut grads)?;
        }
        record(model, epoch, &mut history)?;
    }
    Ok(history)
}

pub struct ImitationRun<M> {
    pub model: M,
    pub history: Vec<EpochRecord>,
}

impl<M> ImitationRun<M> {
    pub fn final_heldout(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.heldout_loss)
    }
}

pub fn train_imitation(
    config: &ImitationConfig,
    train: &[Demonstration],
    heldout: &[Demonstration],
    seed: u64,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<ImitationRun<NdpImitator>> {
    config.validate()?;
    let mut model = NdpImitator::new(config.strokes.condition_dim(), &config.hidden, config.head(), seed)?;
    let history = fit(&mut model, train, heldout, config, seed ^ 0x5eed, on_epoch)?;
    Ok(ImitationRun { model, history })
}

/// The direct baseline, sized so its parameter count matches the DMP actor.
pub fn baseline_train_direct(
    config: &ImitationConfig,
    train: &[Demonstration],
    heldout: &[Demonstration],
    seed: u64,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<ImitationRun<DirectRegressor>> {
    config.validate()?;
    let mut model = direct_for(config, seed);
    let history = fit(&mut model, train, heldout, config, seed ^ 0x5eed, on_epoch)?;
    Ok(ImitationRun { model, history })
}

pub fn direct_for(config: &ImitationConfig, seed: u64) -> DirectRegressor {
    let input = config.strokes.condition_dim();
    let t = config.strokes.t_points;
    let ndp_params = MlpSpec::new(input, &config.hidden, config.head().output_dim()).num_params();
    let width = matched_width(input, config.hidden.len().max(1), 2 * t, ndp_params);
    DirectRegressor::new(input, &vec![width; config.hidden.len().max(1)], t, seed)
}

/// Largest relative error between the analytic parameter gradient and
/// central differences of the loss, over every network parameter.
pub fn gradient_check<M: TrajectoryModel + Clone>(model: &M, batch: &[&Demonstration], h: f64) -> Result<f64> {
    let (_, analytic) = model.loss_and_grad(batch)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..analytic.len() {
        let base = probe.mlp().params()[i];
        probe.mlp_mut().params_mut()[i] = base + h;
        let plus = probe.loss_and_grad(batch)?.0;
        probe.mlp_mut().params_mut()[i] = base - h;
        let minus = probe.loss_and_grad(batch)?.0;
        probe.mlp_mut().params_mut()[i] = base;
        worst = worst.max(relative_error(analytic[i], (plus - minus) / (2.0 * h), FD_FLOOR));
    }
    Ok(worst)
}

pub fn trajectory_csv(predicted: &[[f64; 2]], target: &[[f64; 2]]) -> String {
    let mut out = String::from("t,pred_x,pred_y,target_x,target_y\n");
    for (t, (p, q)) in predicted.iter().zip(target).enumerate() {
        let _ = writeln!(out, "{},{},{},{},{}", t + 1, p[0], p[1], q[0], q[1]);
    }
    out
}

pub fn write_jsonl(data: &[Demonstration], mut out: impl std::io::Write) -> Result<()> {
    for d in data {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<Demonstration>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(t: usize) -> ImitationConfig {
        ImitationConfig {
            dmp: DmpConfig::new(10, t, t),
            hidden: vec![8, 8],
            strokes: StrokeSpec {
                t_points: t,
                noise: 1.0,
                include_raster: false,
                ..StrokeSpec::default()
            },
            ..ImitationConfig::default()
        }
    }

    #[test]
    fn bc_loss_examples() {
        let p = [[0.0], [0.0]];
        let t = [[1.0], [1.0]];
        let l = bc_loss(&p, &t).unwrap();
        assert_eq!(l.sum, 2.0);
        assert_eq!(l.per_point, 1.0);
        assert_eq!(bc_loss(&t, &t).unwrap().sum, 0.0);
        assert!(bc_loss(&p, &t[..1]).is_err());
    }

    #[test]
    fn bc_loss_matches_naive_sum() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.random_range(1..50);
            let p: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let q: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let mut naive = 0.0;
            for i in 0..n {
                let dx = p[i][0] - q[i][0];
                let dy = p[i][1] - q[i][1];
                naive += dx * dx + dy * dy;
            }
            assert!((bc_loss(&p, &q).unwrap().sum - naive).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_epochs_returns_initial_evaluation() {
        let cfg = ImitationConfig {
            epochs: 0,
            num_per_class: 2,
            ..small_config(20)
        };
        let (train, test) = cfg.dataset(0).unwrap();
        let run = train_imitation(&cfg, &train, &test, 3, |_| {}).unwrap();
        let fresh = NdpImitator::new(cfg.strokes.condition_dim(), &cfg.hidden, cfg.head(), 3).unwrap();
        assert_eq!(run.model.actor.mlp.params(), fresh.actor.mlp.params());
        assert_eq!(run.history.len(), 1);
        assert_eq!(run.history[0].train_loss, evaluate(&fresh, &train).unwrap());
    }

    #[test]
    fn k_must_match_target_length() {
        let mut cfg = small_config(20);
        cfg.dmp = DmpConfig::new(10, 40, 40);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let cfg = small_config(50);
        let data = generate_digit_dataset(1, &cfg.strokes, 7).unwrap();
        let model = NdpImitator::new(cfg.strokes.condition_dim(), &[8, 8], cfg.head(), 1).unwrap();
        let batch = vec![&data[3]];
        let err = gradient_check(&model, &batch, 1e-5).unwrap();
        assert!(err <= 1e-3, "{err}");
    }

    #[test]
    fn direct_gradient_matches_finite_differences() {
        let cfg = small_config(10);
        let data = generate_digit_dataset(1, &cfg.strokes, 7).unwrap();
        let model = DirectRegressor::new(cfg.strokes.condition_dim(), &[6], 10, 2);
        let batch = vec![&data[0], &data[5]];
        assert!(gradient_check(&model, &batch, 1e-5).unwrap() <= 1e-5);
    }

    #[test]
    fn matched_capacity_within_ten_percent() {
        let cfg = ImitationConfig::default();
        let ndp = MlpSpec::new(cfg.strokes.condition_dim(), &cfg.hidden, cfg.head().output_dim()).num_params();
        let direct = direct_for(&cfg, 0).mlp.num_params();
        assert!(direct.abs_diff(ndp) as f64 <= 0.1 * ndp as f64, "{direct} vs {ndp}");
    }

    #[test]
    fn direct_baseline_is_deterministic() {
        let cfg = ImitationConfig {
            epochs: 2,
            num_per_class: 2,
            ..small_config(20)
        };
        let (train, test) = cfg.dataset(1).unwrap();
        let a = baseline_train_direct(&cfg, &train, &test, 5, |_| {}).unwrap();
        let b = baseline_train_direct(&cfg, &train, &test, 5, |_| {}).unwrap();
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn overfits_a_single_stroke() {
        let cfg = ImitationConfig {
            dmp: DmpConfig::new(15, 100, 100),
            hidden: vec![32, 32],
            epochs: 1500,
            batch_size: 1,
            optimizer: AdamConfig {
                lr: 3e-3,
                ..AdamConfig::default()
            },
            strokes: StrokeSpec {
                t_points: 100,
                noise: 0.0,
                include_raster: false,
                ..StrokeSpec::default()
            },
            ..ImitationConfig::default()
        };
        let data = generate_digit_dataset(1, &cfg.strokes, 0).unwrap();
        let one = vec![data[7].clone()];
        let run = train_imitation(&cfg, &one, &[], 0, |_| {}).unwrap();
        let last = run.history.last().unwrap().train_loss;
        assert!(last <= 1e-3, "{last}");
    }

    #[test]
    fn jsonl_round_trip() {
        let spec = StrokeSpec {
            t_points: 5,
            ..Default::default()
        };
        let data = generate_digit_dataset(1, &spec, 0).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&data, &mut buf).unwrap();
        assert_eq!(read_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap(), data);
    }
}
