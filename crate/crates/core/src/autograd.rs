//! Sensitivities of a rolled-out trajectory with respect to the forcing
//! weights and the goal.
//!
//! The tangents `W_t = dy_t/dw` and `G_t = dy_t/dg` obey the same explicit
//! recursion as the states themselves:
//!
//! ```text
//! W''_t = alpha * (-beta * W_{t-1} - W'_{t-1}) + psi_i(x_t) / sum_j psi_j(x_t) * x_t * (g - y0)
//! G''_t = alpha * ( beta * (1 - G_{t-1}) - G'_{t-1}) + sum_j psi_j w_j / sum_j psi_j * x_t
//! W'_t  = W'_{t-1} + W''_{t-1} * dt          W_t = W_{t-1} + W'_{t-1} * dt
//! ```
//!
//! seeded with zeros, so `W_0 = W_1 = G_0 = G_1 = 0`. Parameters are few (n + 1
//! per dof), so the tangents are accumulated forward alongside the tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::dmp::{rollout, subsample_indices, DmpConfig, DmpParams, RolloutTape, BASIS_SUM_FLOOR};
use crate::error::{NdpError, Result};

/// Partial derivatives of the forcing term at one phase value.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingPartials {
    /// `df_d / dw_{d,i}`, row-major `dof x n_basis`.
    pub d_w: Vec<f64>,
    /// `df_d / dg_d`.
    pub d_g: Vec<f64>,
}

fn partials_from_psi(psi: &[f64], x: f64, params: &DmpParams, y0: &[f64], config: &DmpConfig) -> Result<ForcingPartials> {
    let dof = params.dof();
    let n = params.n_basis;
    if config.zero_forcing {
        return Ok(ForcingPartials {
            d_w: vec![0.0; dof * n],
            d_g: vec![0.0; dof],
        });
    }
    let sum: f64 = psi.iter().sum();
    if sum.abs() < BASIS_SUM_FLOOR {
        return Err(NdpError::SingularBasis { x, sum });
    }
    let mut d_w = Vec::with_capacity(dof * n);
    let mut d_g = Vec::with_capacity(dof);
    for d in 0..dof {
        let scale = x * (params.g[d] - y0[d]) / sum;
        d_w.extend(psi.iter().map(|p| p * scale));
        let weighted: f64 = psi.iter().zip(params.weights(d)).map(|(p, w)| p * w).sum();
        d_g.push(weighted / sum * x);
    }
    Ok(ForcingPartials { d_w, d_g })
}

pub fn forcing_partials(x: f64, params: &DmpParams, y0: &[f64], config: &DmpConfig) -> Result<ForcingPartials> {
    if y0.len() != params.dof() || params.n_basis != config.n_basis {
        return Err(NdpError::Shape("params, y0 and config disagree".into()));
    }
    let psi = crate::dmp::basis_eval(x, config)?;
    partials_from_psi(&psi, x, params, y0, config)
}

/// Position sensitivities for every integrator step.
#[derive(Debug, Clone)]
pub struct DmpGradients {
    pub dof: usize,
    pub n_basis: usize,
    /// Number of states, `m_steps + 1`.
    pub steps: usize,
    /// `dy_t[d] / dw[d][i]` laid out `[t][d][i]`. Cross-dof terms are zero and not stored.
    pub d_y_d_w: Vec<f64>,
    /// `dy_t[d] / dg[d]` laid out `[t][d]`.
    pub d_y_d_g: Vec<f64>,
}

impl DmpGradients {
    pub fn w(&self, t: usize, d: usize) -> &[f64] {
        let start = (t * self.dof + d) * self.n_basis;
        &self.d_y_d_w[start..start + self.n_basis]
    }

    pub fn g(&self, t: usize, d: usize) -> f64 {
        self.d_y_d_g[t * self.dof + d]
    }

    /// Chain rule from per-timestep position gradients onto (w, g).
    ///
    /// `upstream[j]` is `dL/dy` at the `j`-th of `upstream.len()` equally
    /// spaced sub-sampled states.
    pub fn backward(&self, upstream: &[Vec<f64>]) -> Result<DmpParamGrads> {
        let indices = subsample_indices(self.steps - 1, upstream.len())
            .map_err(|_| NdpError::Shape(format!("{} upstream gradients for {} steps", upstream.len(), self.steps - 1)))?;
        let mut grads = DmpParamGrads {
            d_w: vec![0.0; self.dof * self.n_basis],
            d_g: vec![0.0; self.dof],
        };
        for (u, &t) in upstream.iter().zip(&indices) {
            if u.len() != self.dof {
                return Err(NdpError::Shape(format!("upstream row has {} entries, dof is {}", u.len(), self.dof)));
            }
            for d in 0..self.dof {
                if u[d] == 0.0 {
                    continue;
                }
                let row = &mut grads.d_w[d * self.n_basis..(d + 1) * self.n_basis];
                for (acc, j) in row.iter_mut().zip(self.w(t, d)) {
                    *acc += u[d] * j;
                }
                grads.d_g[d] += u[d] * self.g(t, d);
            }
        }
        Ok(grads)
    }
}

/// `dL/dw` (row-major `dof x n_basis`) and `dL/dg`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpParamGrads {
    pub d_w: Vec<f64>,
    pub d_g: Vec<f64>,
}

pub fn trajectory_jacobians(tape: &RolloutTape) -> Result<DmpGradients> {
    jacobians(tape, false)
}

/// Jacobians with a deliberately broken recursion (the stiffness term has the
/// wrong sign). Exists so gradient checks can prove they catch a bad gradient.
#[doc(hidden)]
pub fn trajectory_jacobians_faulty(tape: &RolloutTape) -> Result<DmpGradients> {
    jacobians(tape, true)
}

fn jacobians(tape: &RolloutTape, fault: bool) -> Result<DmpGradients> {
    let cfg = &tape.config;
    let params = &tape.params;
    let dof = params.dof();
    let n = params.n_basis;
    let m = cfg.m_steps;
    if tape.states.len() != m + 1 || tape.psi.len() != m || tape.y0.len() != dof || n != cfg.n_basis {
        return Err(NdpError::Shape("tape does not match its config".into()));
    }
    let (alpha, beta, dt) = (cfg.alpha, cfg.beta(), cfg.dt());
    let stiffness = if fault { -alpha * beta } else { alpha * beta };

    let mut d_y_d_w = vec![0.0; (m + 1) * dof * n];
    let mut d_y_d_g = vec![0.0; (m + 1) * dof];
    // Running (W, W', W'') per (d, i) and (G, G', G'') per d.
    let mut w = vec![[0.0f64; 3]; dof * n];
    let mut g = vec![[0.0f64; 3]; dof];

    for t in 1..=m {
        let x = tape.states[t].x;
        let partials = partials_from_psi(&tape.psi[t - 1], x, params, &tape.y0, cfg)?;
        for (j, s) in w.iter_mut().enumerate() {
            let acc = -stiffness * s[0] - alpha * s[1] + partials.d_w[j];
            *s = [s[0] + s[1] * dt, s[1] + s[2] * dt, acc];
        }
        for (d, s) in g.iter_mut().enumerate() {
            let acc = alpha * (beta * (1.0 - s[0]) - s[1]) + partials.d_g[d];
            *s = [s[0] + s[1] * dt, s[1] + s[2] * dt, acc];
        }
        let base = t * dof * n;
        for (j, s) in w.iter().enumerate() {
            d_y_d_w[base + j] = s[0];
        }
        for (d, s) in g.iter().enumerate() {
            d_y_d_g[t * dof + d] = s[0];
        }
    }
    Ok(DmpGradients {
        dof,
        n_basis: n,
        steps: m + 1,
        d_y_d_w,
        d_y_d_g,
    })
}

/// `dL/dw, dL/dg` for upstream gradients on the `upstream.len()` sub-sampled states.
pub fn backward(tape: &RolloutTape, upstream: &[Vec<f64>]) -> Result<DmpParamGrads> {
    trajectory_jacobians(tape)?.backward(upstream)
}

/// `dy_t / dalpha` by central differences, `[t][d]`. Beta follows alpha when
/// it is tied to critical damping.
pub fn alpha_sensitivity(tape: &RolloutTape, h: f64) -> Result<Vec<Vec<f64>>> {
    let y0_dot = &tape.states[0].y_dot;
    let plus = rollout(&tape.params, &tape.y0, y0_dot, &tape.config.with_alpha(tape.config.alpha + h))?;
    let minus = rollout(&tape.params, &tape.y0, y0_dot, &tape.config.with_alpha(tape.config.alpha - h))?;
    Ok(plus
        .states
        .iter()
        .zip(&minus.states)
        .map(|(p, q)| p.y.iter().zip(&q.y).map(|(a, b)| (a - b) / (2.0 * h)).collect())
        .collect())
}

/// Relative error with the denominator floored at `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Weight { dof: usize, basis: usize },
    Goal { dof: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    /// Parameter, integrator step and output dof of the worst entry.
    pub worst: Option<(ParamRef, usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
}

/// Positions of the rollout on `tape` recomputed in double-double arithmetic,
/// with one parameter offset by exactly `delta`. Phase and basis activations
/// do not depend on the parameters and are taken from the tape as is.
pub fn positions_extended(tape: &RolloutTape, which: ParamRef, delta: f64) -> Vec<Vec<TwoFloat>> {
    let cfg = &tape.config;
    let p = &tape.params;
    let n = p.n_basis;
    let dof = p.dof();
    let (alpha, beta, dt) = (cfg.alpha, cfg.beta(), cfg.dt());
    let bump = |r: ParamRef, base: f64| if r == which { TwoFloat::new_add(base, delta) } else { TwoFloat::from(base) };
    let w: Vec<TwoFloat> = (0..dof * n).map(|j| bump(ParamRef::Weight { dof: j / n, basis: j % n }, p.w[j])).collect();
    let g: Vec<TwoFloat> = (0..dof).map(|d| bump(ParamRef::Goal { dof: d }, p.g[d])).collect();

    let first = &tape.states[0];
    let mut y: Vec<TwoFloat> = first.y.iter().map(|&v| TwoFloat::from(v)).collect();
    let mut yd: Vec<TwoFloat> = first.y_dot.iter().map(|&v| TwoFloat::from(v)).collect();
    let mut ydd: Vec<TwoFloat> = first.y_ddot.iter().map(|&v| TwoFloat::from(v)).collect();
    let mut out = vec![y.clone()];
    for t in 1..tape.states.len() {
        let x = tape.states[t].x;
        let psi = &tape.psi[t - 1];
        let sum = psi.iter().fold(TwoFloat::from(0.0), |acc, &v| acc + v);
        let mut next = (Vec::with_capacity(dof), Vec::with_capacity(dof), Vec::with_capacity(dof));
        for d in 0..dof {
            let f = if cfg.zero_forcing {
                TwoFloat::from(0.0)
            } else {
                let weighted = psi
                    .iter()
                    .zip(&w[d * n..(d + 1) * n])
                    .fold(TwoFloat::from(0.0), |acc, (&ps, &wi)| acc + wi * ps);
                weighted / sum * x * (g[d] - tape.y0[d])
            };
            next.0.push(y[d] + yd[d] * dt);
            next.1.push(yd[d] + ydd[d] * dt);
            next.2.push((beta * (g[d] - y[d]) - yd[d]) * alpha + f);
        }
        (y, yd, ydd) = next;
        out.push(y.clone());
    }
    out
}

/// Compare analytic trajectory Jacobians against central differences of the
/// rollout for every parameter, step and output dof.
///
/// Every trajectory is exactly linear in any single `w` or `g` entry, so the
/// difference quotient has no truncation error; its round-off is kept out of
/// the comparison by evaluating the two perturbed rollouts in double-double
/// arithmetic (see [`positions_extended`]).
pub fn fd_check(params: &DmpParams, y0: &[f64], y0_dot: &[f64], config: &DmpConfig, h: f64) -> Result<FdReport> {
    fd_check_with(params, y0, y0_dot, config, h, trajectory_jacobians)
}

pub fn fd_check_with(
    params: &DmpParams,
    y0: &[f64],
    y0_dot: &[f64],
    config: &DmpConfig,
    h: f64,
    jacobian_fn: impl Fn(&RolloutTape) -> Result<DmpGradients>,
) -> Result<FdReport> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(NdpError::Config(format!("finite-difference step {h} outside [1e-7, 1e-3]")));
    }
    let tape = rollout(params, y0, y0_dot, config)?;
    let jac = jacobian_fn(&tape)?;
    let dof = params.dof();
    let n = params.n_basis;
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        entries_checked: 0,
    };

    let mut probe = |which: ParamRef| {
        let plus = positions_extended(&tape, which, h);
        let minus = positions_extended(&tape, which, -h);
        for t in 0..tape.states.len() {
            for out in 0..dof {
                let numeric = f64::from((plus[t][out] - minus[t][out]) / (2.0 * h));
                let analytic = match which {
                    ParamRef::Weight { dof: d, basis } if d == out => jac.w(t, d)[basis],
                    ParamRef::Goal { dof: d } if d == out => jac.g(t, d),
                    _ => 0.0,
                };
                let err = relative_error(analytic, numeric, FD_FLOOR);
                report.entries_checked += 1;
                if err > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = err;
                    report.worst = Some((which, t, out));
                    report.analytic = analytic;
                    report.numeric = numeric;
                }
            }
        }
    };

    for d in 0..dof {
        for i in 0..n {
            probe(ParamRef::Weight { dof: d, basis: i });
        }
        probe(ParamRef::Goal { dof: d });
    }
    Ok(report)
}

/// One randomly drawn Jacobian test problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCase {
    pub params: DmpParams,
    pub y0: Vec<f64>,
    pub y0_dot: Vec<f64>,
    pub config: DmpConfig,
}

/// Upper bounds on the size of sweep problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepLimits {
    pub max_dof: usize,
    pub max_basis: usize,
    pub max_steps: usize,
    /// Weights are drawn from `[-max_weight, max_weight)`.
    pub max_weight: f64,
}

impl Default for SweepLimits {
    fn default() -> Self {
        Self {
            max_dof: 3,
            max_basis: 10,
            max_steps: 50,
            max_weight: 100.0,
        }
    }
}

/// Weights in `[-max_weight, max_weight)`, goals and starts in `[-1, 1)`,
/// start velocities in `[-0.5, 0.5)`.
pub fn random_case<R: Rng>(rng: &mut R, dof: usize, n: usize, m: usize, max_weight: f64) -> SweepCase {
    let w = (0..dof * n).map(|_| rng.random_range(-max_weight..max_weight)).collect();
    let g = (0..dof).map(|_| rng.random_range(-1.0..1.0)).collect();
    SweepCase {
        params: DmpParams::new(w, g, n).expect("sizes are consistent"),
        y0: (0..dof).map(|_| rng.random_range(-1.0..1.0)).collect(),
        y0_dot: (0..dof).map(|_| rng.random_range(-0.5..0.5)).collect(),
        config: DmpConfig::new(n, m, 1),
    }
}

/// Case `index` of the sweep seeded by `seed`; sizes are drawn uniformly
/// within `limits` (at least 10 integration steps).
pub fn sweep_case(seed: u64, index: u64, limits: SweepLimits) -> SweepCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index));
    let dof = rng.random_range(1..=limits.max_dof.max(1));
    let n = rng.random_range(1..=limits.max_basis.max(1));
    let m = rng.random_range(10.min(limits.max_steps)..=limits.max_steps.max(1));
    random_case(&mut rng, dof, n, m, limits.max_weight)
}
