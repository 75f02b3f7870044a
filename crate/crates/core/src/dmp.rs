//! Discrete dynamic movement primitive.
//!
//! The transformation system is
//!
//! ```text
//! y'' = alpha * (beta * (g - y) - y') + f(x)
//! x'  = -a_x * x
//! f(x) = (sum_i psi_i(x) w_i / sum_i psi_i(x)) * x * (g - y0)
//! ```
//!
//! integrated with the explicit scheme
//!
//! ```text
//! x_t   = x_{t-1} - dt * a_x * x_{t-1}
//! y''_t = alpha * (beta * (g - y_{t-1}) - y'_{t-1}) + f(x_t)
//! y'_t  = y'_{t-1} + y''_{t-1} * dt
//! y_t   = y_{t-1} + y'_{t-1} * dt
//! ```
//!
//! Note that the velocity update consumes the acceleration of the *previous*
//! step. The sensitivities in [`crate::autograd`] are derived for exactly this
//! scheme, so changing one without the other breaks the gradient checks.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, NdpError, Result};

/// Below this the normalising sum of the forcing term is treated as zero.
pub const BASIS_SUM_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// `exp(-h_i (x - c_i)^2)`.
    GaussianRbf,
    /// `x`, identical for every index.
    Linear,
    /// `sqrt(1 + (eps r)^2)` with `r = x - c_i`.
    Multiquadric,
    /// `1 / (1 + (eps r)^2)` with `r = x - c_i`.
    InverseQuadric,
    /// `1 / sqrt(1 + (eps r)^2)` with `r = x - c_i`.
    InverseMultiquadric,
}

impl BasisKind {
    pub const ALL: [BasisKind; 5] = [
        BasisKind::GaussianRbf,
        BasisKind::Linear,
        BasisKind::Multiquadric,
        BasisKind::InverseQuadric,
        BasisKind::InverseMultiquadric,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::GaussianRbf => "gaussian_rbf",
            BasisKind::Linear => "linear",
            BasisKind::Multiquadric => "multiquadric",
            BasisKind::InverseQuadric => "inverse_quadric",
            BasisKind::InverseMultiquadric => "inverse_multiquadric",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Fixed scalars of the dynamical system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DmpConfig {
    pub n_basis: usize,
    pub alpha: f64,
    /// `None` means critical damping, `alpha / 4`.
    pub beta: Option<f64>,
    pub a_x: f64,
    /// `None` means `1 / m_steps`, so one rollout spans unit time.
    pub dt: Option<f64>,
    pub m_steps: usize,
    pub k_rollout: usize,
    pub basis: BasisKind,
    pub epsilon: f64,
    pub learn_alpha: bool,
    /// The "only-g" ablation: the forcing term is identically zero.
    pub zero_forcing: bool,
}

impl Default for DmpConfig {
    fn default() -> Self {
        Self {
            n_basis: 6,
            alpha: 25.0,
            beta: None,
            a_x: 1.0,
            dt: None,
            m_steps: 35,
            k_rollout: 5,
            basis: BasisKind::GaussianRbf,
            epsilon: 5.0,
            learn_alpha: false,
            zero_forcing: false,
        }
    }
}

impl DmpConfig {
    pub fn new(n_basis: usize, m_steps: usize, k_rollout: usize) -> Self {
        Self {
            n_basis,
            m_steps,
            k_rollout,
            ..Self::default()
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.alpha / 4.0)
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(1.0 / self.m_steps as f64)
    }

    /// Copy with a different stiffness, keeping critical damping unless beta
    /// was pinned explicitly.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha", self.alpha),
            ("beta", self.beta()),
            ("a_x", self.a_x),
            ("dt", self.dt()),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(NdpError::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.n_basis == 0 {
            return Err(NdpError::Config("n_basis must be >= 1".into()));
        }
        if self.m_steps == 0 {
            return Err(NdpError::Config("m_steps must be >= 1".into()));
        }
        check_divisible(self.m_steps, self.k_rollout)
    }

    /// Centres `c_i = exp(-i a_x / n)` for `i = 1..=n`.
    pub fn centers(&self) -> Vec<f64> {
        let n = self.n_basis as f64;
        (1..=self.n_basis).map(|i| (-(i as f64) * self.a_x / n).exp()).collect()
    }

    /// Widths `h_i = n / c_i`.
    pub fn widths(&self) -> Vec<f64> {
        let n = self.n_basis as f64;
        self.centers().into_iter().map(|c| n / c).collect()
    }
}

fn check_divisible(m: usize, k: usize) -> Result<()> {
    if k == 0 || k > m || !m.is_multiple_of(k) {
        return Err(NdpError::Config(format!("rollout length k={k} must divide the integration steps m={m}")));
    }
    Ok(())
}

/// Precomputed centres and widths for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Basis {
    kind: BasisKind,
    epsilon: f64,
    centers: Vec<f64>,
    widths: Vec<f64>,
}

impl Basis {
    pub fn new(config: &DmpConfig) -> Self {
        Self {
            kind: config.basis,
            epsilon: config.epsilon,
            centers: config.centers(),
            widths: config.widths(),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        if !x.is_finite() {
            return Err(NdpError::Domain(format!("phase must be finite, got {x}")));
        }
        let eps = self.epsilon;
        let psi = self
            .centers
            .iter()
            .zip(&self.widths)
            .map(|(&c, &h)| {
                let r = x - c;
                match self.kind {
                    BasisKind::GaussianRbf => (-h * r * r).exp(),
                    BasisKind::Linear => x,
                    BasisKind::Multiquadric => (1.0 + (eps * r).powi(2)).sqrt(),
                    BasisKind::InverseQuadric => 1.0 / (1.0 + (eps * r).powi(2)),
                    BasisKind::InverseMultiquadric => 1.0 / (1.0 + (eps * r).powi(2)).sqrt(),
                }
            })
            .collect();
        Ok(psi)
    }
}

/// Basis activations `psi(x)` under the configured kernel.
pub fn basis_eval(x: f64, config: &DmpConfig) -> Result<Vec<f64>> {
    Basis::new(config).eval(x)
}

/// Learnable parameters: forcing weights `w` (row-major `dof x n_basis`) and goal `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpParams {
    pub n_basis: usize,
    pub w: Vec<f64>,
    pub g: Vec<f64>,
}

impl DmpParams {
    pub fn new(w: Vec<f64>, g: Vec<f64>, n_basis: usize) -> Result<Self> {
        if n_basis == 0 || w.len() != g.len() * n_basis {
            return Err(NdpError::Shape(format!(
                "w has {} entries, expected dof {} x n_basis {}",
                w.len(),
                g.len(),
                n_basis
            )));
        }
        ensure_finite(&w, "forcing weights")?;
        ensure_finite(&g, "goal")?;
        Ok(Self { n_basis, w, g })
    }

    pub fn zeros(dof: usize, n_basis: usize) -> Self {
        Self {
            n_basis,
            w: vec![0.0; dof * n_basis],
            g: vec![0.0; dof],
        }
    }

    pub fn dof(&self) -> usize {
        self.g.len()
    }

    pub fn weights(&self, d: usize) -> &[f64] {
        &self.w[d * self.n_basis..(d + 1) * self.n_basis]
    }

    fn check(&self, config: &DmpConfig, y0: &[f64]) -> Result<()> {
        if self.n_basis != config.n_basis {
            return Err(NdpError::Shape(format!(
                "params carry {} basis weights per dof, config has {}",
                self.n_basis, config.n_basis
            )));
        }
        if y0.len() != self.dof() {
            return Err(NdpError::Shape(format!("y0 has {} entries, params have dof {}", y0.len(), self.dof())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmpState {
    pub y: Vec<f64>,
    pub y_dot: Vec<f64>,
    pub y_ddot: Vec<f64>,
    pub x: f64,
}

impl DmpState {
    /// Start of a rollout: zero acceleration and unit phase.
    pub fn initial(y0: &[f64], y0_dot: &[f64]) -> Self {
        Self {
            y: y0.to_vec(),
            y_dot: y0_dot.to_vec(),
            y_ddot: vec![0.0; y0.len()],
            x: 1.0,
        }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.iter().chain(&self.y_dot).chain(&self.y_ddot).all(|v| v.is_finite())
    }
}

/// Everything the sensitivity recursion needs from a forward pass.
#[derive(Debug, Clone)]
pub struct RolloutTape {
    /// `m_steps + 1` states, `states[0]` is the initial state.
    pub states: Vec<DmpState>,
    /// `psi[t - 1] = psi(x_t)` for `t = 1..=m_steps`.
    pub psi: Vec<Vec<f64>>,
    pub params: DmpParams,
    pub config: DmpConfig,
    pub y0: Vec<f64>,
}

impl RolloutTape {
    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        self.states.iter().map(|s| s.y.as_slice())
    }

    pub fn final_state(&self) -> &DmpState {
        self.states.last().expect("tape holds at least the initial state")
    }
}

fn forcing_from_psi(psi: &[f64], x: f64, params: &DmpParams, y0: &[f64], config: &DmpConfig) -> Result<Vec<f64>> {
    let dof = params.dof();
    if config.zero_forcing {
        return Ok(vec![0.0; dof]);
    }
    let sum: f64 = psi.iter().sum();
    if sum.abs() < BASIS_SUM_FLOOR {
        return Err(NdpError::SingularBasis { x, sum });
    }
    Ok((0..dof)
        .map(|d| {
            let weighted: f64 = psi.iter().zip(params.weights(d)).map(|(p, w)| p * w).sum();
            weighted / sum * x * (params.g[d] - y0[d])
        })
        .collect())
}

/// Forcing term `f(x)` per degree of freedom.
pub fn forcing(x: f64, params: &DmpParams, y0: &[f64], config: &DmpConfig) -> Result<Vec<f64>> {
    params.check(config, y0)?;
    let psi = basis_eval(x, config)?;
    forcing_from_psi(&psi, x, params, y0, config)
}

/// One explicit Euler step of the canonical system.
pub fn canonical_step(x: f64, config: &DmpConfig) -> Result<f64> {
    if !x.is_finite() {
        return Err(NdpError::Domain(format!("phase must be finite, got {x}")));
    }
    Ok(x + config.dt() * (-config.a_x * x))
}

fn advance(state: &DmpState, psi: &[f64], x_next: f64, params: &DmpParams, y0: &[f64], config: &DmpConfig) -> Result<DmpState> {
    let f = forcing_from_psi(psi, x_next, params, y0, config)?;
    let (alpha, beta, dt) = (config.alpha, config.beta(), config.dt());
    let dof = params.dof();
    let mut next = DmpState {
        y: Vec::with_capacity(dof),
        y_dot: Vec::with_capacity(dof),
        y_ddot: Vec::with_capacity(dof),
        x: x_next,
    };
    for d in 0..dof {
        let (y, yd, ydd) = (state.y[d], state.y_dot[d], state.y_ddot[d]);
        next.y_ddot.push(alpha * (beta * (params.g[d] - y) - yd) + f[d]);
        next.y_dot.push(yd + ydd * dt);
        next.y.push(y + yd * dt);
    }
    Ok(next)
}

/// Advance the system by one integration step.
pub fn step(state: &DmpState, params: &DmpParams, y0: &[f64], config: &DmpConfig) -> Result<DmpState> {
    params.check(config, y0)?;
    if state.y.len() != params.dof() || state.y_dot.len() != params.dof() || state.y_ddot.len() != params.dof() {
        return Err(NdpError::Shape("state dimension differs from params dof".into()));
    }
    if !state.is_finite() {
        return Err(NdpError::IntegrationDiverged { step: 0 });
    }
    let x_next = canonical_step(state.x, config)?;
    let psi = basis_eval(x_next, config)?;
    let next = advance(state, &psi, x_next, params, y0, config)?;
    if !next.is_finite() {
        return Err(NdpError::IntegrationDiverged { step: 1 });
    }
    Ok(next)
}

/// Unroll the integrator for `config.m_steps` steps.
pub fn rollout(params: &DmpParams, y0: &[f64], y0_dot: &[f64], config: &DmpConfig) -> Result<RolloutTape> {
    params.check(config, y0)?;
    if y0_dot.len() != y0.len() {
        return Err(NdpError::Shape("y0_dot and y0 differ in length".into()));
    }
    ensure_finite(y0, "initial position")?;
    ensure_finite(y0_dot, "initial velocity")?;

    let basis = Basis::new(config);
    let mut states = Vec::with_capacity(config.m_steps + 1);
    let mut psi = Vec::with_capacity(config.m_steps);
    states.push(DmpState::initial(y0, y0_dot));
    for t in 1..=config.m_steps {
        let prev = &states[t - 1];
        let x = canonical_step(prev.x, config)?;
        let activations = basis.eval(x)?;
        let next = advance(prev, &activations, x, params, y0, config)?;
        if !next.is_finite() {
            return Err(NdpError::IntegrationDiverged { step: t });
        }
        states.push(next);
        psi.push(activations);
    }
    Ok(RolloutTape {
        states,
        psi,
        params: params.clone(),
        config: config.clone(),
        y0: y0.to_vec(),
    })
}

/// Integrator indices kept when sub-sampling `m` steps into `k` actions:
/// `m/k, 2m/k, ..., m`.
pub fn subsample_indices(m: usize, k: usize) -> Result<Vec<usize>> {
    check_divisible(m, k)?;
    let stride = m / k;
    Ok((1..=k).map(|j| j * stride).collect())
}

/// `k` equally spaced (position, velocity) pairs, excluding the initial state
/// and ending at the final one.
pub fn subsample(tape: &RolloutTape, k: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let m = tape.states.len() - 1;
    Ok(subsample_indices(m, k)?
        .into_iter()
        .map(|t| (tape.states[t].y.clone(), tape.states[t].y_dot.clone()))
        .collect())
}
