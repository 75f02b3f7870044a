//! Browser entry points for the static demo page in `www/`.
//!
//! Every export wraps a plain function that returns `Result<_, String>` so the
//! logic can be tested natively. Paths cross the boundary as flat
//! `[x0, y0, x1, y1, ...]` arrays.

use nalgebra::{DMatrix, DVector};
use ndp_core::autograd::trajectory_jacobians;
use ndp_core::dmp::{rollout, Basis, BasisKind, DmpConfig, DmpParams};
use ndp_core::imitation::strokes::{canonical_stroke, NUM_CLASSES};
use wasm_bindgen::prelude::*;

fn kernel(name: &str) -> Result<BasisKind, String> {
    BasisKind::from_name(name).ok_or_else(|| {
        let known: Vec<&str> = BasisKind::ALL.iter().map(|k| k.name()).collect();
        format!("unknown kernel '{name}' (expected one of {})", known.join(", "))
    })
}

fn dmp_config(n_basis: usize, m_steps: usize, alpha: f64, kernel_name: &str) -> Result<DmpConfig, String> {
    let config = DmpConfig {
        alpha,
        basis: kernel(kernel_name)?,
        ..DmpConfig::new(n_basis, m_steps, m_steps)
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn flatten(points: impl Iterator<Item = [f64; 2]>) -> Vec<f64> {
    points.flat_map(|p| p.into_iter()).collect()
}

/// Planar rollout; `w` holds `n_basis` weights for x followed by `n_basis` for y.
pub fn rollout_path_impl(
    w: &[f64],
    goal: [f64; 2],
    start: [f64; 2],
    n_basis: usize,
    m_steps: usize,
    alpha: f64,
    kernel_name: &str,
) -> Result<Vec<f64>, String> {
    let config = dmp_config(n_basis, m_steps, alpha, kernel_name)?;
    let params = DmpParams::new(w.to_vec(), goal.to_vec(), n_basis).map_err(|e| e.to_string())?;
    let tape = rollout(&params, &start, &[0.0, 0.0], &config).map_err(|e| e.to_string())?;
    Ok(flatten(tape.positions().map(|y| [y[0], y[1]])))
}

/// `samples` phases evenly spaced over `[0, 1]`, then one row of `samples`
/// activations per basis function.
pub fn basis_curves_impl(n_basis: usize, kernel_name: &str, epsilon: f64, samples: usize) -> Result<Vec<f64>, String> {
    if samples < 2 {
        return Err("need at least two samples".into());
    }
    let config = DmpConfig {
        epsilon,
        basis: kernel(kernel_name)?,
        ..DmpConfig::new(n_basis, 35, 5)
    };
    config.validate().map_err(|e| e.to_string())?;
    let basis = Basis::new(&config);
    let phases: Vec<f64> = (0..samples).map(|i| i as f64 / (samples - 1) as f64).collect();
    let mut rows = vec![vec![0.0; samples]; n_basis];
    for (j, &x) in phases.iter().enumerate() {
        for (i, v) in basis.eval(x).map_err(|e| e.to_string())?.into_iter().enumerate() {
            rows[i][j] = v;
        }
    }
    Ok(phases.into_iter().chain(rows.into_iter().flatten()).collect())
}

/// Least-squares DMP fit of one canonical digit stroke.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct StrokeFit {
    target: Vec<f64>,
    fitted: Vec<f64>,
    weights: Vec<f64>,
    mse: f64,
}

#[wasm_bindgen]
impl StrokeFit {
    /// The demonstration, start point included.
    pub fn target(&self) -> Vec<f64> {
        self.target.clone()
    }

    pub fn fitted(&self) -> Vec<f64> {
        self.fitted.clone()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.weights.clone()
    }

    /// Mean squared distance per point, start excluded.
    pub fn mse(&self) -> f64 {
        self.mse
    }
}

/// The goal is pinned to the stroke's last point; each coordinate's weights
/// then enter the rollout linearly, so the fit is an ordinary least-squares
/// problem on the trajectory Jacobian.
pub fn fit_stroke_impl(digit: usize, n_basis: usize, t_points: usize, alpha: f64, kernel_name: &str) -> Result<StrokeFit, String> {
    if digit >= NUM_CLASSES {
        return Err(format!("digit must be below {NUM_CLASSES}"));
    }
    let config = dmp_config(n_basis, t_points, alpha, kernel_name)?;
    let stroke = canonical_stroke(digit, t_points);
    let start = stroke[0];
    let goal = stroke[t_points];
    let base_params = DmpParams::new(vec![0.0; 2 * n_basis], goal.to_vec(), n_basis).map_err(|e| e.to_string())?;
    let base = rollout(&base_params, &start, &[0.0, 0.0], &config).map_err(|e| e.to_string())?;
    let jac = trajectory_jacobians(&base).map_err(|e| e.to_string())?;

    let mut weights = Vec::with_capacity(2 * n_basis);
    for d in 0..2 {
        let a = DMatrix::from_fn(t_points, n_basis, |t, i| jac.w(t + 1, d)[i]);
        let b = DVector::from_fn(t_points, |t, _| stroke[t + 1][d] - base.states[t + 1].y[d]);
        let w = a.svd(true, true).solve(&b, 1e-12).map_err(|e| e.to_string())?;
        weights.extend(w.iter());
    }
    let params = DmpParams::new(weights.clone(), goal.to_vec(), n_basis).map_err(|e| e.to_string())?;
    let tape = rollout(&params, &start, &[0.0, 0.0], &config).map_err(|e| e.to_string())?;
    let fitted: Vec<[f64; 2]> = tape.positions().map(|y| [y[0], y[1]]).collect();
    let mse = fitted[1..]
        .iter()
        .zip(&stroke[1..])
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum::<f64>()
        / t_points as f64;
    Ok(StrokeFit {
        target: flatten(stroke.into_iter()),
        fitted: flatten(fitted.into_iter()),
        weights,
        mse,
    })
}

#[wasm_bindgen(js_name = rolloutPath)]
#[allow(clippy::too_many_arguments)]
pub fn rollout_path(
    w: Vec<f64>,
    goal_x: f64,
    goal_y: f64,
    start_x: f64,
    start_y: f64,
    n_basis: usize,
    m_steps: usize,
    alpha: f64,
    kernel: &str,
) -> Result<Vec<f64>, JsError> {
    rollout_path_impl(&w, [goal_x, goal_y], [start_x, start_y], n_basis, m_steps, alpha, kernel).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = basisCurves)]
pub fn basis_curves(n_basis: usize, kernel: &str, epsilon: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    basis_curves_impl(n_basis, kernel, epsilon, samples).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = fitStroke)]
pub fn fit_stroke(digit: usize, n_basis: usize, t_points: usize, alpha: f64, kernel: &str) -> Result<StrokeFit, JsError> {
    fit_stroke_impl(digit, n_basis, t_points, alpha, kernel).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = kernelNames)]
pub fn kernel_names() -> Vec<String> {
    BasisKind::ALL.iter().map(|k| k.name().to_string()).collect()
}
