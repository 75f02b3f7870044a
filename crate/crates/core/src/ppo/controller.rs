use serde::{Deserialize, Serialize};

use crate::envs::ControlMode;
use crate::error::{NdpError, Result};

/// Maps a desired robot state onto an executable env action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InverseController {
    /// The target position is the action (env in position mode).
    #[default]
    Identity,
    /// `kp (y* - y) + kd (v* - v)` on the planar dofs (env in force mode).
    Pd { kp: f64, kd: f64 },
}

impl InverseController {
    pub fn from_name(name: &str, kp: f64, kd: f64) -> Result<Self> {
        match name {
            "identity" => Ok(InverseController::Identity),
            "pd" => Ok(InverseController::Pd { kp, kd }),
            other => Err(NdpError::Config(format!("unknown controller mode '{other}' (expected identity or pd)"))),
        }
    }

    pub fn control_mode(&self) -> ControlMode {
        match self {
            InverseController::Identity => ControlMode::Position,
            InverseController::Pd { .. } => ControlMode::Force,
        }
    }

    pub fn apply(&self, y_target: &[f64], v_target: &[f64], y: &[f64], v: &[f64]) -> Vec<f64> {
        inverse_controller(y_target, v_target, y, v, *self)
    }
}

/// Only the first two components are actuated by force; any further
/// components (the gripper) are passed through as commanded.
pub fn inverse_controller(y_target: &[f64], v_target: &[f64], y: &[f64], v: &[f64], mode: InverseController) -> Vec<f64> {
    match mode {
        InverseController::Identity => y_target.to_vec(),
        InverseController::Pd { kp, kd } => y_target
            .iter()
            .enumerate()
            .map(|(d, &yt)| if d < 2 { kp * (yt - y[d]) + kd * (v_target[d] - v[d]) } else { yt })
            .collect(),
    }
}
