//! The run configuration: one TOML document with a section per command.

use std::path::{Path, PathBuf};

use ndp_core::autograd::{SweepLimits, FD_STEP};
use ndp_core::imitation::ImitationConfig;
use ndp_core::ppo::RlConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Parent directory of the per-run directories.
    pub out: PathBuf,
    /// Stamp metric records with elapsed seconds. Off by default so that
    /// logs from identical runs are byte-identical.
    pub record_wall_time: bool,
    pub grad_check: GradCheckConfig,
    pub imitation: ImitationConfig,
    pub rl: RlConfig,
    pub ablate: AblateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            record_wall_time: false,
            grad_check: GradCheckConfig::default(),
            imitation: ImitationConfig::default(),
            rl: RlConfig::default(),
            ablate: AblateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub cases: usize,
    pub max_dof: usize,
    pub max_basis: usize,
    pub max_steps: usize,
    pub max_weight: f64,
    pub h: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        let limits = SweepLimits::default();
        Self {
            cases: 50,
            max_dof: limits.max_dof,
            max_basis: limits.max_basis,
            max_steps: limits.max_steps,
            max_weight: limits.max_weight,
            h: FD_STEP,
            tolerance: 1e-4,
        }
    }
}

impl GradCheckConfig {
    pub fn limits(&self) -> SweepLimits {
        SweepLimits {
            max_dof: self.max_dof,
            max_basis: self.max_basis,
            max_steps: self.max_steps,
            max_weight: self.max_weight,
        }
    }
}

/// Which one-factor sweep to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    Basis,
    Rollout,
    Steps,
    Kernel,
    LearnAlpha,
    OnlyG,
}

impl Grid {
    pub const ALL: [Grid; 6] = [Grid::Basis, Grid::Rollout, Grid::Steps, Grid::Kernel, Grid::LearnAlpha, Grid::OnlyG];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    /// Every cell trains the `[rl]` section on this env with these many steps.
    pub env: String,
    pub total_steps: usize,
    /// Seeds `seed, seed + 1, ...` are run for every cell.
    pub seeds: usize,
    pub grids: Vec<Grid>,
    /// Final success is the mean over this many trailing evaluations.
    pub tail: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            env: "push".into(),
            total_steps: 300_000,
            seeds: 1,
            grids: Grid::ALL.to_vec(),
            tail: 10,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Apply `section.key=value` overrides. Values are parsed as TOML and
    /// fall back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Table::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        for item in overrides {
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override '{item}' is not key=value")))?;
            let keys: Vec<&str> = path.trim().split('.').collect();
            if keys.iter().any(|k| k.is_empty()) {
                return Err(CliError::Config(format!("override '{item}' has an empty key")));
            }
            set_path(&mut doc, &keys, parse_value(raw.trim()))?;
        }
        toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.rl.validate()?;
        self.imitation.validate()?;
        let g = &self.grad_check;
        if g.cases == 0 || g.max_dof == 0 || g.max_basis == 0 || g.max_steps < 2 {
            return Err(CliError::Config("grad_check sizes must be positive (max_steps >= 2)".into()));
        }
        if !(g.tolerance > 0.0) {
            return Err(CliError::Config("grad_check.tolerance must be positive".into()));
        }
        if self.ablate.seeds == 0 || self.ablate.total_steps == 0 {
            return Err(CliError::Config("ablate.seeds and ablate.total_steps must be positive".into()));
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(table: &mut toml::Table, keys: &[&str], value: toml::Value) -> Result<()> {
    let (last, parents) = keys.split_last().expect("non-empty path");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override path '{}': '{k}' is not a section", keys.join("."))))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
