//! Run directories and metric logs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// `<out>/<command>-<unix seconds>-s<seed>`, with a numeric suffix if taken.
/// The resolved config is written into it as `config.toml`.
pub fn create_run_dir(config: &RunConfig, command: &str) -> Result<PathBuf> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let base = format!("{command}-{secs}-s{}", config.seed);
    std::fs::create_dir_all(&config.out).map_err(CliError::io(format!("creating {}", config.out.display())))?;
    let mut dir = config.out.join(&base);
    let mut n = 1;
    while dir.exists() {
        dir = config.out.join(format!("{base}-{n}"));
        n += 1;
    }
    std::fs::create_dir(&dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
    write_file(&dir.join("config.toml"), &config.to_toml()?)?;
    Ok(dir)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(CliError::io(format!("writing {}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub wall_time: f64,
    pub env_steps: u64,
    pub metric_name: String,
    #[serde(deserialize_with = "null_as_nan")]
    pub value: f64,
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// Line-delimited JSON metric log.
pub struct MetricLog {
    out: BufWriter<File>,
    path: PathBuf,
    start: Option<Instant>,
}

impl MetricLog {
    pub fn create(path: &Path, record_wall_time: bool) -> Result<Self> {
        let file = File::create(path).map_err(CliError::io(format!("creating {}", path.display())))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            start: record_wall_time.then(Instant::now),
        })
    }

    /// Non-finite values are written as JSON `null`.
    pub fn log(&mut self, env_steps: u64, name: &str, value: f64) -> Result<()> {
        let record = MetricRecord {
            wall_time: self.start.map_or(0.0, |s| s.elapsed().as_secs_f64()),
            env_steps,
            metric_name: name.to_string(),
            value,
        };
        serde_json::to_writer(&mut self.out, &record).map_err(|e| CliError::Config(e.to_string()))?;
        self.out.write_all(b"\n").map_err(CliError::io(format!("writing {}", self.path.display())))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(CliError::io(format!("writing {}", self.path.display())))
    }
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<MetricRecord>(l).map_err(|e| CliError::Config(format!("metrics line {}: {e}", i + 1))))
        .collect()
}
