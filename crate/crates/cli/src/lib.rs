//! The `ndp` command-line runner.
//!
//! Every command reads one [`RunConfig`] (defaults, then `--config`, then
//! `--override`s, then `--seed` / `--out`), creates a run directory under
//! `out` and writes its artifacts there.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "ndp", version, about = "Neural dynamic policy experiments")]
pub struct Cli {
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parent directory for run directories.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// `section.key=value`, applied after the config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare analytic DMP Jacobians with finite differences.
    GradCheck {
        /// Use a deliberately wrong Jacobian, to confirm the check fails.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Behaviour cloning on synthetic digit strokes, DMP policy vs direct regression.
    TrainImitation,
    /// PPO on one of the planar environments.
    TrainRl,
    /// One-factor sweeps over the DMP settings.
    Ablate {
        /// List the cells without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Render episode traces, stroke CSVs and metric logs to SVG.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Only plot these metric names.
        #[arg(long = "metric")]
        metrics: Vec<String>,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GradCheck { .. } => "grad-check",
            Command::TrainImitation => "train-imitation",
            Command::TrainRl => "train-rl",
            Command::Ablate { .. } => "ablate",
            Command::Plot { .. } => "plot",
            Command::ShowConfig => "show-config",
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut config = base.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Run a parsed command. Returns the run directory, if one was created.
pub fn execute(cli: &Cli) -> Result<Option<PathBuf>> {
    let config = resolve_config(cli)?;
    match &cli.command {
        Command::ShowConfig => {
            print!("{}", config.to_toml()?);
            return Ok(None);
        }
        Command::Ablate { dry_run: true } => {
            let cells = commands::ablation_cells(&config)?;
            print!("{}", commands::describe_cells(&cells));
            println!("{} cells x {} seeds", cells.len(), config.ablate.seeds);
            return Ok(None);
        }
        _ => {}
    }
    let dir = output::create_run_dir(&config, cli.command.name())?;
    match &cli.command {
        Command::GradCheck { inject_fault } => {
            commands::cmd_grad_check(&config, &dir, *inject_fault)?;
        }
        Command::TrainImitation => {
            commands::cmd_train_imitation(&config, &dir)?;
        }
        Command::TrainRl => {
            commands::cmd_train_rl(&config, &dir)?;
        }
        Command::Ablate { .. } => {
            commands::cmd_ablate(&config, &dir)?;
        }
        Command::Plot { inputs, metrics } => {
            for path in commands::cmd_plot(inputs, metrics, &dir)? {
                println!("{}", path.display());
            }
        }
        Command::ShowConfig => unreachable!(),
    }
    println!("artifacts in {}", dir.display());
    Ok(Some(dir))
}

/// Parse and run; the value is the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
