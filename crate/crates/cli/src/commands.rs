//! One function per subcommand. Each writes its artifacts into `dir`.

use std::path::{Path, PathBuf};

use ndp_core::autograd::{fd_check_with, sweep_case, trajectory_jacobians, trajectory_jacobians_faulty, SweepLimits};
use ndp_core::dmp::BasisKind;
use ndp_core::envs::{trace_from_csv, trace_to_csv, TRACE_HEADER};
use ndp_core::imitation::{baseline_train_direct, train_imitation, trajectory_csv, write_jsonl, TrajectoryModel};
use ndp_core::ppo::{train_rl, Algo, CurvePoint, RlConfig, TrainingRun, EVAL_SEED_BASE};
use serde::Serialize;

use crate::config::{Grid, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{read_metrics, write_file, MetricLog};
use crate::plot::{metric_figures, render, render_panels, stroke_figure, trace_figure, Figure, Series};

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub index: u64,
    pub dof: usize,
    pub n_basis: usize,
    pub m_steps: usize,
    pub max_rel_error: f64,
    /// Analytic and numeric values of the worst entry.
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub pass: bool,
    pub cases: Vec<GradCheckCase>,
}

/// Seeded sweep of `cases` random problems plus a single-basis, single-dof
/// edge case.
pub fn grad_check(config: &RunConfig, faulty: bool) -> Result<GradCheckReport> {
    let g = &config.grad_check;
    let edge = SweepLimits {
        max_dof: 1,
        max_basis: 1,
        ..g.limits()
    };
    let mut cases = Vec::with_capacity(g.cases + 1);
    for index in 0..=g.cases as u64 {
        let limits = if index == g.cases as u64 { edge } else { g.limits() };
        let case = sweep_case(config.seed, index, limits);
        let report = if faulty {
            fd_check_with(&case.params, &case.y0, &case.y0_dot, &case.config, g.h, trajectory_jacobians_faulty)?
        } else {
            fd_check_with(&case.params, &case.y0, &case.y0_dot, &case.config, g.h, trajectory_jacobians)?
        };
        cases.push(GradCheckCase {
            index,
            dof: case.params.dof(),
            n_basis: case.params.n_basis,
            m_steps: case.config.m_steps,
            max_rel_error: report.max_rel_error,
            worst_analytic: report.analytic,
            worst_numeric: report.numeric,
            entries: report.entries_checked,
        });
    }
    let max_rel_error = cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        tolerance: g.tolerance,
        max_rel_error,
        pass: max_rel_error <= g.tolerance,
        cases,
    })
}

pub fn cmd_grad_check(config: &RunConfig, dir: &Path, faulty: bool) -> Result<GradCheckReport> {
    let report = grad_check(config, faulty)?;
    let mut log = MetricLog::create(&dir.join("metrics.jsonl"), config.record_wall_time)?;
    for c in &report.cases {
        log.log(c.index, "max_rel_error", c.max_rel_error)?;
    }
    log.finish()?;
    write_file(&dir.join("report.json"), &to_json(&report)?)?;
    println!(
        "grad-check: {} cases, max relative error {:.3e} (tolerance {:.0e}) {}",
        report.cases.len(),
        report.max_rel_error,
        report.tolerance,
        if report.pass { "PASS" } else { "FAIL" }
    );
    if !report.pass {
        return Err(CliError::Numerical(format!(
            "gradient check failed: max relative error {:.3e} > {:.0e}",
            report.max_rel_error, report.tolerance
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub params: usize,
    pub train_loss: f64,
    pub heldout_loss: f64,
}

/// Trains the DMP policy and the direct baseline on the same split.
pub fn cmd_train_imitation(config: &RunConfig, dir: &Path) -> Result<Vec<ModelSummary>> {
    let cfg = &config.imitation;
    let seed = config.seed;
    let (train, heldout) = cfg.dataset(seed)?;
    let mut data_out = Vec::new();
    write_jsonl(&train, &mut data_out)?;
    write_jsonl(&heldout, &mut data_out)?;
    write_file(&dir.join("dataset.jsonl"), &String::from_utf8_lossy(&data_out))?;

    let ndp = train_imitation(cfg, &train, &heldout, seed, |_| {})?;
    let direct = baseline_train_direct(cfg, &train, &heldout, seed, |_| {})?;
    let mut log = MetricLog::create(&dir.join("metrics.jsonl"), config.record_wall_time)?;
    for (prefix, history) in [("ndp", &ndp.history), ("direct", &direct.history)] {
        for r in history {
            log.log(r.epoch as u64, &format!("{prefix}/train_loss"), r.train_loss)?;
            log.log(r.epoch as u64, &format!("{prefix}/heldout_loss"), r.heldout_loss)?;
        }
    }
    log.finish()?;

    let last = |h: &[ndp_core::imitation::EpochRecord]| h.last().map_or((f64::NAN, f64::NAN), |r| (r.train_loss, r.heldout_loss));
    let (nt, nh) = last(&ndp.history);
    let (dt, dh) = last(&direct.history);
    let summary = vec![
        ModelSummary {
            model: "ndp".into(),
            params: ndp.model.mlp().num_params(),
            train_loss: nt,
            heldout_loss: nh,
        },
        ModelSummary {
            model: "direct".into(),
            params: direct.model.mlp().num_params(),
            train_loss: dt,
            heldout_loss: dh,
        },
    ];
    let mut table = String::from("| model | parameters | train loss / point | held-out loss / point |\n|---|---:|---:|---:|\n");
    for s in &summary {
        table.push_str(&format!("| {} | {} | {:.6} | {:.6} |\n", s.model, s.params, s.train_loss, s.heldout_loss));
    }
    write_file(&dir.join("summary.md"), &table)?;
    write_file(&dir.join("summary.json"), &to_json(&summary)?)?;
    print!("{table}");

    let shown: Vec<&_> = heldout.iter().take(4).collect();
    if !shown.is_empty() {
        let ndp_paths = ndp.model.predict(&shown)?;
        let direct_paths = direct.model.predict(&shown)?;
        let traj = dir.join("trajectories");
        std::fs::create_dir_all(&traj).map_err(CliError::io(format!("creating {}", traj.display())))?;
        let mut panels = Vec::new();
        for (i, d) in shown.iter().enumerate() {
            write_file(&traj.join(format!("ndp-{i}.csv")), &trajectory_csv(&ndp_paths[i], &d.target))?;
            write_file(&traj.join(format!("direct-{i}.csv")), &trajectory_csv(&direct_paths[i], &d.target))?;
            panels.push(stroke_figure(
                &format!("digit {} (held out)", d.digit),
                &[("target", &d.target), ("ndp", &ndp_paths[i]), ("direct", &direct_paths[i])],
            ));
        }
        write_file(&dir.join("strokes.svg"), &render_panels(&panels, 2))?;
    }
    Ok(summary)
}

fn log_point(log: &mut MetricLog, p: &CurvePoint) -> Result<()> {
    let s = p.env_steps as u64;
    log.log(s, "train_success", p.train_success)?;
    log.log(s, "train_return", p.train_return)?;
    if let Some(e) = p.eval {
        log.log(s, "eval_success", e.success_rate)?;
        log.log(s, "eval_return", e.mean_return)?;
    }
    log.log(s, "policy_loss", p.stats.policy_loss)?;
    log.log(s, "value_loss", p.stats.value_loss)?;
    log.log(s, "entropy", p.stats.entropy)?;
    log.log(s, "approx_kl", p.stats.approx_kl)?;
    log.log(s, "clip_fraction", p.stats.clip_fraction)?;
    log.log(s, "grad_norm", p.stats.grad_norm)?;
    log.log(s, "actor_forwards", p.actor_forwards as f64)?;
    log.log(s, "lr", p.lr)
}

fn train_logged(rl: RlConfig, seed: u64, metrics: &Path, record_wall_time: bool) -> Result<TrainingRun> {
    let mut log = MetricLog::create(metrics, record_wall_time)?;
    let mut failure = None;
    let run = train_rl(rl, seed, |p| {
        if let Err(e) = log_point(&mut log, p) {
            failure.get_or_insert(e);
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    log.finish()?;
    Ok(run)
}

fn curve_figure(title: &str, run: &TrainingRun) -> Figure {
    let mut series = vec![Series::line("train", run.curve.iter().map(|p| [p.env_steps as f64, p.train_success]).collect())];
    if run.curve.iter().any(|p| p.eval.is_some()) {
        series.push(Series::line(
            "eval",
            run.curve.iter().filter_map(|p| p.eval.map(|e| [p.env_steps as f64, e.success_rate])).collect(),
        ));
    }
    Figure {
        title: title.to_string(),
        x_label: "env steps".into(),
        y_label: "success rate".into(),
        series,
        equal_aspect: false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RlSummary {
    pub algo: String,
    pub env: String,
    pub env_steps: usize,
    pub samples_to_50: Option<usize>,
    pub samples_to_90: Option<usize>,
    pub final_success: Option<f64>,
    pub best_success: f64,
}

pub fn cmd_train_rl(config: &RunConfig, dir: &Path) -> Result<RlSummary> {
    let rl = config.rl.clone();
    let run = train_logged(rl.clone(), config.seed, &dir.join("metrics.jsonl"), config.record_wall_time)?;
    run.trainer.checkpoint()?.save(dir.join("checkpoint.ndp"))?;
    let trace = run.trainer.trace(EVAL_SEED_BASE)?;
    write_file(&dir.join("trace.csv"), &trace_to_csv(&trace))?;
    write_file(
        &dir.join("trace.svg"),
        &render(&trace_figure(&format!("{} on {}", rl.algo.name(), rl.env), &trace)),
    )?;
    write_file(
        &dir.join("curve.svg"),
        &render(&curve_figure(&format!("{} on {}", rl.algo.name(), rl.env), &run)),
    )?;
    let summary = RlSummary {
        algo: rl.algo.name().into(),
        env: rl.env.clone(),
        env_steps: run.trainer.env_steps,
        samples_to_50: run.samples_to(0.5),
        samples_to_90: run.samples_to(0.9),
        final_success: run.final_success(),
        best_success: run.best_success(),
    };
    write_file(&dir.join("summary.json"), &to_json(&summary)?)?;
    println!(
        "{} on {}: {} env steps, final eval success {}, best {:.2}",
        summary.algo,
        summary.env,
        summary.env_steps,
        summary.final_success.map_or("n/a".into(), |s| format!("{s:.2}")),
        summary.best_success
    );
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub grid: Option<Grid>,
    pub name: String,
    pub rl: RlConfig,
}

pub const BASIS_COUNTS: [usize; 5] = [2, 6, 10, 15, 20];
pub const ROLLOUT_LENGTHS: [usize; 5] = [3, 5, 7, 10, 15];
pub const INTEGRATION_STEPS: [usize; 4] = [15, 25, 35, 45];

/// The reference cell followed by every cell of the requested grids. Every
/// cell trains the DMP policy on `ablate.env` for `ablate.total_steps`.
pub fn ablation_cells(config: &RunConfig) -> Result<Vec<Cell>> {
    let mut base = config.rl.clone();
    base.algo = Algo::Ndp;
    base.env = config.ablate.env.clone();
    base.total_steps = config.ablate.total_steps;
    let base_dt = base.dmp.dt();
    let default_horizon = base.env_kind()?.default_horizon();

    let mut cells = vec![Cell {
        grid: None,
        name: "full".into(),
        rl: base.clone(),
    }];
    for &grid in &config.ablate.grids {
        let mut push = |name: String, rl: RlConfig| cells.push(Cell { grid: Some(grid), name, rl });
        match grid {
            Grid::Basis => {
                for n in BASIS_COUNTS {
                    let mut rl = base.clone();
                    rl.dmp.n_basis = n;
                    push(format!("basis-{n}"), rl);
                }
            }
            Grid::Rollout => {
                for k in ROLLOUT_LENGTHS {
                    let mut rl = base.clone();
                    rl.k = k;
                    rl.dmp.k_rollout = k;
                    rl.dmp.m_steps = base.dmp.m_steps.div_ceil(k) * k;
                    rl.dmp.dt = None;
                    if base.horizon.is_none() && default_horizon % k != 0 {
                        rl.horizon = Some(default_horizon.div_ceil(k) * k);
                    }
                    push(format!("rollout-{k}"), rl);
                }
            }
            Grid::Steps => {
                for m in INTEGRATION_STEPS {
                    let mut rl = base.clone();
                    rl.dmp.m_steps = m;
                    rl.dmp.dt = Some(base_dt);
                    push(format!("steps-{m}"), rl);
                }
            }
            Grid::Kernel => {
                for kind in BasisKind::ALL {
                    let mut rl = base.clone();
                    rl.dmp.basis = kind;
                    push(format!("kernel-{}", kind.name()), rl);
                }
            }
            Grid::LearnAlpha => {
                let mut rl = base.clone();
                rl.dmp.learn_alpha = true;
                push("learn-alpha".into(), rl);
            }
            Grid::OnlyG => {
                let mut rl = base.clone();
                rl.dmp.zero_forcing = true;
                push("only-g".into(), rl);
            }
        }
    }
    for c in &cells {
        c.rl.validate().map_err(|e| CliError::Config(format!("cell {}: {e}", c.name)))?;
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub cell: String,
    pub seed: u64,
    pub final_success: f64,
    pub best_success: f64,
    pub env_steps: usize,
}

pub fn describe_cells(cells: &[Cell]) -> String {
    let mut out = String::new();
    for c in cells {
        let d = &c.rl.dmp;
        out.push_str(&format!(
            "{:<22} n={:<2} k={:<2} m={:<2} dt={:.5} basis={} learn_alpha={} only_g={}\n",
            c.name,
            d.n_basis,
            c.rl.k,
            d.m_steps,
            d.dt(),
            d.basis.name(),
            d.learn_alpha,
            d.zero_forcing
        ));
    }
    out
}

pub fn cmd_ablate(config: &RunConfig, dir: &Path) -> Result<Vec<CellResult>> {
    let cells = ablation_cells(config)?;
    let cell_dir = dir.join("cells");
    std::fs::create_dir_all(&cell_dir).map_err(CliError::io(format!("creating {}", cell_dir.display())))?;
    write_file(&dir.join("cells.txt"), &describe_cells(&cells))?;
    let mut results = Vec::new();
    for offset in 0..config.ablate.seeds as u64 {
        let seed = config.seed + offset;
        for cell in &cells {
            let metrics = cell_dir.join(format!("{}-s{seed}.jsonl", cell.name));
            let run = train_logged(cell.rl.clone(), seed, &metrics, config.record_wall_time)?;
            let r = CellResult {
                cell: cell.name.clone(),
                seed,
                final_success: run.tail_success(config.ablate.tail).unwrap_or(f64::NAN),
                best_success: run.best_success(),
                env_steps: run.trainer.env_steps,
            };
            println!("{:<22} seed {seed}: final {:.3} best {:.3}", r.cell, r.final_success, r.best_success);
            results.push(r);
        }
    }
    let mut csv = String::from("cell,seed,final_success,best_success,env_steps\n");
    for r in &results {
        csv.push_str(&format!("{},{},{},{},{}\n", r.cell, r.seed, r.final_success, r.best_success, r.env_steps));
    }
    write_file(&dir.join("summary.csv"), &csv)?;
    let mut md = String::from("| cell | seeds | mean final success | mean best success |\n|---|---:|---:|---:|\n");
    for cell in &cells {
        let rs: Vec<&CellResult> = results.iter().filter(|r| r.cell == cell.name).collect();
        let n = rs.len().max(1) as f64;
        md.push_str(&format!(
            "| {} | {} | {:.3} | {:.3} |\n",
            cell.name,
            rs.len(),
            rs.iter().map(|r| r.final_success).sum::<f64>() / n,
            rs.iter().map(|r| r.best_success).sum::<f64>() / n
        ));
    }
    write_file(&dir.join("summary.md"), &md)?;
    Ok(results)
}

fn file_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    if stem == "metrics" {
        if let Some(parent) = path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
            return parent.to_string();
        }
    }
    stem.to_string()
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Episode traces and stroke CSVs become one SVG each; metric logs are
/// overlaid, one SVG per metric name.
pub fn cmd_plot(inputs: &[PathBuf], metrics: &[String], dir: &Path) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(CliError::Config("plot needs at least one input file".into()));
    }
    let mut written = Vec::new();
    let mut logs: Vec<(String, Vec<_>)> = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
        let first = text.lines().next().unwrap_or("").trim();
        let label = file_label(path);
        let fig = if first == TRACE_HEADER {
            Some(trace_figure(&label, &trace_from_csv(&text)?))
        } else if first == "t,pred_x,pred_y,target_x,target_y" {
            Some(stroke_figure(
                &label,
                &stroke_columns(&text)?.iter().map(|(l, p)| (*l, p.as_slice())).collect::<Vec<_>>(),
            ))
        } else if first.is_empty() || first.starts_with('{') {
            let mut label = label;
            while logs.iter().any(|(l, _)| *l == label) {
                label.push('\'');
            }
            logs.push((label, read_metrics(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?));
            None
        } else {
            return Err(CliError::Config(format!("{}: unrecognised input format", path.display())));
        };
        if let Some(fig) = fig {
            let out = dir.join(format!("{}.svg", sanitize(&file_label(path))));
            write_file(&out, &render(&fig))?;
            written.push(out);
        }
    }
    if !logs.is_empty() {
        for (name, fig) in metric_figures(&logs, metrics) {
            let out = dir.join(format!("metric-{}.svg", sanitize(&name)));
            write_file(&out, &render(&fig))?;
            written.push(out);
        }
    }
    Ok(written)
}

type NamedPath = (&'static str, Vec<[f64; 2]>);

fn stroke_columns(text: &str) -> Result<Vec<NamedPath>> {
    let mut pred = Vec::new();
    let mut target = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let v: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Config(format!("stroke line {}: {e}", i + 1)))?;
        if v.len() != 5 {
            return Err(CliError::Config(format!("stroke line {} has {} fields", i + 1, v.len())));
        }
        pred.push([v[1], v[2]]);
        target.push([v[3], v[4]]);
    }
    Ok(vec![("target", target), ("predicted", pred)])
}
