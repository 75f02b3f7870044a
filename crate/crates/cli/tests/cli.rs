use std::path::{Path, PathBuf};
use std::process::Command;

use ndp_cli::config::{Grid, RunConfig};
use ndp_cli::output::read_metrics;
use proptest::prelude::*;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Outcome {
    fn run_dir(&self) -> PathBuf {
        let line = self.stdout.lines().find_map(|l| l.strip_prefix("artifacts in ")).expect("no run dir in output");
        PathBuf::from(line.trim())
    }
}

fn ndp(out: &Path, args: &[&str]) -> Outcome {
    let o = Command::new(env!("CARGO_BIN_EXE_ndp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn ndp");
    Outcome {
        code: o.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&o.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

const SMALL_RL: &[&str] = &[
    "--override",
    "rl.total_steps=4096",
    "--override",
    "rl.eval_episodes=4",
    "--override",
    "rl.ppo.epochs=2",
];

const SMALL_IMITATION: &[&str] = &[
    "--override",
    "imitation.strokes.classes=1",
    "--override",
    "imitation.num_per_class=20",
    "--override",
    "imitation.epochs=5",
];

#[test]
fn plot_output_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = fixtures();
    let inputs = [dir.join("curve.jsonl"), dir.join("trace.csv")];
    let written = ndp_cli::commands::cmd_plot(&inputs, &[], tmp.path()).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["trace.svg", "metric-eval_success.svg", "metric-value_loss.svg"]);
    for (path, name) in written.iter().zip(&names) {
        let got = std::fs::read_to_string(path).unwrap();
        let golden = dir.join(format!("golden-{name}"));
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::write(&golden, &got).unwrap();
        }
        let want = std::fs::read_to_string(&golden).unwrap();
        assert_eq!(got, want, "{name} differs from {}", golden.display());
    }
}

#[test]
fn plot_rejects_unknown_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let bogus = tmp.path().join("x.csv");
    std::fs::write(&bogus, "a,b,c\n1,2,3\n").unwrap();
    let o = ndp(tmp.path(), &["plot", bogus.to_str().unwrap()]);
    assert_eq!(o.code, 1, "{}", o.stderr);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    assert_eq!(ndp(out, &["--help"]).code, 0);
    assert_eq!(ndp(out, &["no-such-command"]).code, 1);
    assert_eq!(ndp(out, &["train-rl", "--override", "rl.env=maze"]).code, 1);
    assert_eq!(ndp(out, &["train-rl", "--override", "rl.nonsense=3"]).code, 1);
    assert_eq!(ndp(out, &["show-config", "--override", "rl.ppo.clip=-1"]).code, 1);
    let missing = out.join("absent.toml");
    assert_eq!(ndp(out, &["show-config", "--config", missing.to_str().unwrap()]).code, 1);

    let ok = ndp(out, &["grad-check", "--override", "grad_check.cases=5"]);
    assert_eq!(ok.code, 0, "{}", ok.stderr);
    assert!(ok.stdout.contains("PASS"));
    let bad = ndp(out, &["grad-check", "--override", "grad_check.cases=5", "--inject-fault"]);
    assert_eq!(bad.code, 2, "{}", bad.stderr);
    assert!(bad.stdout.contains("FAIL"));
}

#[test]
fn config_file_and_overrides_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    std::fs::write(&path, "seed = 9\n[rl]\nk = 7\n[rl.dmp]\nk_rollout = 7\nm_steps = 40\n").unwrap();
    let o = ndp(
        tmp.path(),
        &[
            "show-config",
            "--config",
            path.to_str().unwrap(),
            "--override",
            "rl.k=4",
            "--override",
            "rl.dmp.k_rollout=4",
            "--seed",
            "4",
        ],
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let c = RunConfig::from_toml(&o.stdout).unwrap();
    assert_eq!((c.seed, c.rl.k, c.rl.dmp.m_steps), (4, 4, 40));
    assert_eq!(c.out, tmp.path());
}

#[test]
fn dry_run_lists_every_ablation_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ndp(tmp.path(), &["ablate", "--dry-run"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let count = |prefix: &str| o.stdout.lines().filter(|l| l.trim_start().starts_with(prefix)).count();
    assert_eq!(count("basis-"), 5);
    assert_eq!(count("rollout-"), 5);
    assert_eq!(count("steps-"), 4);
    assert_eq!(count("kernel-"), 5);
    assert_eq!(count("learn-alpha"), 1);
    assert_eq!(count("only-g"), 1);
    assert!(o.stdout.contains("22 cells x 1 seeds"));
    assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0, "dry run must not write");
}

#[test]
fn imitation_smoke_writes_readable_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ndp(tmp.path(), &[&["train-imitation"], SMALL_IMITATION].concat());
    assert_eq!(o.code, 0, "{}", o.stderr);
    let dir = o.run_dir();
    let metrics = read_metrics(&std::fs::read_to_string(dir.join("metrics.jsonl")).unwrap()).unwrap();
    for name in ["ndp/train_loss", "ndp/heldout_loss", "direct/train_loss", "direct/heldout_loss"] {
        let n = metrics.iter().filter(|r| r.metric_name == name).count();
        // initial evaluation plus one per epoch
        assert_eq!(n, 6, "{name}");
    }
    assert!(metrics.iter().all(|r| r.value.is_finite()));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    let svg = std::fs::read_to_string(dir.join("strokes.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    let config = RunConfig::load(&dir.join("config.toml")).unwrap();
    assert_eq!(config.imitation.epochs, 5);
    let csv = std::fs::read_dir(dir.join("trajectories")).unwrap().next().unwrap().unwrap().path();
    let replot = ndp(tmp.path(), &["plot", csv.to_str().unwrap()]);
    assert_eq!(replot.code, 0, "{}", replot.stderr);
}

#[test]
fn rl_smoke_writes_curve_and_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ndp(tmp.path(), &[&["train-rl"], SMALL_RL].concat());
    assert_eq!(o.code, 0, "{}", o.stderr);
    let dir = o.run_dir();
    let metrics = read_metrics(&std::fs::read_to_string(dir.join("metrics.jsonl")).unwrap()).unwrap();
    let evals: Vec<u64> = metrics.iter().filter(|r| r.metric_name == "eval_success").map(|r| r.env_steps).collect();
    assert_eq!(evals, [2100, 4200]);
    assert!(metrics.iter().all(|r| r.wall_time == 0.0));
    for f in ["checkpoint.ndp", "trace.csv", "trace.svg", "curve.svg", "summary.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let replot = ndp(
        tmp.path(),
        &["plot", dir.join("trace.csv").to_str().unwrap(), dir.join("metrics.jsonl").to_str().unwrap()],
    );
    assert_eq!(replot.code, 0, "{}", replot.stderr);
}

fn metrics_of(out: &Path, args: &[&str]) -> String {
    let o = ndp(out, args);
    assert_eq!(o.code, 0, "{:?}: {}", args, o.stderr);
    let dir = o.run_dir();
    let single = dir.join("metrics.jsonl");
    if single.is_file() {
        return std::fs::read_to_string(single).unwrap();
    }
    let mut cells: Vec<PathBuf> = std::fs::read_dir(dir.join("cells")).unwrap().map(|e| e.unwrap().path()).collect();
    cells.sort();
    cells.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect()
}

#[test]
fn same_seed_same_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let ablate = [
        "ablate",
        "--override",
        "ablate.grids=[\"only_g\"]",
        "--override",
        "ablate.total_steps=2100",
        "--override",
        "rl.eval_episodes=2",
        "--override",
        "rl.ppo.epochs=1",
    ];
    let commands: Vec<Vec<&str>> = vec![
        vec!["grad-check", "--override", "grad_check.cases=5"],
        [&["train-imitation"], SMALL_IMITATION].concat(),
        [&["train-rl"], SMALL_RL].concat(),
        ablate.to_vec(),
    ];
    for cmd in commands {
        let a = metrics_of(out, &cmd);
        let b = metrics_of(out, &cmd);
        assert!(!a.is_empty(), "{cmd:?}");
        assert_eq!(a, b, "{cmd:?}");
        let other = metrics_of(out, &[cmd.as_slice(), &["--seed", "1"]].concat());
        if cmd[0] != "grad-check" {
            assert_ne!(a, other, "{cmd:?} ignores the seed");
        }
    }
}

fn grid() -> impl Strategy<Value = Grid> {
    prop_oneof![
        Just(Grid::Basis),
        Just(Grid::Rollout),
        Just(Grid::Steps),
        Just(Grid::Kernel),
        Just(Grid::LearnAlpha),
        Just(Grid::OnlyG)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_survives_a_toml_round_trip(
        seed in any::<u64>(),
        k in 1usize..20,
        lr in 1e-6f64..1e-1,
        n_basis in 1usize..40,
        hidden in proptest::collection::vec(1usize..256, 1..4),
        grids in proptest::collection::vec(grid(), 0..6),
        wall in any::<bool>(),
    ) {
        let mut c = RunConfig { seed, ..RunConfig::default() };
        c.rl.k = k;
        c.rl.ppo.lr = lr;
        c.rl.dmp.n_basis = n_basis;
        c.imitation.hidden = hidden;
        c.ablate.grids = grids;
        c.record_wall_time = wall;
        let text = c.to_toml().unwrap();
        prop_assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn overrides_agree_with_direct_assignment(k in 1usize..20, gamma in 0.0f64..1.0, env in prop_oneof![Just("reach"), Just("push"), Just("throw")]) {
        let c = RunConfig::default()
            .with_overrides(&[format!("rl.k={k}"), format!("rl.ppo.gamma={gamma:?}"), format!("rl.env={env}")])
            .unwrap();
        prop_assert_eq!(c.rl.k, k);
        prop_assert_eq!(c.rl.ppo.gamma, gamma);
        prop_assert_eq!(c.rl.env.as_str(), env);
    }
}
