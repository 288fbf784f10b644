use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const OU: &str = r#"
seed = 3
[model]
kind = "ou"
rate = 1.0
sigma = 1.0
[bridge]
start = 1.0
end = 0.0
horizon = 1.0
[grid]
steps = 50
nodes = [0.5]
[guide]
kind = "exact"
[run]
paths = 20
iterations = 300
thin = 10
"#;

const SINE: &str = r#"
seed = 5
[model]
kind = "sine-drift"
beta1 = 2.0
beta2 = 2.0
sigma = 0.5
[grid]
steps = 400
[tuner]
n_outer = 1000
[scan]
points = 6
paths = 300
[figure]
paths = 300
oracle_paths = 50
"#;

fn bridgesim(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bridgesim"));
    cmd.args(args).env_remove("BRIDGESIM_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_with(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{sub}.toml"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("{sub}-out-{}", fs::read_dir(dir).unwrap().count()));
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    (bridgesim(&args, &[]), out)
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv") || p.file_name().unwrap() == "summary.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn forward_writes_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_with(dir.path(), "forward", OU, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(path.join("paths.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path_id,t,x_1"));
    assert_eq!(lines.count(), 20 * 51);
    let manifest = json(path.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "forward");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["status"], "ok");
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["version"].as_str().unwrap().starts_with(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_subcommand_exits_with_usage() {
    let out = bridgesim(&["teleport", "--config", "x", "--out", "y"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn invalid_config_lists_every_field() {
    let dir = tempfile::tempdir().unwrap();
    let bad = "[model]\nkind = \"ou\"\nsigma = 0\n[grid]\nsteps = 1\n[run]\nmethod = \"teleport\"\npaths = -3\n";
    let (out, _) = run_with(dir.path(), "is", bad, &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for field in ["model.sigma", "model.rate", "grid.steps", "run.method", "run.paths"] {
        assert!(err.contains(field), "{field} not reported in:\n{err}");
    }
}

#[test]
fn validate_exact_pair_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_with(dir.path(), "validate", OU, &[]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 9);
    assert_eq!(json(path.join("summary.json"))["all_passed"], true);
}

#[test]
fn exact_guide_chain_accepts_everything() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_with(dir.path(), "mh", OU, &[]);
    assert!(out.status.success());
    let summary = json(path.join("summary.json"));
    assert_eq!(summary["acceptance_rate"], 1.0);
    assert_eq!(summary["stored_paths"], 30);
}

#[test]
fn runs_are_reproducible_from_seed_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (a, pa) = run_with(dir.path(), "is", SINE, &["--seed", "11"]);
    let (b, pb) = run_with(dir.path(), "is", SINE, &["--seed", "11"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(csv_files(&pa), csv_files(&pb));
    let (_, pc) = run_with(dir.path(), "is", SINE, &["--seed", "12"]);
    assert_ne!(csv_files(&pa), csv_files(&pc));

    let echoed = json(pa.join("manifest.json"))["config_toml"].as_str().unwrap().to_string();
    assert!(echoed.contains("seed = 11"));
    let (c, pd) = run_with(dir.path(), "is", &echoed, &[]);
    assert!(c.status.success());
    assert_eq!(csv_files(&pa), csv_files(&pd));
}

#[test]
fn thread_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, OU).unwrap();
    let out = dir.path().join("o");
    let args = ["bridge", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "3"];
    assert!(bridgesim(&args, &[("BRIDGESIM_THREADS", "2")]).status.success());
    assert_eq!(json(out.join("manifest.json"))["threads"], 2);
}

#[test]
fn bridge_methods_write_weights() {
    let dir = tempfile::tempdir().unwrap();
    for method in ["guided", "pulled", "pulled-nodrift", "exact-linear"] {
        let cfg = format!("{OU}\n").replace("paths = 20", &format!("paths = 20\nmethod = \"{method}\""));
        let (out, path) = run_with(dir.path(), "bridge", &cfg, &[]);
        assert!(out.status.success(), "{method}: {}", String::from_utf8_lossy(&out.stderr));
        let weights = fs::read_to_string(path.join("weights.csv")).unwrap();
        assert_eq!(weights.lines().count(), 21);
        assert_eq!(json(path.join("summary.json"))["ess"], 20.0);
    }
}

#[test]
fn runtime_errors_land_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SINE.replace("[tuner]", "[run]\nmethod = \"exact-linear\"\n[tuner]");
    let (out, path) = run_with(dir.path(), "bridge", &cfg, &[]);
    assert_eq!(out.status.code(), Some(1));
    let manifest = json(path.join("manifest.json"));
    assert_eq!(manifest["status"], "error");
    assert!(manifest["error"].as_str().unwrap().contains("linear model"));
}

#[test]
fn tuner_with_default_schedule_settles() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_with(dir.path(), "tune-theta", SINE, &[]);
    assert!(out.status.success());
    let tail = json(path.join("summary.json"))["tail_mean"].as_f64().unwrap();
    assert!((1.0..=1.8).contains(&tail), "tail mean {tail}");
    let trace = fs::read_to_string(path.join("theta_trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some("iteration,theta_1"));
    assert_eq!(trace.lines().count(), 1002);
}

#[test]
fn kl_scan_and_figure_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (out, path) = run_with(dir.path(), "kl-scan", SINE, &[]);
    assert!(out.status.success());
    let scan = fs::read_to_string(path.join("kl_scan.csv")).unwrap();
    assert_eq!(scan.lines().next(), Some("theta,kl_estimate,std_err,ess"));
    assert_eq!(scan.lines().count(), 7);

    let (out, path) = run_with(dir.path(), "sine-figure", SINE, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for panel in ["oracle", "pulled", "pulled_nodrift", "guided_theta0", "guided_tuned"] {
        let hist = fs::read_to_string(path.join(format!("hist_{panel}.csv"))).unwrap();
        assert_eq!(hist.lines().next(), Some("bin_left,bin_right,density"));
        assert_eq!(hist.lines().count(), 41);
    }
}
