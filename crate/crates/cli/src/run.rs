//! Subcommand pipelines. Each returns the files to write and a JSON summary.

use anyhow::{bail, Context};
use bridgesim::diagnostics::validate_pair;
use bridgesim::models::drift_guide_family;
use bridgesim::oracle::marginal_distance;
use bridgesim::table::{kl_scan_csv, paths_csv, theta_trace_csv, weights_csv, Histogram};
use bridgesim::tuner::Decay;
use bridgesim::*;
use serde_json::{json, Value};

use crate::config::{Config, GuideConfig};

pub struct Output {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
    /// False when the run finished but its checks did not pass.
    pub passed: bool,
}

impl Output {
    fn new(files: Vec<(&str, Vec<u8>)>, summary: Value) -> Self {
        Self {
            files: files.into_iter().map(|(n, b)| (n.to_string(), b)).collect(),
            summary,
            passed: true,
        }
    }
}

fn rng(cfg: &Config) -> RngSpec {
    RngSpec::from_seed(cfg.seed)
}

fn guided_bridge(cfg: &Config, grid: &TimeGrid) -> anyhow::Result<GuidedBridge> {
    Ok(GuidedBridge::from_guide(cfg.model.build()?, &cfg.guide()?, &cfg.spec()?, grid)?)
}

fn node_means(ens: &WeightedEnsemble, grid: &TimeGrid, times: &[f64]) -> Value {
    times
        .iter()
        .filter_map(|&t| grid.index_of(t).map(|k| (t, ens.weighted_mean(k, 0))))
        .map(|(t, (mean, se))| json!({"t": t, "mean": mean, "std_err": se}))
        .collect()
}

pub fn forward(cfg: &Config) -> anyhow::Result<Output> {
    let model = cfg.model.build()?;
    let grid = TimeGrid::uniform(cfg.bridge.horizon, cfg.grid.steps)?;
    let grid = if cfg.grid.nodes.is_empty() { grid } else { grid.with_nodes(&cfg.grid.nodes)? };
    let x0 = DVector::from_element(1, cfg.bridge.start);
    let r = rng(cfg);
    let paths = (0..cfg.run.paths as u64)
        .map(|i| euler_maruyama(&model, &x0, &grid, r.child(i)))
        .collect::<Result<Vec<_>>>()?;
    let ends: Vec<f64> = paths.iter().map(|p| p.terminal()[0]).collect();
    let n = ends.len() as f64;
    let mean = ends.iter().sum::<f64>() / n;
    let var = if ends.len() > 1 { ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(Output::new(
        vec![("paths.csv", paths_csv(&paths))],
        json!({"paths": paths.len(), "terminal_mean": mean, "terminal_variance": var}),
    ))
}

pub fn bridge(cfg: &Config) -> anyhow::Result<Output> {
    let grid = cfg.bridge_grid()?;
    let spec = cfg.spec()?;
    let r = rng(cfg);
    let n = cfg.run.paths as u64;
    let ens = match cfg.run.method.as_str() {
        "guided" => importance_ensemble(&guided_bridge(cfg, &grid)?, cfg.run.paths, r)?,
        "exact-linear" => {
            let linear = cfg.model.as_linear()?.context("method exact-linear needs a linear model (bm-drift or ou)")?;
            importance_ensemble(&exact_linear_bridge(&linear, &spec, &grid)?, cfg.run.paths, r)?
        }
        method => {
            let model = cfg.model.build()?;
            let sim = if method == "pulled" { simulate_delyon_hu_full } else { simulate_delyon_hu_nodrift };
            let paths = (0..n).map(|i| sim(&model, &spec, &grid, r.child(i))).collect::<Result<Vec<_>>>()?;
            WeightedEnsemble::uniform(paths)?
        }
    };
    let paths: Vec<&Path> = ens.samples.iter().map(|s| &s.path).collect();
    Ok(Output::new(
        vec![("paths.csv", paths_csv(paths)), ("weights.csv", weights_csv(&ens.log_weights))],
        json!({
            "method": cfg.run.method,
            "paths": ens.len(),
            "ess": ens.ess(),
            "marginal_means": node_means(&ens, &grid, &cfg.grid.nodes),
        }),
    ))
}

pub fn mh(cfg: &Config) -> anyhow::Result<Output> {
    let grid = cfg.bridge_grid()?;
    let chain = run_chain(&guided_bridge(cfg, &grid)?, cfg.run.iterations, rng(cfg), cfg.run.thin)?;
    let mut trace = b"iteration,log_psi\n".to_vec();
    for (i, l) in chain.log_psi_trace.iter().enumerate() {
        trace.extend(format!("{i},{l}\n").bytes());
    }
    let stored: Vec<&Path> = chain.paths.iter().map(|p| &p.path).collect();
    Ok(Output::new(
        vec![
            ("paths.csv", paths_csv(stored)),
            ("weights.csv", weights_csv(&vec![0.0; chain.paths.len()])),
            ("log_psi_trace.csv", trace),
        ],
        json!({
            "iterations": chain.iterations,
            "accepted": chain.accepted,
            "acceptance_rate": chain.acceptance_rate,
            "stored_paths": chain.paths.len(),
        }),
    ))
}

pub fn importance(cfg: &Config) -> anyhow::Result<Output> {
    let grid = cfg.bridge_grid()?;
    let ens = importance_ensemble(&guided_bridge(cfg, &grid)?, cfg.run.paths, rng(cfg))?;
    let paths: Vec<&Path> = ens.samples.iter().map(|s| &s.path).collect();
    Ok(Output::new(
        vec![("paths.csv", paths_csv(paths)), ("weights.csv", weights_csv(&ens.log_weights))],
        json!({
            "paths": ens.len(),
            "ess": ens.ess(),
            "ess_fraction": ens.ess() / ens.len() as f64,
            "marginal_means": node_means(&ens, &grid, &cfg.grid.nodes),
        }),
    ))
}

fn theta_problem(cfg: &Config) -> anyhow::Result<ThetaProblem> {
    let GuideConfig::Drift { scale, .. } = cfg.guide else {
        bail!("θ tuning and scans need guide.kind = \"drift\"");
    };
    Ok(ThetaProblem::new(cfg.model.build()?, drift_guide_family(scale), cfg.spec()?, cfg.bridge_grid()?))
}

pub fn tune_theta(cfg: &Config) -> anyhow::Result<Output> {
    let problem = theta_problem(cfg)?;
    let t = &cfg.tuner;
    let mut tc = TunerConfig::new(DVector::from_element(1, t.theta0));
    tc.n_outer = t.n_outer;
    tc.batch_size = t.batch_size;
    tc.inner_steps = t.inner_steps;
    tc.decay = Decay::Harmonic { alpha0: t.alpha0, gamma: t.gamma };
    let trace = run_tuner(&problem, &tc, rng(cfg))?;
    Ok(Output::new(
        vec![("theta_trace.csv", theta_trace_csv(&trace.thetas))],
        json!({
            "final_theta": trace.thetas.last().map(|v| v[0]),
            "tail_mean": trace.tail_mean(0, t.tail_fraction),
            "tail_fraction": t.tail_fraction,
            "clamped_steps": trace.clamped_steps,
            "log_p_hat": trace.log_p_hat,
        }),
    ))
}

pub fn kl(cfg: &Config) -> anyhow::Result<Output> {
    let problem = theta_problem(cfg)?;
    let s = &cfg.scan;
    let step = (s.theta_max - s.theta_min) / (s.points - 1) as f64;
    let thetas: Vec<DVector<f64>> = (0..s.points)
        .map(|i| DVector::from_element(1, s.theta_min + step * i as f64))
        .collect();
    let scan = kl_scan(&problem, &thetas, s.paths, &DVector::from_element(1, s.theta_ref), rng(cfg))?;
    let best = scan.argmin();
    Ok(Output::new(
        vec![("kl_scan.csv", kl_scan_csv(&scan))],
        json!({
            "argmin_theta": best.theta,
            "min_kl": best.kl,
            "log_p_hat": scan.log_p_hat,
            "reference_ess": scan.reference_ess,
            "warning": scan.warning,
        }),
    ))
}

pub fn sine_figure(cfg: &Config) -> anyhow::Result<Output> {
    let f = &cfg.figure;
    let model = cfg.model.build()?;
    let spec = cfg.spec()?;
    let grid = cfg.bridge_grid()?.with_nodes(&[f.time])?;
    let k = grid.index_of(f.time).expect("node inserted");
    let r = rng(cfg);
    let scale = match cfg.guide {
        GuideConfig::Drift { scale, .. } => scale,
        _ => cfg.model.sigma(),
    };

    let oracle = rejection_bridge_sample(&model, &spec, &grid, f.epsilon, f.oracle_paths, f.max_forward, r.child(0))?;
    let oracle_ens = WeightedEnsemble::uniform(oracle.paths)?;
    let guided = |theta: f64, stream: u64| -> anyhow::Result<WeightedEnsemble> {
        let guide = LinearGuide::scalar_brownian(scale, theta)?;
        let bridge = GuidedBridge::from_guide(model.clone(), &guide, &spec, &grid)?;
        Ok(importance_ensemble(&bridge, f.paths, r.child(stream))?)
    };
    let pulled = |stream: u64, full: bool| -> anyhow::Result<WeightedEnsemble> {
        let sim = if full { simulate_delyon_hu_full } else { simulate_delyon_hu_nodrift };
        let rs = r.child(stream);
        let paths = (0..f.paths as u64).map(|i| sim(&model, &spec, &grid, rs.child(i))).collect::<Result<Vec<_>>>()?;
        Ok(WeightedEnsemble::uniform(paths)?)
    };
    let tuned = guided(f.tuned_theta, 1)?;
    // Proposal panels show raw proposal samples; the tuned panel is reweighted.
    let raw = |e: WeightedEnsemble| -> anyhow::Result<WeightedEnsemble> {
        Ok(WeightedEnsemble::uniform(e.samples.into_iter().map(|s| s.path).collect())?)
    };
    let panels = [
        ("oracle", oracle_ens),
        ("pulled", pulled(2, true)?),
        ("pulled_nodrift", pulled(3, false)?),
        ("guided_theta0", raw(guided(0.0, 4)?)?),
        ("guided_tuned", tuned),
    ];

    let mut files = Vec::new();
    let mut distances = serde_json::Map::new();
    for (name, ens) in &panels {
        let (xs, ws) = ens.marginal(k, 0);
        files.push((format!("hist_{name}.csv"), Histogram::new(&xs, &ws, f.lo, f.hi, f.bins)?.to_csv()));
        files.push((format!("paths_{name}.csv"), paths_csv(ens.samples.iter().take(20).map(|s| &s.path))));
        if *name != "oracle" {
            let oracle_paths: Vec<Path> = panels[0].1.samples.iter().map(|s| s.path.clone()).collect();
            distances.insert(name.to_string(), json!(marginal_distance(ens, &oracle_paths, f.time)?));
        }
    }
    Ok(Output {
        files,
        summary: json!({
            "time": f.time,
            "oracle_acceptance_fraction": oracle.acceptance_fraction,
            "oracle_attempts": oracle.attempts,
            "tuned_ess": panels[4].1.ess(),
            "wasserstein_to_oracle": distances,
        }),
        passed: true,
    })
}

pub fn validate(cfg: &Config) -> anyhow::Result<Output> {
    let grid = cfg.bridge_grid()?;
    let bridge = guided_bridge(cfg, &grid)?;
    let spec = cfg.spec()?;
    let log_p = match cfg.model.as_linear()? {
        Some(linear) => Some(guide_log_density(&linear, &spec, 0.0, &spec.start)?),
        None => None,
    };
    let report = validate_pair(&bridge, log_p, cfg.run.paths, rng(cfg))?;
    let mut table = b"check,value,threshold,passed\n".to_vec();
    for c in &report.checks {
        table.extend(format!("\"{}\",{},{},{}\n", c.name, c.value, c.threshold, c.passed).bytes());
        println!("{} {}: {:.3e} (threshold {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    let mut out = Output::new(vec![("report.csv", table)], json!({"all_passed": report.all_passed(), "checks": report.checks.len()}));
    out.passed = report.all_passed();
    Ok(out)
}
