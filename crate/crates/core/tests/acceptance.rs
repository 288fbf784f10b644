//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the last one reruns every pipeline and compares the CSV bytes.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use bridgesim::diagnostics::{
    backward_residual_check, composition_check, curvature_check, liouville_check, score_consistency_check, Check,
};
use bridgesim::models::{brownian_with_drift, drift_guide_family, ornstein_uhlenbeck_guide, SineExample};
use bridgesim::oracle::marginal_distance;
use bridgesim::table::{kl_scan_csv, paths_csv, theta_trace_csv, weights_csv, Histogram};
use bridgesim::*;

const SEED: u64 = 20_140_205;

struct Outcome {
    passed: bool,
    detail: String,
    tables: Vec<Vec<u8>>,
}

fn report(line: &str) {
    // Bypass the test harness capture so the lines land in the log.
    let mut err = std::io::stderr();
    writeln!(err, "{line}").unwrap();
}

fn within_3se(estimate: f64, target: f64, se: f64) -> bool {
    (estimate - target).abs() <= 3.0 * se
}

fn ensemble_weights(ens: &WeightedEnsemble) -> Vec<u8> {
    weights_csv(&ens.log_weights)
}

fn check_table(checks: &[Check]) -> Vec<u8> {
    let mut out = b"check,value,threshold,passed\n".to_vec();
    for c in checks {
        out.extend(format!("{},{},{},{}\n", c.name, c.value, c.threshold, c.passed).bytes());
    }
    out
}

fn exact_guide_nullity(seed: u64) -> Outcome {
    let guide = ornstein_uhlenbeck_guide(1.0, 0.0, 1.0).unwrap();
    let spec = BridgeSpec::scalar(1.0, 0.0, 1.0).unwrap();
    let grid = make_bridge_grid(1.0, 400).unwrap();
    let bridge = GuidedBridge::from_guide(guide.as_model(), &guide, &spec, &grid).unwrap();
    let ens = importance_ensemble(&bridge, 1000, RngSpec::from_seed(seed)).unwrap();
    let nonzero = ens.samples.iter().filter(|s| s.log_psi.to_bits() != 0.0f64.to_bits()).count();
    Outcome {
        passed: nonzero == 0,
        detail: format!("{nonzero} of 1000 paths with log ψ ≠ 0"),
        tables: vec![paths_csv(ens.samples.iter().take(10).map(|s| &s.path)), ensemble_weights(&ens)],
    }
}

fn weight_mean_identity(seed: u64) -> Outcome {
    let target = ornstein_uhlenbeck_guide(1.0, 0.0, 1.0).unwrap();
    let guide = LinearGuide::scalar_brownian(1.0, 0.0).unwrap();
    let spec = BridgeSpec::scalar(1.0, 0.0, 1.0).unwrap();
    let grid = make_bridge_grid(1.0, 400).unwrap();
    let log_p = guide_log_density(&target, &spec, 0.0, &spec.start).unwrap();
    let bridge = GuidedBridge::from_guide(target.as_model(), &guide, &spec, &grid).unwrap();
    let ens = importance_ensemble(&bridge, 10_000, RngSpec::from_seed(seed)).unwrap();
    let ratios: Vec<f64> = ens.samples.iter().map(|s| (s.log_weight() - log_p).exp()).collect();
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let se = (ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    Outcome {
        passed: within_3se(mean, 1.0, se),
        detail: format!("mean p̄ψ = {mean:.5} ± {se:.5} (3 SE band around 1)"),
        tables: vec![ensemble_weights(&ens)],
    }
}

fn drift_degeneracy(seed: u64) -> Outcome {
    let (beta1, sigma) = (2.0, 0.5);
    let spec = BridgeSpec::scalar(0.0, PI / 2.0, 1.0).unwrap();
    let grid = make_bridge_grid(1.0, 400).unwrap().with_nodes(&[0.5]).unwrap();
    let guide = LinearGuide::scalar_brownian(sigma, beta1).unwrap();
    let bridge = GuidedBridge::from_guide(brownian_with_drift(beta1, sigma), &guide, &spec, &grid).unwrap();
    let ens = importance_ensemble(&bridge, 10_000, RngSpec::from_seed(seed)).unwrap();
    let n = ens.len() as f64;
    let ess = ens.ess();
    let k = grid.index_of(0.5).unwrap();
    let (mean, se) = ens.weighted_mean(k, 0);
    let (xs, _) = ens.marginal(k, 0);
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let target_var = sigma * sigma / 4.0;
    let var_se = target_var * (2.0 / (n - 1.0)).sqrt();
    let passed = ess == n && within_3se(mean, PI / 4.0, se) && within_3se(var, target_var, var_se);
    Outcome {
        passed,
        detail: format!("ESS = {ess} of {n}; X(1/2) mean {mean:.4} (target {:.4}), var {var:.5} (target {target_var})", PI / 4.0),
        tables: vec![ensemble_weights(&ens)],
    }
}

fn linear_guide_numerics(seed: u64) -> Outcome {
    let guide = LinearGuide::constant(
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.3, -0.4]),
        DVector::from_vec(vec![0.2, -0.1]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.4, 0.7]),
    )
    .unwrap();
    let spec = BridgeSpec::new(DVector::from_vec(vec![0.5, -0.5]), DVector::from_vec(vec![1.0, 0.3]), 1.0).unwrap();
    let grid = make_bridge_grid(1.0, 400).unwrap();
    let cache = build_guide_cache(&guide, &spec, &grid).unwrap();
    let rng = RngSpec::from_seed(seed);
    let checks = vec![
        composition_check(&guide, 1.0, 100, rng.child(0)).unwrap(),
        liouville_check(&guide, 1.0, 100, rng.child(1)).unwrap(),
        score_consistency_check(&cache, 100, rng.child(2)).unwrap(),
        curvature_check(&cache, 100, rng.child(3)).unwrap(),
        backward_residual_check(&guide, &spec, 100, rng.child(4)).unwrap(),
    ];
    let detail = checks
        .iter()
        .map(|c| format!("{} {:.2e}/{:.0e}", c.name, c.value, c.threshold))
        .collect::<Vec<_>>()
        .join("; ");
    Outcome {
        passed: checks.iter().all(|c| c.passed),
        detail,
        tables: vec![check_table(&checks)],
    }
}

fn sine_problem(grid: &TimeGrid) -> ThetaProblem {
    let ex = SineExample::default();
    ThetaProblem::new(ex.model(), ex.family(), ex.spec(), grid.clone())
}

fn sine_kl_scan(seed: u64) -> Outcome {
    let grid = make_bridge_grid(1.0, 400).unwrap();
    let problem = sine_problem(&grid);
    let thetas: Vec<DVector<f64>> = (0..26).map(|i| DVector::from_element(1, -1.0 + 0.2 * i as f64)).collect();
    let scan = kl_scan(&problem, &thetas, 10_000, &DVector::from_element(1, 1.5), RngSpec::from_seed(seed)).unwrap();
    let best = scan.argmin();
    let kl: Vec<f64> = scan.points.iter().map(|p| p.kl).collect();
    let i_min = kl.iter().position(|&k| k == best.kl).unwrap();
    let u_shaped = kl[0] > best.kl && kl[kl.len() - 1] > best.kl
        && kl[..i_min].windows(2).filter(|w| w[1] > w[0]).count() <= 1
        && kl[i_min..].windows(2).filter(|w| w[1] < w[0]).count() <= 1;
    Outcome {
        passed: u_shaped && (1.0..=1.8).contains(&best.theta) && scan.warning.is_none(),
        detail: format!(
            "argmin θ = {:.1}, KL = {:.4} ± {:.4}; KL(-1) = {:.3}, KL(4) = {:.3}; reference ESS {:.0}",
            best.theta, best.kl, best.std_err, kl[0], kl[25], scan.reference_ess
        ),
        tables: vec![kl_scan_csv(&scan)],
    }
}

fn tuner(seed: u64) -> Outcome {
    let grid = make_bridge_grid(1.0, 400).unwrap();
    let mut cfg = TunerConfig::new(DVector::zeros(1));
    cfg.n_outer = 2000;

    let bm = ThetaProblem::new(
        brownian_with_drift(2.0, 0.5),
        drift_guide_family(0.5),
        BridgeSpec::scalar(0.0, PI / 2.0, 1.0).unwrap(),
        grid.clone(),
    );
    let bm_trace = run_tuner(&bm, &cfg, RngSpec::from_seed(seed)).unwrap();
    let bm_tail = bm_trace.tail_mean(0, 0.25);

    let sine_trace = run_tuner(&sine_problem(&grid), &cfg, RngSpec::from_seed(seed).child(1)).unwrap();
    let sine_tail = sine_trace.tail_mean(0, 0.25);
    Outcome {
        passed: (bm_tail - 2.0).abs() <= 0.1 && (1.0..=1.8).contains(&sine_tail),
        detail: format!(
            "BM-drift tail mean {bm_tail:.3} (target 2 ± 0.1), sine tail mean {sine_tail:.3} (target [1.0, 1.8]); clamped steps {}/{}",
            bm_trace.clamped_steps, sine_trace.clamped_steps
        ),
        tables: vec![theta_trace_csv(&bm_trace.thetas), theta_trace_csv(&sine_trace.thetas)],
    }
}

fn oracle_agreement(seed: u64) -> Outcome {
    let ex = SineExample::default();
    let model = ex.model();
    let spec = ex.spec();
    let grid = make_bridge_grid(1.0, 400).unwrap().with_nodes(&[0.5]).unwrap();
    let rng = RngSpec::from_seed(seed);
    let oracle = |r: RngSpec| rejection_bridge_sample(&model, &spec, &grid, 0.02, 2000, 4_000_000, r).unwrap();
    let first = oracle(rng.child(0));
    let second = oracle(rng.child(1));
    let baseline = marginal_distance(&WeightedEnsemble::uniform(second.paths.clone()).unwrap(), &first.paths, 0.5).unwrap();

    let tuned = GuidedBridge::from_guide(model.clone(), &ex.guide(SineExample::TUNED_THETA), &spec, &grid).unwrap();
    let tuned_ens = importance_ensemble(&tuned, 10_000, rng.child(2)).unwrap();
    let d_tuned = marginal_distance(&tuned_ens, &first.paths, 0.5).unwrap();

    let plain = GuidedBridge::from_guide(model.clone(), &ex.guide(0.0), &spec, &grid).unwrap();
    let plain_paths: Vec<Path> = importance_ensemble(&plain, 10_000, rng.child(3))
        .unwrap()
        .samples
        .into_iter()
        .map(|s| s.path)
        .collect();
    let d_plain = marginal_distance(&WeightedEnsemble::uniform(plain_paths).unwrap(), &first.paths, 0.5).unwrap();

    let full_paths: Vec<Path> = (0..10_000u64)
        .map(|i| simulate_delyon_hu_full(&model, &spec, &grid, rng.child(4).child(i)).unwrap())
        .collect();
    let d_full = marginal_distance(&WeightedEnsemble::uniform(full_paths).unwrap(), &first.paths, 0.5).unwrap();

    let k = grid.index_of(0.5).unwrap();
    let (xs, ws) = tuned_ens.marginal(k, 0);
    let hist = Histogram::new(&xs, &ws, 0.0, 2.0, 40).unwrap();
    Outcome {
        passed: d_tuned <= 2.0 * baseline && d_plain > d_tuned && d_full > d_tuned,
        detail: format!(
            "W1 at t=1/2: θ=1.36 {d_tuned:.4}, θ=0 {d_plain:.4}, pulled {d_full:.4}; oracle self-distance {baseline:.4} (oracle acceptance {:.4})",
            first.acceptance_fraction
        ),
        tables: vec![hist.to_csv(), paths_csv(first.paths.iter().take(20))],
    }
}

fn singularity_diagnostic(seed: u64) -> Outcome {
    let model = brownian_with_drift(0.0, 1.0);
    let spec = BridgeSpec::scalar(0.0, 0.0, 1.0).unwrap();
    let rng = RngSpec::from_seed(seed);
    let mut table = b"sigma_tilde,steps,ess_fraction\n".to_vec();
    let mut fractions = |scale: f64, stream: u64| -> Vec<f64> {
        [100, 200, 400, 800]
            .iter()
            .map(|&n| {
                let grid = make_bridge_grid(1.0, n).unwrap();
                let guide = LinearGuide::scalar_brownian(scale, 0.0).unwrap();
                let bridge = GuidedBridge::from_guide(model.clone(), &guide, &spec, &grid).unwrap();
                let ens = importance_ensemble(&bridge, 10_000, rng.child(stream).child(n as u64)).unwrap();
                let f = ens.ess() / ens.len() as f64;
                table.extend(format!("{scale},{n},{f}\n").bytes());
                f
            })
            .collect()
    };
    let mismatched = fractions(2f64.sqrt(), 0);
    let matched = fractions(1.0, 1);
    let decreasing = mismatched.windows(2).all(|w| w[1] < w[0]);
    let spread = matched.iter().copied().fold(f64::NEG_INFINITY, f64::max) / matched.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    Outcome {
        passed: decreasing && spread < 0.1,
        detail: format!("ESS/n with σ̃=√2: {mismatched:.3?}; with σ̃=1: {matched:.3?}"),
        tables: vec![table],
    }
}

type Pipeline = fn(u64) -> Outcome;

#[test]
fn acceptance_criteria() {
    let criteria: [(u32, &str, Pipeline, Duration); 8] = [
        (1, "exact-guide nullity", exact_guide_nullity, Duration::from_secs(5)),
        (2, "weight-mean identity", weight_mean_identity, Duration::from_secs(30)),
        (3, "BM-with-drift degeneracy", drift_degeneracy, Duration::from_secs(60)),
        (4, "linear-guide numerics", linear_guide_numerics, Duration::from_secs(10)),
        (5, "sine KL scan", sine_kl_scan, Duration::from_secs(600)),
        (6, "θ tuner", tuner, Duration::from_secs(600)),
        (7, "oracle agreement", oracle_agreement, Duration::from_secs(900)),
        (8, "variance-mismatch singularity", singularity_diagnostic, Duration::from_secs(120)),
    ];
    let mut failures = Vec::new();
    let mut first_tables = Vec::new();
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let out = run(SEED + id as u64);
        let elapsed = start.elapsed();
        let passed = out.passed && elapsed <= budget;
        report(&format!(
            "criterion {id} ({name}): {} [{:.1}s, budget {}s] {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            out.detail
        ));
        if !passed {
            failures.push(id);
        }
        first_tables.push(out.tables);
    }

    let mut mismatched = Vec::new();
    for ((id, _, run, _), tables) in criteria.iter().zip(&first_tables) {
        if run(SEED + *id as u64).tables != *tables {
            mismatched.push(*id);
        }
    }
    let passed = mismatched.is_empty();
    report(&format!(
        "criterion 9 (reproducibility): {} {}",
        if passed { "PASS" } else { "FAIL" },
        if passed { "all result CSVs byte-identical on rerun".to_string() } else { format!("differing CSVs for criteria {mismatched:?}") }
    ));
    if !passed {
        failures.push(9);
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
