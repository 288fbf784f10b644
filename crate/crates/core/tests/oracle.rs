mod common;

use bridgesim::models::{brownian_with_drift, ornstein_uhlenbeck, ornstein_uhlenbeck_guide, SineExample};
use bridgesim::oracle::{marginal_distance, DensityOptions};
use bridgesim::*;
use common::{assert_moments, marginal};

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn brownian_oracle(seed: u64, n: usize) -> Vec<Path> {
    let spec = BridgeSpec::scalar(0.0, 0.0, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 50).unwrap();
    rejection_bridge_sample(&brownian_with_drift(0.0, 1.0), &spec, &grid, 0.05, n, 2_000_000, RngSpec::from_seed(seed))
        .unwrap()
        .paths
}

#[test]
fn rejection_brownian_bridge_marginal() {
    let paths = brownian_oracle(1, 4000);
    assert_moments(&marginal(&paths, 25), 0.0, 0.25);
}

#[test]
fn wide_tolerance_accepts_everything() {
    let spec = BridgeSpec::scalar(0.0, 0.0, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 20).unwrap();
    let out = rejection_bridge_sample(&brownian_with_drift(0.0, 1.0), &spec, &grid, 10.0, 1000, 1000, RngSpec::from_seed(2)).unwrap();
    assert_eq!(out.acceptance_fraction, 1.0);
    assert_eq!(out.attempts, 1000);
}

#[test]
fn infeasible_and_oversized_problems_rejected() {
    let spec = BridgeSpec::scalar(0.0, 50.0, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 10).unwrap();
    let err = rejection_bridge_sample(&brownian_with_drift(0.0, 1.0), &spec, &grid, 0.01, 10, 100, RngSpec::from_seed(3)).unwrap_err();
    assert!(matches!(err, BridgeError::OracleInfeasible { attempts: 100, .. }));
    let guide = LinearGuide::constant(DMatrix::zeros(3, 3), DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
    let spec3 = BridgeSpec::new(DVector::zeros(3), DVector::zeros(3), 1.0).unwrap();
    assert!(rejection_bridge_sample(&guide.as_model(), &spec3, &grid, 0.1, 1, 10, RngSpec::from_seed(3)).is_err());
}

/// Two modes separated by a valley whose count is significantly (Poisson,
/// 3 SD) below the lower of the two peaks.
fn significantly_bimodal(xs: &[f64], lo: f64, hi: f64, bins: usize) -> bool {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for x in xs {
        let j = ((x - lo) / width).floor();
        if j >= 0.0 && (j as usize) < bins {
            counts[j as usize] += 1.0;
        }
    }
    (0..bins).any(|i| {
        (i + 1..bins).any(|j| {
            let valley = counts[i + 1..j].iter().copied().fold(f64::INFINITY, f64::min);
            let peak = counts[i].min(counts[j]);
            j > i + 1 && peak - valley > 3.0 * (peak + valley).sqrt()
        })
    })
}

#[test]
fn sine_bridge_marginal_is_multimodal() {
    let ex = SineExample::default();
    let grid = make_bridge_grid(1.0, 400).unwrap().with_nodes(&[2.0 / 3.0]).unwrap();
    let out = rejection_bridge_sample(&ex.model(), &ex.spec(), &grid, 0.02, 3000, 4_000_000, RngSpec::from_seed(4)).unwrap();
    let xs = marginal(&out.paths, grid.index_of(2.0 / 3.0).unwrap());
    assert!(significantly_bimodal(&xs, 0.5, 2.2, 34));
}

#[test]
fn brownian_density_estimate() {
    let est = transition_density_estimate(
        &brownian_with_drift(0.0, 1.0),
        0.0,
        &v1(0.0),
        1.0,
        1_000_000,
        0.05,
        RngSpec::from_seed(5),
        DensityOptions { steps: 10 },
    )
    .unwrap();
    assert!((est.integral() - 1.0).abs() < 1e-2);
    let sup = est.centers(0).iter().map(|&c| (est.value_at(&[c]) - normal_pdf(c, 0.0, 1.0)).abs()).fold(0.0, f64::max);
    assert!(sup < 0.02, "sup-norm {sup}");
    assert!(est.warnings.is_empty());
}

#[test]
fn ou_density_estimate() {
    let est = transition_density_estimate(
        &ornstein_uhlenbeck(1.0, 0.0, 1.0).unwrap(),
        0.5,
        &v1(1.0),
        1.5,
        1_000_000,
        0.05,
        RngSpec::from_seed(6),
        DensityOptions { steps: 50 },
    )
    .unwrap();
    let (m, var) = ((-1.0f64).exp(), (1.0 - (-2.0f64).exp()) / 2.0);
    assert!((est.integral() - 1.0).abs() < 1e-2);
    let sup = est.centers(0).iter().map(|&c| (est.value_at(&[c]) - normal_pdf(c, m, var)).abs()).fold(0.0, f64::max);
    assert!(sup < 0.02, "sup-norm {sup}");
}

#[test]
fn degenerate_density_is_a_point_mass() {
    let est = transition_density_estimate(
        &brownian_with_drift(1.0, 0.0),
        0.0,
        &v1(0.0),
        1.0,
        100,
        0.05,
        RngSpec::from_seed(7),
        DensityOptions::default(),
    )
    .unwrap();
    let at = est.point_mass.expect("point mass");
    assert!((at[0] - 1.0).abs() < 1e-12);
    assert!(est.values.is_empty());
    assert!(!est.warnings.is_empty());
}

#[test]
fn small_samples_warn() {
    let est = transition_density_estimate(
        &brownian_with_drift(0.0, 1.0),
        0.0,
        &v1(0.0),
        1.0,
        500,
        0.05,
        RngSpec::from_seed(8),
        DensityOptions::default(),
    )
    .unwrap();
    assert!(!est.warnings.is_empty());
}

#[test]
fn two_dimensional_density_integrates_to_one() {
    let guide = LinearGuide::constant(DMatrix::zeros(2, 2), DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
    let est = transition_density_estimate(&guide.as_model(), 0.0, &DVector::zeros(2), 1.0, 20_000, 0.25, RngSpec::from_seed(9), DensityOptions { steps: 5 }).unwrap();
    assert!((est.integral() - 1.0).abs() < 1e-9);
    assert!((est.value_at(&[0.1, 0.1]) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 0.02);
}

#[test]
fn oracle_self_distance_and_linear_agreement() {
    let first = brownian_oracle(10, 10_000);
    let second = brownian_oracle(11, 10_000);
    let baseline = marginal_distance(&WeightedEnsemble::uniform(second).unwrap(), &first, 0.5).unwrap();
    assert!(baseline <= 0.02, "self-distance {baseline}");
    assert_eq!(marginal_distance(&WeightedEnsemble::uniform(first.clone()).unwrap(), &first, 0.5).unwrap(), 0.0);

    let guide = ornstein_uhlenbeck_guide(0.0, 0.0, 1.0).unwrap();
    let spec = BridgeSpec::scalar(0.0, 0.0, 1.0).unwrap();
    let bridge = exact_linear_bridge(&guide, &spec, &TimeGrid::uniform(1.0, 50).unwrap()).unwrap();
    let exact = importance_ensemble(&bridge, 10_000, RngSpec::from_seed(12)).unwrap();
    let d = marginal_distance(&exact, &first, 0.5).unwrap();
    assert!(d <= 2.0 * baseline, "exact bridge distance {d}, baseline {baseline}");
}
