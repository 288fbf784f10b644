use bridgesim::models::{ornstein_uhlenbeck_guide, SineExample};
use bridgesim::samplers::acceptance_probability;
use bridgesim::*;

fn ou_exact() -> GuidedBridge {
    let guide = ornstein_uhlenbeck_guide(1.0, 0.0, 1.0).unwrap();
    let spec = BridgeSpec::scalar(1.0, 0.0, 1.0).unwrap();
    exact_linear_bridge(&guide, &spec, &make_bridge_grid(1.0, 100).unwrap()).unwrap()
}

fn sine_bridge(theta: f64) -> GuidedBridge {
    let ex = SineExample::default();
    GuidedBridge::from_guide(ex.model(), &ex.guide(theta), &ex.spec(), &make_bridge_grid(1.0, 400).unwrap()).unwrap()
}

#[test]
fn equal_weights_accept_surely() {
    assert_eq!(acceptance_probability(-3.2, -3.2), 1.0);
    assert_eq!(acceptance_probability(0.0, 5.0), 1.0);
    assert!((acceptance_probability(0.0, -2.0) - (-2.0f64).exp()).abs() < 1e-15);
}

#[test]
fn exact_guide_chain_accepts_everything() {
    let summary = run_chain(&ou_exact(), 500, RngSpec::from_seed(1), 10).unwrap();
    assert_eq!(summary.acceptance_rate, 1.0);
    assert_eq!(summary.accepted, 500);
    assert_eq!(summary.paths.len(), 50);
}

#[test]
fn single_iteration_chain() {
    let summary = run_chain(&ou_exact(), 1, RngSpec::from_seed(1), 1).unwrap();
    assert_eq!(summary.paths.len(), 1);
    assert!(run_chain(&ou_exact(), 0, RngSpec::from_seed(1), 1).is_err());
}

#[test]
fn chains_are_reproducible() {
    let bridge = sine_bridge(0.5);
    let a = run_chain(&bridge, 200, RngSpec::new(4, 2), 20).unwrap();
    let b = run_chain(&bridge, 200, RngSpec::new(4, 2), 20).unwrap();
    assert_eq!(a.log_psi_trace, b.log_psi_trace);
    assert_eq!(a.accepted, b.accepted);
    assert_eq!(a.paths, b.paths);
}

#[test]
fn tuned_guide_accepts_more_often() {
    let tuned = run_chain(&sine_bridge(SineExample::TUNED_THETA), 10_000, RngSpec::from_seed(5), 1000).unwrap();
    let plain = run_chain(&sine_bridge(0.0), 10_000, RngSpec::from_seed(5), 1000).unwrap();
    assert!(
        tuned.acceptance_rate > plain.acceptance_rate,
        "θ=1.36: {}, θ=0: {}",
        tuned.acceptance_rate,
        plain.acceptance_rate
    );
}

#[test]
fn acceptance_ratio_is_free_of_the_normalizing_constant() {
    let target = ornstein_uhlenbeck_guide(1.0, 0.0, 1.0).unwrap();
    let spec = BridgeSpec::scalar(1.0, 0.0, 1.0).unwrap();
    let grid = make_bridge_grid(1.0, 100).unwrap();
    let bridge = GuidedBridge::from_guide(target.as_model(), &LinearGuide::scalar_brownian(1.0, 0.0).unwrap(), &spec, &grid).unwrap();
    let log_p = guide_log_density(&target, &spec, 0.0, &spec.start).unwrap();
    let a = bridge.simulate(RngSpec::new(8, 0)).unwrap();
    let b = bridge.simulate(RngSpec::new(8, 1)).unwrap();
    let full = ((b.log_weight() - log_p) - (a.log_weight() - log_p)).exp().min(1.0);
    assert!((full - acceptance_probability(a.log_psi, b.log_psi)).abs() < 1e-12);
}

#[test]
fn exact_guide_importance_weights_are_uniform() {
    let ens = importance_ensemble(&ou_exact(), 300, RngSpec::from_seed(2)).unwrap();
    assert!(ens.normalized_weights().iter().all(|&w| w == 1.0 / 300.0));
    assert_eq!(effective_sample_size(&ens), 300.0);
    let one = importance_ensemble(&sine_bridge(0.0), 1, RngSpec::from_seed(2)).unwrap();
    assert_eq!(one.normalized_weights(), vec![1.0]);
    assert!(importance_ensemble(&ou_exact(), 0, RngSpec::from_seed(2)).is_err());
}

#[test]
fn importance_sampling_recovers_ou_bridge_mean() {
    let target = ornstein_uhlenbeck_guide(1.0, 0.0, 1.0).unwrap();
    let spec = BridgeSpec::scalar(1.0, 0.0, 1.0).unwrap();
    let grid = make_bridge_grid(1.0, 400).unwrap().with_nodes(&[0.5]).unwrap();
    let bridge = GuidedBridge::from_guide(target.as_model(), &LinearGuide::scalar_brownian(1.0, 0.0).unwrap(), &spec, &grid).unwrap();
    let ens = importance_ensemble(&bridge, 10_000, RngSpec::from_seed(3)).unwrap();
    let (mean, se) = ens.weighted_mean(grid.index_of(0.5).unwrap(), 0);
    // OU bridge from 1 to 0 on [0, 1]: E X(1/2) = sinh(1/2) / sinh(1).
    let exact = 0.5f64.sinh() / 1f64.sinh();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
}
