//! Comparison proposals: the pulled process with the original drift (▽), the
//! pulled process without it (△), and the exact bridge of a linear model.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, BridgeError, Result};
use crate::guided::GuidedBridge;
use crate::linear::{build_guide_cache, LinearGuide};
use crate::sde::{all_finite, sample_brownian_increments, BridgeSpec, DiffusionModel, Path, RngSpec, TimeGrid};

/// Euler–Maruyama on nodes `0..N-1` with the state at `t_N` pinned to `v`.
fn pinned_em<F>(model: &DiffusionModel, spec: &BridgeSpec, grid: &TimeGrid, rng: RngSpec, mut drift: F) -> Result<Path>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    if spec.dim() != model.dim() {
        return invalid("bridge dimension does not match model");
    }
    if (grid.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return invalid("grid does not end at the bridge horizon");
    }
    let n = grid.steps();
    let incs = sample_brownian_increments(&grid.increments(), model.noise_dim(), rng)?;
    let mut states = DMatrix::zeros(n + 1, model.dim());
    let mut x = spec.start.clone();
    states.set_row(0, &x.transpose());
    for k in 0..n - 1 {
        let t = grid.time(k);
        let dt = grid.step(k);
        let b = drift(t, &x)?;
        let s = model.dispersion(t, &x)?;
        x += b * dt + s * incs.row(k).transpose();
        if !all_finite(x.as_slice()) {
            return Err(BridgeError::Numerical {
                node: k + 1,
                message: "baseline state is not finite".into(),
            });
        }
        states.set_row(k + 1, &x.transpose());
    }
    states.set_row(n, &spec.end.transpose());
    Path::new(grid.clone(), states)
}

/// Drift `b(t, x) + (v - x)/(T - t)`.
pub fn simulate_delyon_hu_full(model: &DiffusionModel, spec: &BridgeSpec, grid: &TimeGrid, rng: RngSpec) -> Result<Path> {
    pinned_em(model, spec, grid, rng, |t, x| {
        Ok(model.drift(t, x)? + (&spec.end - x) / (spec.horizon - t))
    })
}

/// Drift `(v - x)/(T - t)`; the model drift is ignored.
pub fn simulate_delyon_hu_nodrift(model: &DiffusionModel, spec: &BridgeSpec, grid: &TimeGrid, rng: RngSpec) -> Result<Path> {
    pinned_em(model, spec, grid, rng, |t, x| Ok((&spec.end - x) / (spec.horizon - t)))
}

/// Exact bridge of the linear process `guide`: the guided proposal whose
/// auxiliary process is the target itself. Builds a fresh cache per call;
/// reuse [`exact_linear_bridge`] for many draws.
pub fn simulate_exact_linear_bridge(guide: &LinearGuide, spec: &BridgeSpec, grid: &TimeGrid, rng: RngSpec) -> Result<Path> {
    Ok(exact_linear_bridge(guide, spec, grid)?.simulate(rng)?.path)
}

/// Guided bridge with `guide` as both target and auxiliary process.
pub fn exact_linear_bridge(guide: &LinearGuide, spec: &BridgeSpec, grid: &TimeGrid) -> Result<GuidedBridge> {
    let cache = build_guide_cache(guide, spec, grid)?;
    GuidedBridge::new(guide.as_model(), Arc::new(cache))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn still(drift: f64) -> DiffusionModel {
        DiffusionModel::new(1, 1, move |_, _| DVector::from_element(1, drift), |_, _| DMatrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn deterministic_pull_is_linear_interpolation() {
        let spec = BridgeSpec::scalar(0.0, 1.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 64).unwrap();
        let p = simulate_delyon_hu_full(&still(0.0), &spec, &grid, RngSpec::from_seed(1)).unwrap();
        for k in 0..=64 {
            assert_relative_eq!(p.coord(k, 0), grid.time(k), epsilon = 1e-12);
        }
    }

    #[test]
    fn full_drift_differs_from_nodrift_by_constant() {
        // With σ ≡ 0 and one step of difference, the two drifts differ by β₁.
        let spec = BridgeSpec::scalar(0.0, 1.0, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 2).unwrap();
        let full = simulate_delyon_hu_full(&still(2.0), &spec, &grid, RngSpec::from_seed(1)).unwrap();
        let bare = simulate_delyon_hu_nodrift(&still(2.0), &spec, &grid, RngSpec::from_seed(1)).unwrap();
        assert_relative_eq!((full.coord(1, 0) - bare.coord(1, 0)) / grid.step(0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn nodrift_ignores_model_drift() {
        let noisy = |beta: f64| {
            DiffusionModel::new(
                1,
                1,
                move |_, x| DVector::from_element(1, beta - (3.0 * x[0]).cos()),
                |_, _| DMatrix::from_element(1, 1, 0.8),
            )
            .unwrap()
        };
        let spec = BridgeSpec::scalar(0.2, -0.4, 1.5).unwrap();
        let grid = TimeGrid::bridge(1.5, 40).unwrap();
        let a = simulate_delyon_hu_nodrift(&noisy(0.0), &spec, &grid, RngSpec::new(5, 2)).unwrap();
        let b = simulate_delyon_hu_nodrift(&noisy(7.0), &spec, &grid, RngSpec::new(5, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.terminal()[0], -0.4);
    }

    #[test]
    fn degenerate_linear_bridge_rejected() {
        assert!(LinearGuide::scalar_brownian(0.0, 0.0).is_err());
        let g = LinearGuide::new(1, 1, |_| DMatrix::zeros(1, 1), |_| DVector::zeros(1), |_| DMatrix::zeros(1, 1)).unwrap();
        let spec = BridgeSpec::scalar(0.0, 0.0, 1.0).unwrap();
        let grid = TimeGrid::bridge(1.0, 10).unwrap();
        assert!(simulate_exact_linear_bridge(&g, &spec, &grid, RngSpec::from_seed(0)).is_err());
    }
}
