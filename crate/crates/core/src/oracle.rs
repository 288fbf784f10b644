//! Brute-force references for low-dimensional problems: ε-ball rejection
//! sampling of bridges, histogram transition densities, and 1-Wasserstein
//! distances between marginals.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{invalid, BridgeError, Result};
use crate::samplers::WeightedEnsemble;
use crate::sde::{euler_maruyama, BridgeSpec, DiffusionModel, Path, RngSpec, TimeGrid};

/// Largest state dimension the oracle accepts.
pub const MAX_ORACLE_DIM: usize = 2;

const CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct RejectionSample {
    pub paths: Vec<Path>,
    /// Forward paths simulated until the last kept one (or until exhaustion).
    pub attempts: usize,
    pub acceptance_fraction: f64,
}

/// `0.02 √T ‖σ(T, v)‖_F`.
pub fn default_epsilon(model: &DiffusionModel, spec: &BridgeSpec) -> Result<f64> {
    Ok(0.02 * spec.horizon.sqrt() * model.dispersion(spec.horizon, &spec.end)?.norm())
}

/// Forward-simulates unconditioned paths from `u` (path `i` uses
/// `rng.child(i)`) and keeps those ending within `epsilon` of `v`, until
/// `n_target` are kept or `max_forward` are spent.
pub fn rejection_bridge_sample(
    model: &DiffusionModel,
    spec: &BridgeSpec,
    grid: &TimeGrid,
    epsilon: f64,
    n_target: usize,
    max_forward: usize,
    rng: RngSpec,
) -> Result<RejectionSample> {
    if model.dim() > MAX_ORACLE_DIM {
        return invalid(format!("rejection oracle supports d <= {MAX_ORACLE_DIM}, got {}", model.dim()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid(format!("epsilon must be positive, got {epsilon}"));
    }
    if n_target == 0 {
        return invalid("n_target must be positive");
    }
    let mut kept = Vec::with_capacity(n_target);
    let mut attempts = 0;
    let mut next = 0usize;
    'outer: while next < max_forward {
        let end = (next + CHUNK).min(max_forward);
        let chunk = (next..end)
            .into_par_iter()
            .map(|i| {
                let p = euler_maruyama(model, &spec.start, grid, rng.child(i as u64))?;
                let hit = (p.terminal() - &spec.end).norm() <= epsilon;
                Ok(hit.then_some(p))
            })
            .collect::<Result<Vec<Option<Path>>>>()?;
        for (offset, p) in chunk.into_iter().enumerate() {
            attempts = next + offset + 1;
            if let Some(p) = p {
                kept.push(p);
                if kept.len() == n_target {
                    break 'outer;
                }
            }
        }
        next = end;
    }
    if kept.is_empty() {
        return Err(BridgeError::OracleInfeasible { attempts, epsilon });
    }
    let acceptance_fraction = kept.len() as f64 / attempts as f64;
    Ok(RejectionSample {
        paths: kept,
        attempts,
        acceptance_fraction,
    })
}

/// Histogram estimate of `p(s, x; t, ·)` on a regular 1-D or 2-D grid of bins
/// of width `bandwidth`.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub dim: usize,
    pub bandwidth: f64,
    /// Lower edge of the first bin per axis.
    pub origin: Vec<f64>,
    /// Number of bins per axis.
    pub bins: Vec<usize>,
    /// Densities, row-major (axis 0 slowest).
    pub values: Vec<f64>,
    /// Set when all samples coincide; no smoothing is attempted.
    pub point_mass: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl DensityEstimate {
    /// Bin centres along `axis`.
    pub fn centers(&self, axis: usize) -> Vec<f64> {
        (0..self.bins[axis])
            .map(|i| self.origin[axis] + (i as f64 + 0.5) * self.bandwidth)
            .collect()
    }

    /// Riemann sum of the density over the bins.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bandwidth.powi(self.dim as i32)
    }

    /// Density of the bin containing `point` (0 outside the support).
    pub fn value_at(&self, point: &[f64]) -> f64 {
        let mut idx = 0;
        for axis in 0..self.dim {
            let pos = ((point[axis] - self.origin[axis]) / self.bandwidth).floor();
            if pos < 0.0 || pos as usize >= self.bins[axis] {
                return 0.0;
            }
            idx = idx * self.bins[axis] + pos as usize;
        }
        self.values[idx]
    }
}

/// Options for [`transition_density_estimate`].
#[derive(Debug, Clone, Copy)]
pub struct DensityOptions {
    /// Euler–Maruyama steps between `s` and `t`.
    pub steps: usize,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self { steps: 100 }
    }
}

/// Forward-simulates `n_paths` paths from `x` at time `s` to time `t` and bins
/// their end points.
#[allow(clippy::too_many_arguments)]
pub fn transition_density_estimate(
    model: &DiffusionModel,
    s: f64,
    x: &DVector<f64>,
    t: f64,
    n_paths: usize,
    bandwidth: f64,
    rng: RngSpec,
    options: DensityOptions,
) -> Result<DensityEstimate> {
    let d = model.dim();
    if d > MAX_ORACLE_DIM {
        return invalid(format!("density oracle supports d <= {MAX_ORACLE_DIM}, got {d}"));
    }
    if !(t > s && s >= 0.0) {
        return invalid(format!("need 0 <= s < t, got s={s}, t={t}"));
    }
    if !(bandwidth > 0.0) || n_paths == 0 {
        return invalid("bandwidth and n_paths must be positive");
    }
    let shifted = model.shifted(s);
    let grid = TimeGrid::uniform(t - s, options.steps.max(2))?;
    let ends = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| euler_maruyama(&shifted, x, &grid, rng.child(i)).map(|p| p.terminal()))
        .collect::<Result<Vec<_>>>()?;

    let mut warnings = Vec::new();
    let lo: Vec<f64> = (0..d).map(|a| ends.iter().map(|e| e[a]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|a| ends.iter().map(|e| e[a]).fold(f64::NEG_INFINITY, f64::max)).collect();
    if lo.iter().zip(&hi).all(|(l, h)| l == h) {
        warnings.push("all end points coincide: point mass, bandwidth smoothing refused".to_string());
        return Ok(DensityEstimate {
            dim: d,
            bandwidth,
            origin: lo.clone(),
            bins: vec![0; d],
            values: Vec::new(),
            point_mass: Some(lo),
            warnings,
        });
    }
    if (n_paths as f64) * bandwidth.powi(d as i32) < 100.0 {
        let msg = format!("n_paths = {n_paths} is small for bandwidth {bandwidth}; expect a noisy estimate");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let origin: Vec<f64> = lo.iter().map(|l| (l / bandwidth).floor() * bandwidth).collect();
    let bins: Vec<usize> = (0..d)
        .map(|a| ((hi[a] - origin[a]) / bandwidth).floor() as usize + 1)
        .collect();
    let total: usize = bins.iter().product();
    let mut counts = vec![0usize; total];
    for e in &ends {
        let mut idx = 0;
        for a in 0..d {
            let pos = (((e[a] - origin[a]) / bandwidth).floor() as usize).min(bins[a] - 1);
            idx = idx * bins[a] + pos;
        }
        counts[idx] += 1;
    }
    let norm = n_paths as f64 * bandwidth.powi(d as i32);
    Ok(DensityEstimate {
        dim: d,
        bandwidth,
        origin,
        bins,
        values: counts.into_iter().map(|c| c as f64 / norm).collect(),
        point_mass: None,
        warnings,
    })
}

/// 1-Wasserstein distance between two weighted empirical measures on R,
/// `∫ |F(x) - G(x)| dx`. Weights need not be normalized.
pub fn wasserstein1(xs: &[f64], wx: &[f64], ys: &[f64], wy: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() || xs.len() != wx.len() || ys.len() != wy.len() {
        return invalid("wasserstein1 needs non-empty samples with matching weights");
    }
    let sx: f64 = wx.iter().sum();
    let sy: f64 = wy.iter().sum();
    let mut events: Vec<(f64, f64)> = xs
        .iter()
        .zip(wx)
        .map(|(&x, &w)| (x, w / sx))
        .chain(ys.iter().zip(wy).map(|(&y, &w)| (y, -w / sy)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    // CDF differences at the level of summation round-off count as zero, so
    // identical ensembles are at distance exactly 0.
    let tol = 1e-12;
    let mut cdf_diff = 0.0;
    let mut dist = 0.0;
    for pair in events.windows(2) {
        cdf_diff += pair[0].1;
        if cdf_diff.abs() > tol {
            dist += cdf_diff.abs() * (pair[1].0 - pair[0].0);
        }
    }
    Ok(dist)
}

/// W₁ between the weighted marginal of `weighted` and the empirical marginal
/// of `oracle_paths` at time `t`. For `d = 2` the larger of the two
/// per-coordinate distances is returned.
pub fn marginal_distance(weighted: &WeightedEnsemble, oracle_paths: &[Path], t: f64) -> Result<f64> {
    if oracle_paths.is_empty() {
        return invalid("no oracle paths");
    }
    let kw = node_index(weighted.samples[0].path.grid(), t)?;
    let ko = node_index(oracle_paths[0].grid(), t)?;
    let d = oracle_paths[0].dim();
    if weighted.samples[0].path.dim() != d {
        return invalid("ensemble and oracle dimensions differ");
    }
    let ones = vec![1.0; oracle_paths.len()];
    let mut worst: f64 = 0.0;
    for coord in 0..d {
        let (x, w) = weighted.marginal(kw, coord);
        let y: Vec<f64> = oracle_paths.iter().map(|p| p.coord(ko, coord)).collect();
        worst = worst.max(wasserstein1(&x, &w, &y, &ones)?);
    }
    Ok(worst)
}

fn node_index(grid: &TimeGrid, t: f64) -> Result<usize> {
    grid.index_of(t)
        .ok_or_else(|| BridgeError::InvalidArgument(format!("time {t} is not a grid node")))
}
