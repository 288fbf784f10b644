//! Numerical self-checks for a guide (and optionally a model/guide pair).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::guided::GuidedBridge;
use crate::linear::{fundamental_matrix, guide_covariance, guide_log_density, min_eigenvalue, GuideCache, LinearGuide};
use crate::samplers::importance_ensemble;
use crate::sde::{BridgeSpec, RngSpec};

/// One named check with its measured value and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            value,
            threshold,
            passed: value.is_finite() && value <= threshold,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-12)
}

/// `max ‖Φ(t,s)Φ(s,τ) - Φ(t,τ)‖` over random `τ < s < t` in `[0, T]`.
pub fn composition_check(guide: &LinearGuide, horizon: f64, n: usize, rng: RngSpec) -> Result<Check> {
    let mut gen = rng.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let mut ts = [gen.random::<f64>(), gen.random::<f64>(), gen.random::<f64>()].map(|u| u * horizon);
        ts.sort_by(f64::total_cmp);
        let [tau, s, t] = ts;
        let lhs = fundamental_matrix(guide, t, s)? * fundamental_matrix(guide, s, tau)?;
        let rhs = fundamental_matrix(guide, t, tau)?;
        worst = worst.max((lhs - rhs).amax());
    }
    Ok(Check::at_most("fundamental matrix composition", worst, 1e-8))
}

/// `∫_s^t tr B̃(u) du` by composite Simpson.
fn integrated_trace(guide: &LinearGuide, s: f64, t: f64) -> f64 {
    let n = 2000;
    let h = (t - s) / n as f64;
    let f = |u: f64| guide.b_matrix(u).trace();
    let mut acc = f(s) + f(t);
    for j in 1..n {
        acc += f(s + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// `| det Φ(t,s) - exp(∫_s^t tr B̃) |` over random pairs.
pub fn liouville_check(guide: &LinearGuide, horizon: f64, n: usize, rng: RngSpec) -> Result<Check> {
    let mut gen = rng.rng();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (a, b) = (gen.random::<f64>() * horizon, gen.random::<f64>() * horizon);
        let (s, t) = (a.min(b), a.max(b));
        let det = fundamental_matrix(guide, t, s)?.determinant();
        worst = worst.max((det - integrated_trace(guide, s, t).exp()).abs());
    }
    Ok(Check::at_most("Liouville determinant", worst, 1e-6))
}

fn random_state(gen: &mut impl Rng, centre: &DVector<f64>, scale: f64) -> DVector<f64> {
    DVector::from_iterator(centre.len(), centre.iter().map(|c| c + scale * gen.sample::<f64, _>(StandardNormal)))
}

/// Gradient of `x ↦ R̃(s, x)` by central differences.
fn fd_gradient(guide: &LinearGuide, spec: &BridgeSpec, s: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let h = 1e-4 * (1.0 + x[i].abs());
        let mut up = x.clone();
        up[i] += h;
        let mut down = x.clone();
        down[i] -= h;
        g[i] = (guide_log_density(guide, spec, s, &up)? - guide_log_density(guide, spec, s, &down)?) / (2.0 * h);
    }
    Ok(g)
}

/// `-D r̃` by central differences of the score.
fn fd_curvature(cache: &GuideCache, k: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = x.len();
    let mut h_mat = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = 1e-3 * (1.0 + x[j].abs());
        let mut up = x.clone();
        up[j] += h;
        let mut down = x.clone();
        down[j] -= h;
        let col = (cache.score(k, &down)? - cache.score(k, &up)?) / (2.0 * h);
        h_mat.set_column(j, &col);
    }
    Ok(h_mat)
}

fn interior_nodes(cache: &GuideCache, n: usize, gen: &mut impl Rng) -> Vec<usize> {
    let steps = cache.grid().steps();
    (0..n).map(|_| gen.random_range(0..steps)).collect()
}

/// Score from the cache against finite differences of the standalone log density.
pub fn score_consistency_check(cache: &GuideCache, n: usize, rng: RngSpec) -> Result<Check> {
    let mut gen = rng.rng();
    let mut worst: f64 = 0.0;
    let spec = cache.spec();
    for k in interior_nodes(cache, n, &mut gen) {
        let x = random_state(&mut gen, cache.pullback(k), 1.0);
        let fd = fd_gradient(cache.guide(), spec, cache.grid().time(k), &x)?;
        worst = worst.max(rel_err(&cache.score(k, &x)?, &fd));
    }
    Ok(Check::at_most("score vs finite-difference log density", worst, 1e-4))
}

/// `-D r̃` against `Φ(T,s)' K(s)^{-1} Φ(T,s)`; also requires symmetry and
/// positive definiteness.
pub fn curvature_check(cache: &GuideCache, n: usize, rng: RngSpec) -> Result<Check> {
    let mut gen = rng.rng();
    let mut worst: f64 = 0.0;
    let guide = cache.guide();
    let t_end = cache.spec().horizon;
    for k in interior_nodes(cache, n, &mut gen) {
        let s = cache.grid().time(k);
        let x = random_state(&mut gen, cache.pullback(k), 1.0);
        let fd = fd_curvature(cache, k, &x)?;
        let phi = fundamental_matrix(guide, t_end, s)?;
        let kmat = guide_covariance(guide, s, t_end)?;
        let kinv = kmat.try_inverse().unwrap_or_else(|| DMatrix::from_element(x.len(), x.len(), f64::NAN));
        let reference = phi.transpose() * kinv * phi;
        let asym = (&fd - fd.transpose()).amax() / fd.amax();
        let err = (&fd - &reference).norm() / reference.norm();
        let pd_penalty = if min_eigenvalue(&(0.5 * (&fd + fd.transpose()))) > 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(err.max(asym) + pd_penalty);
    }
    Ok(Check::at_most("curvature vs Φ'K⁻¹Φ", worst, 1e-4))
}

/// Residual of `∂_s R̃ + L̃ R̃ + ½ r̃' ã r̃ = 0`, with every derivative of `R̃`
/// taken by finite differences of the standalone log density.
pub fn backward_residual_check(guide: &LinearGuide, spec: &BridgeSpec, n: usize, rng: RngSpec) -> Result<Check> {
    let mut gen = rng.rng();
    let t_end = spec.horizon;
    let d = spec.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let s = t_end * (0.05 + 0.9 * gen.random::<f64>());
        let x = random_state(&mut gen, &spec.end, 1.0);
        let hs = 1e-4 * (t_end - s);
        let dr_ds = (guide_log_density(guide, spec, s + hs, &x)? - guide_log_density(guide, spec, s - hs, &x)?) / (2.0 * hs);
        let r = fd_gradient(guide, spec, s, &x)?;
        let mut h_mat = DMatrix::zeros(d, d);
        for j in 0..d {
            let h = 1e-3 * (1.0 + x[j].abs());
            let mut up = x.clone();
            up[j] += h;
            let mut down = x.clone();
            down[j] -= h;
            let col = (fd_gradient(guide, spec, s, &down)? - fd_gradient(guide, spec, s, &up)?) / (2.0 * h);
            h_mat.set_column(j, &col);
        }
        let a = guide.diffusion(s);
        let generator = guide.drift(s, &x).dot(&r) - 0.5 * (&a * &h_mat).trace();
        let residual = dr_ds + generator + 0.5 * r.dot(&(&a * &r));
        worst = worst.max(residual.abs());
    }
    Ok(Check::at_most("backward equation residual", worst, 1e-3))
}

/// `max_k (T - t_k) ‖H̃(t_k)‖` against `exp(2 ∫‖B̃‖) / λ_min(ã)`.
pub fn boundedness_check(cache: &GuideCache) -> Result<Check> {
    let grid = cache.grid();
    let guide = cache.guide();
    let t_end = cache.spec().horizon;
    let mut worst: f64 = 0.0;
    let mut eta = f64::INFINITY;
    let mut b_norm_integral = 0.0;
    for k in 0..grid.steps() {
        let h = cache.curvature(k)?;
        let spectral = nalgebra::SymmetricEigen::new(h).eigenvalues.amax();
        worst = worst.max((t_end - grid.time(k)) * spectral);
        eta = eta.min(min_eigenvalue(&guide.diffusion(grid.time(k))));
        b_norm_integral += guide.b_matrix(grid.time(k)).norm() * grid.step(k);
    }
    eta = eta.min(min_eigenvalue(&guide.diffusion(t_end)));
    let bound = (2.0 * b_norm_integral).exp() / eta * (1.0 + 1e-9);
    Ok(Check::at_most("(T - s)‖H̃(s)‖ bound", worst, bound))
}

/// Guide-only checks plus, when a bridge is supplied, endpoint matching and
/// finiteness of proposal weights. If `log_p_exact` is known the Monte Carlo
/// mean of `p̃(0,u) ψ(T) / p(0,u)` is compared with 1 (3 standard errors).
pub fn validate_pair(bridge: &GuidedBridge, log_p_exact: Option<f64>, n_paths: usize, rng: RngSpec) -> Result<ValidationReport> {
    let cache = bridge.cache();
    let guide = cache.guide();
    let spec = cache.spec();
    let mut checks = vec![
        composition_check(guide, spec.horizon, 100, rng.child(0))?,
        liouville_check(guide, spec.horizon, 20, rng.child(1))?,
        score_consistency_check(cache, 100, rng.child(2))?,
        curvature_check(cache, 100, rng.child(3))?,
        backward_residual_check(guide, spec, 100, rng.child(4))?,
        boundedness_check(cache)?,
    ];
    checks.push(Check {
        name: "guide diffusion matches a(T, v)".into(),
        value: if bridge.endpoint_mismatch() { 1.0 } else { 0.0 },
        threshold: 0.0,
        passed: !bridge.endpoint_mismatch(),
    });
    let ens = importance_ensemble(bridge, n_paths, rng.child(5))?;
    let finite = ens.samples.iter().all(|s| s.log_psi.is_finite());
    checks.push(Check {
        name: "proposal log-weights finite".into(),
        value: if finite { 0.0 } else { 1.0 },
        threshold: 0.0,
        passed: finite,
    });
    if let Some(log_p) = log_p_exact {
        let ratios: Vec<f64> = ens.samples.iter().map(|s| (s.log_weight() - log_p).exp()).collect();
        let n = ratios.len() as f64;
        let mean = ratios.iter().sum::<f64>() / n;
        let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        // Floor on the standard error so equal weights are not judged on round-off.
        let se = (var / n).sqrt().max(1e-9);
        let z = (mean - 1.0).abs() / se;
        checks.push(Check::at_most("weight mean identity (|z|)", z, 3.0));
    }
    Ok(ValidationReport { checks })
}
