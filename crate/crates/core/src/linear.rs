//! Linear auxiliary processes `dX̃ = (B̃(t) X̃ + β̃(t)) dt + σ̃(t) dW` and the
//! Gaussian quantities derived from them.
//!
//! With `Φ(t, s)` the fundamental matrix of `x' = B̃(t) x`:
//!
//! ```text
//! μ_t(s, x) = Φ(t,s) x + ∫_s^t Φ(t,τ) β̃(τ) dτ
//! K_t(s)    = ∫_s^t Φ(t,τ) ã(τ) Φ(t,τ)' dτ
//! L̃(s)      = H̃(s)^{-1} = ∫_s^T Φ(s,τ) ã(τ) Φ(s,τ)' dτ
//! v(s)      = Φ(s,T) v - ∫_s^T Φ(s,τ) β̃(τ) dτ
//! r̃(s, x)   = H̃(s) (v(s) - x)
//! ```
//!
//! `H̃` grows like `1/(T - s)` and is never formed on the hot path; the cache
//! keeps `L̃` and its Cholesky factor and solves against it.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{invalid, BridgeError, Result};
use crate::sde::{all_finite, outer_self, symmetrize, BridgeSpec, DiffusionModel, TimeGrid};

pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Relative threshold on the smallest eigenvalue: `λ_min > PD_TOL · tr/d`.
pub const PD_TOL: f64 = 1e-10;

/// Below `T - s < ENDPOINT_DELTA · T` the first-order expansion
/// `L̃(s) ≈ ã(T) (T - s)` replaces quadrature.
pub const ENDPOINT_DELTA: f64 = 1e-12;

/// Minimum quadrature points per bridge-grid interval.
pub const MIN_POINTS_PER_INTERVAL: usize = 8;

/// Largest RK4 / quadrature step for standalone evaluations with
/// time-varying coefficients.
pub const MAX_QUAD_STEP: f64 = 1e-4;

/// Largest quadrature step inside a bridge-grid interval when building a cache.
pub const CACHE_QUAD_STEP: f64 = 1e-3;

/// Auxiliary linear SDE, optionally tagged with the parameter that produced it.
#[derive(Clone)]
pub struct LinearGuide {
    dim: usize,
    noise_dim: usize,
    b_mat: MatrixFn,
    beta: VectorFn,
    sigma: MatrixFn,
    constant: bool,
    theta: Option<DVector<f64>>,
}

impl fmt::Debug for LinearGuide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearGuide")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("constant", &self.constant)
            .field("theta", &self.theta)
            .finish_non_exhaustive()
    }
}

impl LinearGuide {
    /// Time-varying coefficients.
    pub fn new<B, Be, S>(dim: usize, noise_dim: usize, b_mat: B, beta: Be, sigma: S) -> Result<Self>
    where
        B: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        Be: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        S: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if dim == 0 || noise_dim == 0 {
            return invalid("guide dimensions must be positive");
        }
        Ok(Self {
            dim,
            noise_dim,
            b_mat: Arc::new(b_mat),
            beta: Arc::new(beta),
            sigma: Arc::new(sigma),
            constant: false,
            theta: None,
        })
    }

    /// Constant coefficients; selects the matrix-exponential fast path.
    pub fn constant(b_mat: DMatrix<f64>, beta: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let dim = b_mat.nrows();
        if dim == 0 || !b_mat.is_square() || beta.len() != dim || sigma.nrows() != dim || sigma.ncols() == 0 {
            return invalid(format!(
                "inconsistent constant guide shapes: B {:?}, beta {}, sigma {:?}",
                b_mat.shape(),
                beta.len(),
                sigma.shape()
            ));
        }
        if !all_finite(b_mat.as_slice()) || !all_finite(beta.as_slice()) || !all_finite(sigma.as_slice()) {
            return invalid("guide coefficients must be finite");
        }
        check_positive_definite(&outer_self(&sigma), "constant guide diffusion")?;
        let noise_dim = sigma.ncols();
        Ok(Self {
            dim,
            noise_dim,
            b_mat: Arc::new(move |_| b_mat.clone()),
            beta: Arc::new(move |_| beta.clone()),
            sigma: Arc::new(move |_| sigma.clone()),
            constant: true,
            theta: None,
        })
    }

    /// One-dimensional scaled Brownian motion with constant drift:
    /// `dX̃ = drift dt + scale dW`.
    pub fn scalar_brownian(scale: f64, drift: f64) -> Result<Self> {
        Self::constant(
            DMatrix::zeros(1, 1),
            DVector::from_element(1, drift),
            DMatrix::from_element(1, 1, scale),
        )
    }

    pub fn with_theta(mut self, theta: DVector<f64>) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn theta(&self) -> Option<&DVector<f64>> {
        self.theta.as_ref()
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn b_matrix(&self, t: f64) -> DMatrix<f64> {
        (self.b_mat)(t)
    }

    pub fn beta(&self, t: f64) -> DVector<f64> {
        (self.beta)(t)
    }

    pub fn sigma(&self, t: f64) -> DMatrix<f64> {
        (self.sigma)(t)
    }

    /// `ã(t) = σ̃(t) σ̃(t)'`.
    pub fn diffusion(&self, t: f64) -> DMatrix<f64> {
        outer_self(&self.sigma(t))
    }

    /// `b̃(t, x) = B̃(t) x + β̃(t)`.
    pub fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.b_matrix(t) * x + self.beta(t)
    }

    /// The linear process itself as a target model.
    pub fn as_model(&self) -> DiffusionModel {
        let drift = self.clone();
        let disp = self.sigma.clone();
        DiffusionModel::new(self.dim, self.noise_dim, move |t, x| drift.drift(t, x), move |t, _| disp(t))
            .expect("guide dimensions are positive")
    }
}

fn rk4_steps(span: f64) -> usize {
    ((span.abs() / MAX_QUAD_STEP).ceil() as usize).max(16)
}

/// `Φ(anchor, τ_j)` for `τ_j = anchor + j (other - anchor)/m`, `j = 0..=m`.
///
/// `Y(τ) = Φ(anchor, τ)` solves `Y' = -Y B̃(τ)`, `Y(anchor) = I`.
fn propagators_from(guide: &LinearGuide, anchor: f64, other: f64, m: usize) -> Vec<DMatrix<f64>> {
    let d = guide.dim();
    let h = (other - anchor) / m as f64;
    let mut out = Vec::with_capacity(m + 1);
    let mut y = DMatrix::identity(d, d);
    out.push(y.clone());
    if guide.is_constant() {
        let step = (guide.b_matrix(anchor) * (-h)).exp();
        for _ in 0..m {
            y = &y * &step;
            out.push(y.clone());
        }
        return out;
    }
    let f = |tau: f64, y: &DMatrix<f64>| -(y * guide.b_matrix(tau));
    for j in 0..m {
        let tau = anchor + j as f64 * h;
        let k1 = f(tau, &y);
        let k2 = f(tau + 0.5 * h, &(&y + &k1 * (0.5 * h)));
        let k3 = f(tau + 0.5 * h, &(&y + &k2 * (0.5 * h)));
        let k4 = f(tau + h, &(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(y.clone());
    }
    out
}

/// Fundamental matrix `Φ(t, s) = Φ(t) Φ(s)^{-1}`.
///
/// Constant `B̃` uses `exp(B̃ (t - s))`; otherwise `∂_t Φ(t,s) = B̃(t) Φ(t,s)`
/// is integrated with fixed-step RK4.
pub fn fundamental_matrix(guide: &LinearGuide, t: f64, s: f64) -> Result<DMatrix<f64>> {
    if !(t.is_finite() && s.is_finite()) || t.min(s) < 0.0 {
        return invalid(format!("fundamental matrix needs finite non-negative times, got t={t}, s={s}"));
    }
    let phi = if guide.is_constant() {
        (guide.b_matrix(s) * (t - s)).exp()
    } else if t == s {
        DMatrix::identity(guide.dim(), guide.dim())
    } else {
        let n = rk4_steps(t - s);
        let h = (t - s) / n as f64;
        let d = guide.dim();
        let mut y = DMatrix::identity(d, d);
        let f = |tau: f64, y: &DMatrix<f64>| guide.b_matrix(tau) * y;
        for j in 0..n {
            let tau = s + j as f64 * h;
            let k1 = f(tau, &y);
            let k2 = f(tau + 0.5 * h, &(&y + &k1 * (0.5 * h)));
            let k3 = f(tau + 0.5 * h, &(&y + &k2 * (0.5 * h)));
            let k4 = f(tau + h, &(&y + &k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        y
    };
    if !all_finite(phi.as_slice()) {
        return Err(BridgeError::Numerical {
            node: 0,
            message: format!("fundamental matrix Φ({t}, {s}) is not finite"),
        });
    }
    Ok(phi)
}

/// Van Loan block exponentials for constant coefficients over a step `h`:
/// returns `(exp(A h), ∫_0^h e^{Au} Q e^{A'u} du, ∫_0^h e^{Au} β du)`.
fn van_loan(a: &DMatrix<f64>, q: &DMatrix<f64>, beta: &DVector<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let d = a.nrows();
    let mut c = DMatrix::zeros(2 * d, 2 * d);
    c.view_mut((0, 0), (d, d)).copy_from(&(-a * h));
    c.view_mut((0, d), (d, d)).copy_from(&(q * h));
    c.view_mut((d, d), (d, d)).copy_from(&(a.transpose() * h));
    let ec = c.exp();
    let f22t = ec.view((d, d), (d, d)).transpose();
    let mut cov = &f22t * ec.view((0, d), (d, d));
    symmetrize(&mut cov);

    let mut m = DMatrix::zeros(d + 1, d + 1);
    m.view_mut((0, 0), (d, d)).copy_from(&(a * h));
    m.view_mut((0, d), (d, 1)).copy_from(&(beta * h));
    let em = m.exp();
    let shift = em.view((0, d), (d, 1)).column(0).into_owned();
    (f22t, cov, shift)
}

fn trapezoid_matrix(values: &[DMatrix<f64>], h: f64) -> DMatrix<f64> {
    let n = values.len() - 1;
    let mut acc = (&values[0] + &values[n]) * 0.5;
    for v in &values[1..n] {
        acc += v;
    }
    acc * h
}

fn trapezoid_vector(values: &[DVector<f64>], h: f64) -> DVector<f64> {
    let n = values.len() - 1;
    let mut acc = (&values[0] + &values[n]) * 0.5;
    for v in &values[1..n] {
        acc += v;
    }
    acc * h
}

/// `∫ Φ(anchor,τ) ã(τ) Φ(anchor,τ)' dτ` and `∫ Φ(anchor,τ) β̃(τ) dτ` over the
/// interval between `anchor` and `other` (oriented so both integrals are taken
/// over the positively oriented interval), plus `Φ(anchor, other)`.
fn interval_integrals(guide: &LinearGuide, anchor: f64, other: f64, m: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let span = other - anchor;
    if guide.is_constant() {
        // Φ(anchor, τ) = exp(-B̃ (τ - anchor)); substitute u = |τ - anchor|.
        let sign = span.signum();
        let b = guide.b_matrix(anchor) * (-sign);
        let (prop, cov, shift) = van_loan(&b, &guide.diffusion(anchor), &guide.beta(anchor), span.abs());
        return (prop, cov, shift);
    }
    let ys = propagators_from(guide, anchor, other, m);
    let h = span.abs() / m as f64;
    let covs: Vec<DMatrix<f64>> = ys
        .iter()
        .enumerate()
        .map(|(j, y)| {
            let tau = anchor + j as f64 * span / m as f64;
            y * guide.diffusion(tau) * y.transpose()
        })
        .collect();
    let shifts: Vec<DVector<f64>> = ys
        .iter()
        .enumerate()
        .map(|(j, y)| y * guide.beta(anchor + j as f64 * span / m as f64))
        .collect();
    let mut cov = trapezoid_matrix(&covs, h);
    symmetrize(&mut cov);
    (ys[m].clone(), cov, trapezoid_vector(&shifts, h))
}

fn check_order(s: f64, t: f64, strict: bool) -> Result<()> {
    let bad = !(s.is_finite() && t.is_finite()) || s < 0.0 || if strict { s >= t } else { s > t };
    if bad {
        return invalid(format!("need 0 <= s {} t, got s={s}, t={t}", if strict { "<" } else { "<=" }));
    }
    Ok(())
}

/// Mean `μ_t(s, x)` of the guide started from `x` at time `s`.
pub fn guide_mean(guide: &LinearGuide, s: f64, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_order(s, t, false)?;
    if x.len() != guide.dim() {
        return invalid("state dimension does not match guide");
    }
    if s == t {
        return Ok(x.clone());
    }
    let (phi_ts, _, shift) = interval_integrals(guide, t, s, rk4_steps(t - s));
    Ok(phi_ts * x + shift)
}

/// Covariance `K_t(s)`, symmetric positive definite.
pub fn guide_covariance(guide: &LinearGuide, s: f64, t: f64) -> Result<DMatrix<f64>> {
    check_order(s, t, true)?;
    let (_, cov, _) = interval_integrals(guide, t, s, rk4_steps(t - s));
    check_positive_definite(&cov, "guide covariance K")?;
    Ok(cov)
}

/// Log transition density `R̃(s, x) = log p̃(s, x; T, v)`.
pub fn guide_log_density(guide: &LinearGuide, spec: &BridgeSpec, s: f64, x: &DVector<f64>) -> Result<f64> {
    let t_end = spec.horizon;
    check_order(s, t_end, true)?;
    if x.len() != guide.dim() || spec.dim() != guide.dim() {
        return invalid("state dimension does not match guide");
    }
    let (phi, cov, shift) = interval_integrals(guide, t_end, s, rk4_steps(t_end - s));
    check_positive_definite(&cov, "guide covariance K")?;
    let mean = phi * x + shift;
    gaussian_log_density(&spec.end, &mean, &cov)
}

/// `log N(y; mean, cov)` via a Cholesky factorization.
pub(crate) fn gaussian_log_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let d = y.len() as f64;
    let chol = cholesky(cov, 0)?;
    let resid = y - mean;
    let sol = chol.solve(&resid);
    let logdet = 2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    Ok(-0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * logdet - 0.5 * resid.dot(&sol))
}

fn cholesky(m: &DMatrix<f64>, node: usize) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| BridgeError::Numerical {
        node,
        message: "Cholesky factorization failed".into(),
    })
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Errors unless `λ_min(m) > PD_TOL · tr(m)/d`.
pub fn check_positive_definite(m: &DMatrix<f64>, context: &str) -> Result<()> {
    let d = m.nrows() as f64;
    let threshold = PD_TOL * m.trace() / d;
    let lmin = min_eigenvalue(m);
    if !(lmin.is_finite() && threshold > 0.0 && lmin > threshold) {
        return Err(BridgeError::NotPositiveDefinite {
            context: context.to_string(),
            min_eigenvalue: lmin,
            threshold,
        });
    }
    Ok(())
}

/// Per-node guiding quantities on a bridge grid.
///
/// Node `N` (time `T`) is analytic: `v(T) = v`, `Φ(T,T) = I`, `L̃(T) = 0`, and
/// neither the score nor the drift is ever evaluated there.
#[derive(Clone)]
pub struct GuideCache {
    guide: LinearGuide,
    spec: BridgeSpec,
    grid: TimeGrid,
    phi_to_end: Vec<DMatrix<f64>>,
    hinv: Vec<DMatrix<f64>>,
    chol: Vec<Cholesky<f64, Dyn>>,
    pullback: Vec<DVector<f64>>,
    logdet_k: Vec<f64>,
    b_nodes: Vec<DMatrix<f64>>,
    beta_nodes: Vec<DVector<f64>>,
    a_nodes: Vec<DMatrix<f64>>,
}

impl fmt::Debug for GuideCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GuideCache")
            .field("guide", &self.guide)
            .field("spec", &self.spec)
            .field("steps", &self.grid.steps())
            .finish_non_exhaustive()
    }
}

/// Builds the cache by a backward recursion over grid intervals:
/// `L̃_k = ∫_{t_k}^{t_{k+1}} Φ ã Φ' + P_k L̃_{k+1} P_k'` and
/// `v_k = P_k v_{k+1} - ∫_{t_k}^{t_{k+1}} Φ β̃`, with `P_k = Φ(t_k, t_{k+1})`.
pub fn build_guide_cache(guide: &LinearGuide, spec: &BridgeSpec, grid: &TimeGrid) -> Result<GuideCache> {
    let d = guide.dim();
    if spec.dim() != d {
        return invalid(format!("bridge dimension {} does not match guide dimension {d}", spec.dim()));
    }
    let t_end = spec.horizon;
    if (grid.horizon() - t_end).abs() > 1e-12 * t_end {
        return invalid(format!("grid ends at {}, bridge horizon is {t_end}", grid.horizon()));
    }
    let n = grid.steps();
    let a_end = guide.diffusion(t_end);
    let mut phi_to_end = vec![DMatrix::<f64>::identity(d, d); n + 1];
    let mut hinv = vec![DMatrix::zeros(d, d); n + 1];
    let mut pullback = vec![spec.end.clone(); n + 1];
    for k in (0..n).rev() {
        let (t0, t1) = (grid.time(k), grid.time(k + 1));
        let m = MIN_POINTS_PER_INTERVAL.max(((t1 - t0) / CACHE_QUAD_STEP).ceil() as usize);
        let (prop, cov, shift) = interval_integrals(guide, t0, t1, m);
        let back = prop.clone().try_inverse().ok_or_else(|| BridgeError::Numerical {
            node: k,
            message: "interval propagator is singular".into(),
        })?;
        phi_to_end[k] = &phi_to_end[k + 1] * back;
        let mut l = if t_end - t0 < ENDPOINT_DELTA * t_end {
            &a_end * (t_end - t0)
        } else {
            cov + &prop * &hinv[k + 1] * prop.transpose()
        };
        symmetrize(&mut l);
        if !all_finite(l.as_slice()) {
            return Err(BridgeError::Numerical {
                node: k,
                message: "L̃ is not finite".into(),
            });
        }
        hinv[k] = l;
        pullback[k] = &prop * &pullback[k + 1] - shift;
    }
    let mut chol = Vec::with_capacity(n);
    let mut logdet_k = Vec::with_capacity(n + 1);
    for k in 0..n {
        check_positive_definite(&hinv[k], &format!("L̃ at node {k}"))?;
        let c = cholesky(&hinv[k], k)?;
        let logdet_l = 2.0 * c.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
        // K = Φ(T,s) L̃ Φ(T,s)'
        let logdet_phi = phi_to_end[k].determinant().abs().ln();
        logdet_k.push(logdet_l + 2.0 * logdet_phi);
        chol.push(c);
    }
    logdet_k.push(f64::NEG_INFINITY);
    let times = grid.nodes();
    Ok(GuideCache {
        b_nodes: times.iter().map(|&t| guide.b_matrix(t)).collect(),
        beta_nodes: times.iter().map(|&t| guide.beta(t)).collect(),
        a_nodes: times.iter().map(|&t| guide.diffusion(t)).collect(),
        guide: guide.clone(),
        spec: spec.clone(),
        grid: grid.clone(),
        phi_to_end,
        hinv,
        chol,
        pullback,
        logdet_k,
    })
}

impl GuideCache {
    pub fn guide(&self) -> &LinearGuide {
        &self.guide
    }

    pub fn spec(&self) -> &BridgeSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// `Φ(T, t_k)`.
    pub fn phi_to_end(&self, k: usize) -> &DMatrix<f64> {
        &self.phi_to_end[k]
    }

    /// `L̃(t_k) = H̃(t_k)^{-1}`; zero at node `N`.
    pub fn hinv(&self, k: usize) -> &DMatrix<f64> {
        &self.hinv[k]
    }

    /// Pullback endpoint `v(t_k)`.
    pub fn pullback(&self, k: usize) -> &DVector<f64> {
        &self.pullback[k]
    }

    /// `log |K(t_k)|`; `-∞` at node `N`.
    pub fn logdet_k(&self, k: usize) -> f64 {
        self.logdet_k[k]
    }

    /// `b̃(t_k, x)`.
    pub fn guide_drift(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.b_nodes[k] * x + &self.beta_nodes[k]
    }

    /// `ã(t_k)`.
    pub fn guide_diffusion(&self, k: usize) -> &DMatrix<f64> {
        &self.a_nodes[k]
    }

    /// Node `N` is handled analytically.
    pub fn endpoint_is_analytic(&self) -> bool {
        true
    }

    fn check_node(&self, k: usize) -> Result<()> {
        if k >= self.grid.steps() {
            return invalid(format!("node {k} is not an interior node (N = {})", self.grid.steps()));
        }
        Ok(())
    }

    /// `r̃(t_k, x)`, solving `L̃(t_k) r = v(t_k) - x`.
    pub fn score(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_node(k)?;
        let r = self.chol[k].solve(&(&self.pullback[k] - x));
        if !all_finite(r.as_slice()) {
            return Err(BridgeError::Numerical {
                node: k,
                message: "score is not finite".into(),
            });
        }
        Ok(r)
    }

    /// `tr(H̃(t_k) m)` without forming `H̃`.
    pub fn trace_curvature(&self, k: usize, m: &DMatrix<f64>) -> Result<f64> {
        self.check_node(k)?;
        Ok(self.chol[k].solve(m).trace())
    }

    /// `H̃(t_k)` as an explicit matrix; diagnostics only.
    pub fn curvature(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_node(k)?;
        Ok(self.chol[k].inverse())
    }

    /// `R̃(t_k, x)`, using `(v - μ)' K^{-1} (v - μ) = (v(s) - x)' H̃ (v(s) - x)`.
    pub fn log_density(&self, k: usize, x: &DVector<f64>) -> Result<f64> {
        let r = self.score(k, x)?;
        let d = x.len() as f64;
        let quad = (&self.pullback[k] - x).dot(&r);
        Ok(-0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * self.logdet_k[k] - 0.5 * quad)
    }
}

/// Free-function form of [`GuideCache::score`].
pub fn guide_score(cache: &GuideCache, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
    cache.score(k, x)
}
