//! Diffusion models, bridge endpoints, time grids, paths and the
//! Euler–Maruyama integrator.
//!
//! Randomness enters only through [`RngSpec`]: every simulation routine takes
//! a `(seed, stream)` pair and derives a ChaCha8 generator from it, so any
//! path can be regenerated on its own without replaying a shared generator.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, BridgeError, Result};

pub type DriftFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type DispersionFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Target SDE `dX = b(t, X) dt + σ(t, X) dW` with `X ∈ R^d`, `W ∈ R^d'`.
#[derive(Clone)]
pub struct DiffusionModel {
    dim: usize,
    noise_dim: usize,
    drift: DriftFn,
    dispersion: DispersionFn,
}

impl fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .finish_non_exhaustive()
    }
}

impl DiffusionModel {
    pub fn new<B, S>(dim: usize, noise_dim: usize, drift: B, dispersion: S) -> Result<Self>
    where
        B: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        S: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if dim == 0 || noise_dim == 0 {
            return invalid("state and noise dimensions must be positive");
        }
        Ok(Self {
            dim,
            noise_dim,
            drift: Arc::new(drift),
            dispersion: Arc::new(dispersion),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// Drift `b(t, x)`; non-finite output is an error.
    pub fn drift(&self, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let b = (self.drift)(t, x);
        if b.len() != self.dim {
            return invalid(format!("drift returned length {}, expected {}", b.len(), self.dim));
        }
        if !all_finite(b.as_slice()) {
            return Err(non_finite("drift", t, x));
        }
        Ok(b)
    }

    /// Dispersion `σ(t, x)`, a `d × d'` matrix.
    pub fn dispersion(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let s = (self.dispersion)(t, x);
        if s.shape() != (self.dim, self.noise_dim) {
            return invalid(format!(
                "dispersion returned shape {:?}, expected ({}, {})",
                s.shape(),
                self.dim,
                self.noise_dim
            ));
        }
        if !all_finite(s.as_slice()) {
            return Err(non_finite("dispersion", t, x));
        }
        Ok(s)
    }

    /// Diffusion matrix `a = σσ'`.
    pub fn diffusion(&self, t: f64, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let s = self.dispersion(t, x)?;
        Ok(outer_self(&s))
    }
}

/// `σσ'`, exactly symmetric.
pub(crate) fn outer_self(s: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = s * s.transpose();
    symmetrize(&mut a);
    debug_assert!(max_asymmetry(&a) <= 1e-12);
    a
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub(crate) fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn non_finite(what: &'static str, t: f64, x: &DVector<f64>) -> BridgeError {
    BridgeError::NonFinite {
        what,
        t,
        state: x.iter().copied().collect(),
    }
}

/// Start point `u` at time 0, endpoint `v` at horizon `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSpec {
    pub start: DVector<f64>,
    pub end: DVector<f64>,
    pub horizon: f64,
}

impl BridgeSpec {
    pub fn new(start: DVector<f64>, end: DVector<f64>, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return invalid(format!("horizon must be positive and finite, got {horizon}"));
        }
        if start.len() != end.len() || start.is_empty() {
            return invalid("start and end must be non-empty and of equal length");
        }
        if !all_finite(start.as_slice()) || !all_finite(end.as_slice()) {
            return invalid("start and end must be finite");
        }
        Ok(Self { start, end, horizon })
    }

    pub fn scalar(start: f64, end: f64, horizon: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, start), DVector::from_element(1, end), horizon)
    }

    pub fn dim(&self) -> usize {
        self.start.len()
    }
}

/// Strictly increasing nodes `0 = t_0 < … < t_N = T` with `N ≥ 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Arc<[f64]>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return invalid(format!("a grid needs at least 2 steps, got {}", nodes.len().saturating_sub(1)));
        }
        if nodes[0] != 0.0 {
            return invalid(format!("grid must start at 0, got {}", nodes[0]));
        }
        if !all_finite(&nodes) {
            return invalid("grid nodes must be finite");
        }
        if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
            return invalid(format!("grid not strictly increasing at {} -> {}", w[0], w[1]));
        }
        Ok(Self { nodes: nodes.into() })
    }

    /// Equidistant nodes `kT/N`.
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        check_grid_args(horizon, steps)?;
        let mut nodes: Vec<f64> = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
        nodes[steps] = horizon;
        Self::new(nodes)
    }

    /// Time-changed grid `t_k = τ(kT/N)` with `τ(s) = s(2 - s/T)`.
    pub fn bridge(horizon: f64, steps: usize) -> Result<Self> {
        make_bridge_grid(horizon, steps)
    }

    /// Returns a grid with `extra` times merged in (duplicates ignored).
    pub fn with_nodes(&self, extra: &[f64]) -> Result<Self> {
        let t_end = self.horizon();
        let mut nodes: Vec<f64> = self.nodes.to_vec();
        for &t in extra {
            if !(t > 0.0 && t < t_end) {
                return invalid(format!("inserted node {t} outside (0, {t_end})"));
            }
            if self.index_of(t).is_none() {
                nodes.push(t);
            }
        }
        nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite nodes"));
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn time(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    /// Step length `t_{k+1} - t_k`.
    pub fn step(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn increments(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the node equal to `t` up to a relative tolerance of 1e-12.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let pos = self.nodes.partition_point(|&s| s < t - tol);
        (pos < self.nodes.len() && (self.nodes[pos] - t).abs() <= tol).then_some(pos)
    }
}

fn check_grid_args(horizon: f64, steps: usize) -> Result<()> {
    if steps < 2 {
        return invalid(format!("step count must be at least 2, got {steps}"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return invalid(format!("horizon must be positive and finite, got {horizon}"));
    }
    Ok(())
}

/// Bridge grid `t_k = τ(s_k)`, `s_k = kT/N`, `τ(s) = s(2 - s/T)`.
///
/// Spacing shrinks linearly towards `T`; the last step has length `T/N²`.
pub fn make_bridge_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    check_grid_args(horizon, steps)?;
    let mut nodes: Vec<f64> = (0..=steps)
        .map(|k| {
            let s = horizon * k as f64 / steps as f64;
            s * (2.0 - s / horizon)
        })
        .collect();
    nodes[steps] = horizon;
    TimeGrid::new(nodes)
}

/// Discretized trajectory; row `k` of `states` is the state at `grid.time(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    states: DMatrix<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, states: DMatrix<f64>) -> Result<Self> {
        if states.nrows() != grid.nodes().len() {
            return invalid(format!(
                "path has {} rows for {} grid nodes",
                states.nrows(),
                grid.nodes().len()
            ));
        }
        if !all_finite(states.as_slice()) {
            return invalid("path states must be finite");
        }
        Ok(Self { grid, states })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }

    pub fn terminal(&self) -> DVector<f64> {
        self.state(self.grid.steps())
    }

    /// Coordinate `i` of the state at node `k`.
    pub fn coord(&self, k: usize, i: usize) -> f64 {
        self.states[(k, i)]
    }
}

/// Seed plus stream id; the pair fully determines a random sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Independent child stream, e.g. one per path of an ensemble.
    pub fn child(&self, index: u64) -> RngSpec {
        RngSpec {
            seed: splitmix64(self.seed ^ splitmix64(self.stream.wrapping_add(0x5851_f42d_4c95_7f2d))),
            stream: index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Brownian increments for the given step lengths: row `k` is
/// `Normal(0, Δ_k I_{d'})`.
pub fn sample_brownian_increments(steps: &[f64], noise_dim: usize, rng: RngSpec) -> Result<DMatrix<f64>> {
    if let Some(&dt) = steps.iter().find(|&&dt| !(dt >= 0.0 && dt.is_finite())) {
        return invalid(format!("step lengths must be non-negative, got {dt}"));
    }
    let mut gen = rng.rng();
    let mut out = DMatrix::zeros(steps.len(), noise_dim);
    for (k, &dt) in steps.iter().enumerate() {
        let sd = dt.sqrt();
        for j in 0..noise_dim {
            let z: f64 = StandardNormal.sample(&mut gen);
            out[(k, j)] = sd * z;
        }
    }
    Ok(out)
}

/// Explicit Euler–Maruyama on `grid`, drift and dispersion evaluated at the
/// left end of each step.
pub fn euler_maruyama(model: &DiffusionModel, x0: &DVector<f64>, grid: &TimeGrid, rng: RngSpec) -> Result<Path> {
    let incs = sample_brownian_increments(&grid.increments(), model.noise_dim(), rng)?;
    euler_maruyama_with_increments(model, x0, grid, &incs)
}

/// Euler–Maruyama driven by caller-supplied increments (`N × d'`).
pub fn euler_maruyama_with_increments(
    model: &DiffusionModel,
    x0: &DVector<f64>,
    grid: &TimeGrid,
    increments: &DMatrix<f64>,
) -> Result<Path> {
    integrate(x0, grid, increments, model.dim(), model.noise_dim(), |t, x| {
        Ok((model.drift(t, x)?, model.dispersion(t, x)?))
    })
}

/// Shared stepping loop: `coeffs(t, x)` returns drift and dispersion.
pub(crate) fn integrate<F>(
    x0: &DVector<f64>,
    grid: &TimeGrid,
    increments: &DMatrix<f64>,
    dim: usize,
    noise_dim: usize,
    mut coeffs: F,
) -> Result<Path>
where
    F: FnMut(f64, &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let n = grid.steps();
    if x0.len() != dim {
        return invalid(format!("initial state has length {}, model dimension is {dim}", x0.len()));
    }
    if increments.shape() != (n, noise_dim) {
        return invalid(format!(
            "increments have shape {:?}, expected ({n}, {noise_dim})",
            increments.shape()
        ));
    }
    let mut states = DMatrix::zeros(n + 1, dim);
    let mut x = x0.clone();
    states.set_row(0, &x.transpose());
    for k in 0..n {
        let t = grid.time(k);
        let dt = grid.step(k);
        let (b, s) = coeffs(t, &x)?;
        let dw = increments.row(k).transpose();
        x += b * dt + s * dw;
        if !all_finite(x.as_slice()) {
            return Err(non_finite("state", grid.time(k + 1), &x));
        }
        states.set_row(k + 1, &x.transpose());
    }
    Path::new(grid.clone(), states)
}

impl DiffusionModel {
    /// The same model with time measured from `offset`: `b'(t, x) = b(t + offset, x)`.
    pub fn shifted(&self, offset: f64) -> DiffusionModel {
        let drift = self.drift.clone();
        let disp = self.dispersion.clone();
        DiffusionModel {
            dim: self.dim,
            noise_dim: self.noise_dim,
            drift: Arc::new(move |t, x| drift(t + offset, x)),
            dispersion: Arc::new(move |t, x| disp(t + offset, x)),
        }
    }
}
