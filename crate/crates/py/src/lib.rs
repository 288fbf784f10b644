//! Python bindings: `import bridgesim`.


use bridgesim::models;
use bridgesim::{BridgeError, DMatrix, DVector, RngSpec};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: BridgeError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn states(path: &bridgesim::Path) -> Vec<Vec<f64>> {
    (0..path.grid().nodes().len()).map(|k| path.state(k).iter().copied().collect()).collect()
}

/// Target diffusion `dX = b(t, X) dt + σ(t, X) dW`.
#[pyclass(name = "DiffusionModel", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel(bridgesim::DiffusionModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn brownian_with_drift(beta1: f64, sigma: f64) -> Self {
        Self(models::brownian_with_drift(beta1, sigma))
    }

    /// `b(x) = β₁ - β₂ sin(8x)`.
    #[staticmethod]
    fn sine_drift(beta1: f64, beta2: f64, sigma: f64) -> Self {
        Self(models::sine_drift(beta1, beta2, sigma))
    }

    #[staticmethod]
    fn ornstein_uhlenbeck(rate: f64, mean: f64, sigma: f64) -> PyResult<Self> {
        models::ornstein_uhlenbeck(rate, mean, sigma).map(Self).map_err(err)
    }

    /// Drift `Σ c_i x^i`.
    #[staticmethod]
    fn polynomial(coeffs: Vec<f64>, sigma: f64) -> PyResult<Self> {
        models::polynomial(coeffs, sigma).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn drift(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.0.drift(t, &DVector::from_vec(x)).map_err(err)?.iter().copied().collect())
    }

    fn diffusion(&self, t: f64, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.0.diffusion(t, &DVector::from_vec(x)).map_err(err)?))
    }

    /// Euler–Maruyama path on `grid` from `x0`; returns one state per node.
    #[pyo3(signature = (x0, grid, seed, stream = 0))]
    fn simulate(&self, py: Python<'_>, x0: Vec<f64>, grid: &PyGrid, seed: u64, stream: u64) -> PyResult<Vec<Vec<f64>>> {
        let x0 = DVector::from_vec(x0);
        let path = py.detach(|| bridgesim::euler_maruyama(&self.0, &x0, &grid.0, RngSpec::new(seed, stream))).map_err(err)?;
        Ok(states(&path))
    }
}

#[pyclass(name = "BridgeSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpec(bridgesim::BridgeSpec);

#[pymethods]
impl PySpec {
    #[new]
    fn new(start: Vec<f64>, end: Vec<f64>, horizon: f64) -> PyResult<Self> {
        bridgesim::BridgeSpec::new(DVector::from_vec(start), DVector::from_vec(end), horizon).map(Self).map_err(err)
    }

    #[staticmethod]
    fn scalar(start: f64, end: f64, horizon: f64) -> PyResult<Self> {
        bridgesim::BridgeSpec::scalar(start, end, horizon).map(Self).map_err(err)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon
    }

    fn __repr__(&self) -> String {
        format!("BridgeSpec(start={:?}, end={:?}, horizon={})", self.0.start.as_slice(), self.0.end.as_slice(), self.0.horizon)
    }
}

#[pyclass(name = "TimeGrid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(bridgesim::TimeGrid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(nodes: Vec<f64>) -> PyResult<Self> {
        bridgesim::TimeGrid::new(nodes).map(Self).map_err(err)
    }

    #[staticmethod]
    fn uniform(horizon: f64, steps: usize) -> PyResult<Self> {
        bridgesim::TimeGrid::uniform(horizon, steps).map(Self).map_err(err)
    }

    /// Nodes `s(2 - s/T)` for uniform `s`, dense near `T`.
    #[staticmethod]
    fn bridge(horizon: f64, steps: usize) -> PyResult<Self> {
        bridgesim::make_bridge_grid(horizon, steps).map(Self).map_err(err)
    }

    fn with_nodes(&self, extra: Vec<f64>) -> PyResult<Self> {
        self.0.with_nodes(&extra).map(Self).map_err(err)
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.0.nodes().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.nodes().len()
    }
}

/// Linear guide `dX̃ = (B(t) X̃ + β(t)) dt + σ̃(t) dW`.
#[pyclass(name = "LinearGuide", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGuide(bridgesim::LinearGuide);

#[pymethods]
impl PyGuide {
    #[staticmethod]
    fn constant(b: Vec<Vec<f64>>, beta: Vec<f64>, sigma: Vec<Vec<f64>>) -> PyResult<Self> {
        bridgesim::LinearGuide::constant(matrix(b)?, DVector::from_vec(beta), matrix(sigma)?).map(Self).map_err(err)
    }

    /// `dX̃ = θ dt + scale dW`.
    #[staticmethod]
    fn scalar_brownian(scale: f64, theta: f64) -> PyResult<Self> {
        bridgesim::LinearGuide::scalar_brownian(scale, theta).map(Self).map_err(err)
    }

    #[staticmethod]
    fn ornstein_uhlenbeck(rate: f64, mean: f64, sigma: f64) -> PyResult<Self> {
        models::ornstein_uhlenbeck_guide(rate, mean, sigma).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn as_model(&self) -> PyModel {
        PyModel(self.0.as_model())
    }

    /// Mean of `X̃_t` given `X̃_s = x`.
    fn mean(&self, s: f64, x: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let m = bridgesim::guide_mean(&self.0, s, &DVector::from_vec(x), t).map_err(err)?;
        Ok(m.iter().copied().collect())
    }

    fn covariance(&self, s: f64, t: f64) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&bridgesim::guide_covariance(&self.0, s, t).map_err(err)?))
    }

    /// `log p̃(s, x; T, v)`.
    fn log_density(&self, spec: &PySpec, s: f64, x: Vec<f64>) -> PyResult<f64> {
        bridgesim::guide_log_density(&self.0, &spec.0, s, &DVector::from_vec(x)).map_err(err)
    }
}

/// Sampled path with its log importance weight against the target bridge.
#[pyclass(name = "WeightedPath", frozen, get_all)]
struct PyWeightedPath {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    log_psi: f64,
    log_weight: f64,
    endpoint_mismatch: bool,
}

impl From<&bridgesim::WeightedPath> for PyWeightedPath {
    fn from(w: &bridgesim::WeightedPath) -> Self {
        Self {
            times: w.path.grid().nodes().to_vec(),
            states: states(&w.path),
            log_psi: w.log_psi,
            log_weight: w.log_weight(),
            endpoint_mismatch: w.endpoint_mismatch,
        }
    }
}

#[pymethods]
impl PyWeightedPath {
    fn __repr__(&self) -> String {
        format!("WeightedPath(nodes={}, log_weight={})", self.times.len(), self.log_weight)
    }
}

#[pyclass(name = "GuidedBridge", frozen, skip_from_py_object)]
struct PyBridge(bridgesim::GuidedBridge);

#[pymethods]
impl PyBridge {
    #[new]
    fn new(py: Python<'_>, model: &PyModel, guide: &PyGuide, spec: &PySpec, grid: &PyGrid) -> PyResult<Self> {
        py.detach(|| bridgesim::GuidedBridge::from_guide(model.0.clone(), &guide.0, &spec.0, &grid.0))
            .map(Self)
            .map_err(err)
    }

    /// Linear bridge whose guide is the model itself; all weights are equal.
    #[staticmethod]
    fn exact_linear(py: Python<'_>, guide: &PyGuide, spec: &PySpec, grid: &PyGrid) -> PyResult<Self> {
        py.detach(|| bridgesim::exact_linear_bridge(&guide.0, &spec.0, &grid.0)).map(Self).map_err(err)
    }

    #[getter]
    fn endpoint_mismatch(&self) -> bool {
        self.0.endpoint_mismatch()
    }

    #[pyo3(signature = (seed, stream = 0))]
    fn simulate(&self, py: Python<'_>, seed: u64, stream: u64) -> PyResult<PyWeightedPath> {
        let w = py.detach(|| self.0.simulate(RngSpec::new(seed, stream))).map_err(err)?;
        Ok(PyWeightedPath::from(&w))
    }

    /// `(log p̃(0, u; T, v), log ψ(T))` for a path given as one state per grid node.
    fn evaluate(&self, states: Vec<Vec<f64>>) -> PyResult<(f64, f64)> {
        let grid = self.0.grid().clone();
        let m = matrix(states)?;
        let path = bridgesim::Path::new(grid, m).map_err(err)?;
        self.0.evaluate(&path).map_err(err)
    }

    /// Independent proposals with self-normalized weights.
    #[pyo3(signature = (n, seed, stream = 0))]
    fn importance_sample(&self, py: Python<'_>, n: usize, seed: u64, stream: u64) -> PyResult<PyEnsemble> {
        py.detach(|| bridgesim::importance_ensemble(&self.0, n, RngSpec::new(seed, stream)))
            .map(PyEnsemble)
            .map_err(err)
    }

    /// Independence Metropolis–Hastings; returns a dict with the acceptance
    /// rate, the `log ψ` trace and every `thin`-th state.
    #[pyo3(signature = (n_iters, seed, thin = 1, stream = 0))]
    fn run_chain<'py>(&self, py: Python<'py>, n_iters: usize, seed: u64, thin: usize, stream: u64) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let chain = py.detach(|| bridgesim::run_chain(&self.0, n_iters, RngSpec::new(seed, stream), thin)).map_err(err)?;
        let out = pyo3::types::PyDict::new(py);
        out.set_item("iterations", chain.iterations)?;
        out.set_item("accepted", chain.accepted)?;
        out.set_item("acceptance_rate", chain.acceptance_rate)?;
        out.set_item("log_psi_trace", chain.log_psi_trace)?;
        let paths: Vec<PyWeightedPath> = chain.paths.iter().map(PyWeightedPath::from).collect();
        out.set_item("paths", paths)?;
        Ok(out)
    }
}

#[pyclass(name = "WeightedEnsemble", frozen, skip_from_py_object)]
struct PyEnsemble(bridgesim::WeightedEnsemble);

#[pymethods]
impl PyEnsemble {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn ess(&self) -> f64 {
        bridgesim::effective_sample_size(&self.0)
    }

    #[getter]
    fn log_weights(&self) -> Vec<f64> {
        self.0.log_weights.clone()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.normalized_weights()
    }

    /// `(values, normalized weights)` of coordinate `coord` at node `k`.
    #[pyo3(signature = (k, coord = 0))]
    fn marginal(&self, k: usize, coord: usize) -> (Vec<f64>, Vec<f64>) {
        self.0.marginal(k, coord)
    }

    /// `(mean, standard error)` of coordinate `coord` at node `k`.
    #[pyo3(signature = (k, coord = 0))]
    fn weighted_mean(&self, k: usize, coord: usize) -> (f64, f64) {
        self.0.weighted_mean(k, coord)
    }

    fn path(&self, i: usize) -> PyResult<PyWeightedPath> {
        self.0.samples.get(i).map(PyWeightedPath::from).ok_or_else(|| PyValueError::new_err("path index out of range"))
    }
}

fn scalar_problem(model: &PyModel, scale: f64, spec: &PySpec, grid: &PyGrid) -> bridgesim::ThetaProblem {
    bridgesim::ThetaProblem::new(model.0.clone(), models::drift_guide_family(scale), spec.0.clone(), grid.0.clone())
}

/// Stochastic-gradient tuning of the drift θ of `dX̃ = θ dt + scale dW`.
/// Returns the θ trace, starting with `theta0`.
#[pyfunction]
#[pyo3(signature = (model, scale, spec, grid, theta0, seed, n_outer = 1000, batch_size = 1, inner_steps = 1, alpha0 = 0.1, gamma = 5.0))]
#[allow(clippy::too_many_arguments)]
fn tune_theta(
    py: Python<'_>,
    model: &PyModel,
    scale: f64,
    spec: &PySpec,
    grid: &PyGrid,
    theta0: f64,
    seed: u64,
    n_outer: usize,
    batch_size: usize,
    inner_steps: usize,
    alpha0: f64,
    gamma: f64,
) -> PyResult<Vec<f64>> {
    let problem = scalar_problem(model, scale, spec, grid);
    let mut cfg = bridgesim::TunerConfig::new(DVector::from_element(1, theta0));
    cfg.n_outer = n_outer;
    cfg.batch_size = batch_size;
    cfg.inner_steps = inner_steps;
    cfg.decay = bridgesim::Decay::Harmonic { alpha0, gamma };
    let trace = py.detach(|| problem.run_tuner(&cfg, RngSpec::from_seed(seed))).map_err(err)?;
    Ok(trace.thetas.iter().map(|t| t[0]).collect())
}

/// Divergence from the target bridge to drift guides over `thetas`; returns
/// `(theta, kl, std_err, ess)` rows.
#[pyfunction]
#[pyo3(signature = (model, scale, spec, grid, thetas, n_paths, theta_ref, seed))]
#[allow(clippy::too_many_arguments)]
fn kl_scan(
    py: Python<'_>,
    model: &PyModel,
    scale: f64,
    spec: &PySpec,
    grid: &PyGrid,
    thetas: Vec<f64>,
    n_paths: usize,
    theta_ref: f64,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let problem = scalar_problem(model, scale, spec, grid);
    let grid_theta: Vec<DVector<f64>> = thetas.iter().map(|&t| DVector::from_element(1, t)).collect();
    let reference = DVector::from_element(1, theta_ref);
    let scan = py
        .detach(|| problem.kl_scan(&grid_theta, n_paths, &reference, RngSpec::from_seed(seed)))
        .map_err(err)?;
    if let Some(w) = &scan.warning {
        pyo3::PyErr::warn(py, &py.get_type::<pyo3::exceptions::PyRuntimeWarning>(), &std::ffi::CString::new(w.as_str()).unwrap_or_default(), 1)?;
    }
    Ok(scan.points.iter().map(|p| (p.theta, p.kl, p.std_err, p.ess)).collect())
}

/// Drift-pulled bridge paths, with (`keep_drift`) or without the model drift.
#[pyfunction]
#[pyo3(signature = (model, spec, grid, seed, keep_drift = true, stream = 0))]
fn pulled_bridge(model: &PyModel, spec: &PySpec, grid: &PyGrid, seed: u64, keep_drift: bool, stream: u64) -> PyResult<Vec<Vec<f64>>> {
    let rng = RngSpec::new(seed, stream);
    let path = if keep_drift {
        bridgesim::simulate_delyon_hu_full(&model.0, &spec.0, &grid.0, rng)
    } else {
        bridgesim::simulate_delyon_hu_nodrift(&model.0, &spec.0, &grid.0, rng)
    };
    Ok(states(&path.map_err(err)?))
}

/// Forward paths kept when they end within `epsilon` of the endpoint.
/// Returns the kept paths and the acceptance fraction.
#[pyfunction]
#[pyo3(signature = (model, spec, grid, epsilon, n_target, max_forward, seed))]
#[allow(clippy::too_many_arguments)]
fn rejection_bridge_sample(
    py: Python<'_>,
    model: &PyModel,
    spec: &PySpec,
    grid: &PyGrid,
    epsilon: f64,
    n_target: usize,
    max_forward: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<Vec<f64>>>, f64)> {
    let sample = py
        .detach(|| bridgesim::rejection_bridge_sample(&model.0, &spec.0, &grid.0, epsilon, n_target, max_forward, RngSpec::from_seed(seed)))
        .map_err(err)?;
    Ok((sample.paths.iter().map(states).collect(), sample.acceptance_fraction))
}

/// Distance between two weighted samples on the line.
#[pyfunction]
fn wasserstein1(xs: Vec<f64>, wx: Vec<f64>, ys: Vec<f64>, wy: Vec<f64>) -> PyResult<f64> {
    bridgesim::wasserstein1(&xs, &wx, &ys, &wy).map_err(err)
}

#[pyfunction]
fn make_bridge_grid(horizon: f64, steps: usize) -> PyResult<PyGrid> {
    PyGrid::bridge(horizon, steps)
}

#[pymodule]
#[pyo3(name = "bridgesim")]
fn bridgesim_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PySpec>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyGuide>()?;
    m.add_class::<PyWeightedPath>()?;
    m.add_class::<PyBridge>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(make_bridge_grid, m)?)?;
    m.add_function(wrap_pyfunction!(tune_theta, m)?)?;
    m.add_function(wrap_pyfunction!(kl_scan, m)?)?;
    m.add_function(wrap_pyfunction!(pulled_bridge, m)?)?;
    m.add_function(wrap_pyfunction!(rejection_bridge_sample, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    m.add("TUNED_THETA", models::SineExample::TUNED_THETA)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
