//! Guided proposals `dX° = b°(t, X°) dt + σ(t, X°) dW` with
//! `b° = b + a r̃`, and the log-weight `log ψ(T) = ∫_0^T G(s, X°_s) ds`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, BridgeError, Result};
use crate::linear::{build_guide_cache, GuideCache, LinearGuide};
use crate::sde::{all_finite, outer_self, sample_brownian_increments, BridgeSpec, DiffusionModel, Path, RngSpec, TimeGrid};

/// A proposal path together with its log-weight terms.
///
/// `exp(log_ptilde0 + log_psi) / p(0, u; T, v)` is the likelihood ratio of the
/// target bridge against the proposal, evaluated at `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    pub path: Path,
    pub log_psi: f64,
    pub log_ptilde0: f64,
    /// Set when `ã(T) ≠ a(T, v)`; the weight is then not a valid density ratio.
    pub endpoint_mismatch: bool,
}

impl WeightedPath {
    /// `log p̃(0, u; T, v) + log ψ(T)`.
    pub fn log_weight(&self) -> f64 {
        self.log_ptilde0 + self.log_psi
    }
}

/// Target model paired with a prepared guide cache.
#[derive(Debug, Clone)]
pub struct GuidedBridge {
    model: DiffusionModel,
    cache: Arc<GuideCache>,
    endpoint_mismatch: bool,
}

/// Relative tolerance for `ã(T) = a(T, v)`.
const ENDPOINT_MATCH_TOL: f64 = 1e-9;

impl GuidedBridge {
    pub fn new(model: DiffusionModel, cache: Arc<GuideCache>) -> Result<Self> {
        let guide = cache.guide();
        if model.dim() != guide.dim() {
            return invalid(format!(
                "model dimension {} does not match guide dimension {}",
                model.dim(),
                guide.dim()
            ));
        }
        let spec = cache.spec();
        let a_end = model.diffusion(spec.horizon, &spec.end)?;
        let at_end = guide.diffusion(spec.horizon);
        let scale = a_end.amax().max(1.0);
        let endpoint_mismatch = (&a_end - &at_end).amax() > ENDPOINT_MATCH_TOL * scale;
        if endpoint_mismatch {
            log::warn!(
                "guide diffusion at T differs from the model's a(T, v) (max abs diff {:e}); \
                 proposal and target bridge laws are not equivalent",
                (&a_end - &at_end).amax()
            );
        }
        Ok(Self {
            model,
            cache,
            endpoint_mismatch,
        })
    }

    /// Builds the guide cache and pairs it with `model`.
    pub fn from_guide(model: DiffusionModel, guide: &LinearGuide, spec: &BridgeSpec, grid: &TimeGrid) -> Result<Self> {
        let cache = build_guide_cache(guide, spec, grid)?;
        Self::new(model, Arc::new(cache))
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    pub fn cache(&self) -> &GuideCache {
        &self.cache
    }

    pub fn shared_cache(&self) -> Arc<GuideCache> {
        self.cache.clone()
    }

    pub fn guide(&self) -> &LinearGuide {
        self.cache.guide()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.cache.grid()
    }

    pub fn spec(&self) -> &BridgeSpec {
        self.cache.spec()
    }

    pub fn endpoint_mismatch(&self) -> bool {
        self.endpoint_mismatch
    }

    /// `b°(t_k, x) = b(t_k, x) + a(t_k, x) r̃(t_k, x)`.
    pub fn drift(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.node_terms(k, x)?.drift)
    }

    /// `G(t_k, x)`.
    pub fn g_functional(&self, k: usize, x: &DVector<f64>) -> Result<f64> {
        Ok(self.node_terms(k, x)?.g)
    }

    fn node_terms(&self, k: usize, x: &DVector<f64>) -> Result<NodeTerms> {
        let t = self.grid().time(k);
        let r = self.cache.score(k, x)?;
        let b = self.model.drift(t, x)?;
        let sigma = self.model.dispersion(t, x)?;
        let a = outer_self(&sigma);
        let drift = &b + &a * &r;

        let bt = self.cache.guide_drift(k, x);
        let mut g = (&b - &bt).dot(&r);
        let da: DMatrix<f64> = &a - self.cache.guide_diffusion(k);
        if da.iter().any(|&e| e != 0.0) {
            // tr[(a - ã)(H̃ - r̃ r̃')] = tr(H̃ (a - ã)) - r̃'(a - ã) r̃
            let tr = self.cache.trace_curvature(k, &da)?;
            g -= 0.5 * (tr - r.dot(&(&da * &r)));
        }
        if !g.is_finite() || !all_finite(drift.as_slice()) {
            return Err(BridgeError::Numerical {
                node: k,
                message: format!("non-finite guided drift or G at t = {t}"),
            });
        }
        Ok(NodeTerms { drift, sigma, g })
    }

    /// Simulates one proposal bridge with its weight.
    pub fn simulate(&self, rng: RngSpec) -> Result<WeightedPath> {
        let incs = sample_brownian_increments(&self.grid().increments(), self.model.noise_dim(), rng)?;
        self.simulate_with_increments(&incs)
    }

    /// Euler–Maruyama under `b°` on nodes `0..N-1`, the state at `t_N` pinned
    /// to `v`, and `log ψ(T)` as the left Riemann sum of `G` over the same
    /// nodes. Row `N-1` of `increments` is not used.
    pub fn simulate_with_increments(&self, increments: &DMatrix<f64>) -> Result<WeightedPath> {
        let grid = self.grid();
        let spec = self.spec();
        let n = grid.steps();
        let d = self.model.dim();
        if increments.shape() != (n, self.model.noise_dim()) {
            return invalid(format!(
                "increments have shape {:?}, expected ({n}, {})",
                increments.shape(),
                self.model.noise_dim()
            ));
        }
        let mut states = DMatrix::zeros(n + 1, d);
        let mut x = spec.start.clone();
        states.set_row(0, &x.transpose());
        let mut log_psi = 0.0;
        for k in 0..n {
            let terms = self.node_terms(k, &x)?;
            let dt = grid.step(k);
            log_psi += terms.g * dt;
            if k + 1 < n {
                x += terms.drift * dt + terms.sigma * increments.row(k).transpose();
                if !all_finite(x.as_slice()) {
                    return Err(BridgeError::Numerical {
                        node: k + 1,
                        message: "proposal state is not finite".into(),
                    });
                }
                states.set_row(k + 1, &x.transpose());
            }
        }
        states.set_row(n, &spec.end.transpose());
        if !log_psi.is_finite() {
            return Err(BridgeError::Numerical {
                node: n,
                message: "log ψ is not finite".into(),
            });
        }
        Ok(WeightedPath {
            path: Path::new(grid.clone(), states)?,
            log_psi,
            log_ptilde0: self.cache.log_density(0, &spec.start)?,
            endpoint_mismatch: self.endpoint_mismatch,
        })
    }

    /// `(log p̃(0, u), log ψ(T))` recomputed along a fixed path on this grid.
    pub fn evaluate(&self, path: &Path) -> Result<(f64, f64)> {
        let grid = self.grid();
        if path.grid() != grid {
            return invalid("path grid differs from the guide cache grid");
        }
        let mut log_psi = 0.0;
        for k in 0..grid.steps() {
            log_psi += self.g_functional(k, &path.state(k))? * grid.step(k);
        }
        Ok((self.cache.log_density(0, &self.spec().start)?, log_psi))
    }
}

struct NodeTerms {
    drift: DVector<f64>,
    sigma: DMatrix<f64>,
    g: f64,
}

/// `b°(t_k, x)` for `model` guided by `cache`.
pub fn guided_drift(model: &DiffusionModel, cache: &Arc<GuideCache>, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
    GuidedBridge::new(model.clone(), cache.clone())?.drift(k, x)
}

/// `G(t_k, x)` for `model` guided by `cache`.
pub fn g_functional(model: &DiffusionModel, cache: &Arc<GuideCache>, k: usize, x: &DVector<f64>) -> Result<f64> {
    GuidedBridge::new(model.clone(), cache.clone())?.g_functional(k, x)
}

/// One guided proposal bridge with its log-weight.
pub fn simulate_guided_bridge(model: &DiffusionModel, cache: &Arc<GuideCache>, rng: RngSpec) -> Result<WeightedPath> {
    GuidedBridge::new(model.clone(), cache.clone())?.simulate(rng)
}
