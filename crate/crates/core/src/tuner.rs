//! Information projection of the guide parameter θ: stochastic-gradient
//! descent on `D_KL(P* ‖ P°_θ)` and a direct scan of that divergence over a
//! θ grid.
//!
//! Both rest on the path functional `h_θ(X) = log p̃_θ(0,u) + log ψ_θ(T)(X)`,
//! which satisfies `dP*/dP°_θ (X) = exp(h_θ(X)) / p(0,u)`. Since
//! `E_{P°_θ}[exp h_θ] = p(0,u)`, the unknown constant is estimated from the
//! same proposals.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{invalid, BridgeError, Result};
use crate::guided::{GuidedBridge, WeightedPath};
use crate::linear::LinearGuide;
use crate::sde::{BridgeSpec, DiffusionModel, RngSpec, TimeGrid};

pub type GuideFamily = Arc<dyn Fn(&DVector<f64>) -> Result<LinearGuide> + Send + Sync>;

/// Step sizes `α(n, k)`.
#[derive(Clone)]
pub enum Decay {
    /// `α(n, k) = α₀ γ / (γ + n)`, constant in `k`.
    Harmonic { alpha0: f64, gamma: f64 },
    Custom(Arc<dyn Fn(usize, usize) -> f64 + Send + Sync>),
}

impl fmt::Debug for Decay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decay::Harmonic { alpha0, gamma } => write!(f, "Harmonic {{ alpha0: {alpha0}, gamma: {gamma} }}"),
            Decay::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Default for Decay {
    /// `α₀ = 0.1`, `γ = 5`, i.e. `α_n = 1/(10 + 2n)`.
    fn default() -> Self {
        Decay::Harmonic { alpha0: 0.1, gamma: 5.0 }
    }
}

impl Decay {
    pub fn rate(&self, n: usize, k: usize) -> f64 {
        match self {
            Decay::Harmonic { alpha0, gamma } => alpha0 * gamma / (gamma + n as f64),
            Decay::Custom(f) => f(n, k),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TunerConfig {
    pub theta0: DVector<f64>,
    /// Proposals per outer iteration (`M`).
    pub batch_size: usize,
    /// Gradient steps per batch (`K`).
    pub inner_steps: usize,
    pub decay: Decay,
    pub n_outer: usize,
    /// Finite-difference step; `None` means `1e-4 (1 + |θ_i|)`.
    pub fd_step: Option<f64>,
    /// Largest log importance ratio admitted in a gradient; larger ones are
    /// clamped and the step is flagged.
    pub max_log_ratio: f64,
}

impl TunerConfig {
    pub fn new(theta0: DVector<f64>) -> Self {
        Self {
            theta0,
            batch_size: 1,
            inner_steps: 1,
            decay: Decay::default(),
            n_outer: 1000,
            fd_step: None,
            max_log_ratio: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta0.is_empty() || self.theta0.iter().any(|t| !t.is_finite()) {
            return invalid("theta0 must be a non-empty finite vector");
        }
        if self.batch_size == 0 || self.inner_steps == 0 {
            return invalid("batch size and inner steps must be at least 1");
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0 && h.is_finite()) {
                return invalid(format!("fd_step must be positive, got {h}"));
            }
        }
        for n in 1..=self.n_outer.clamp(1, 10_000) {
            let a = self.decay.rate(n, 1);
            if !(a > 0.0 && a.is_finite()) || (n > 1 && a > self.decay.rate(n - 1, 1)) {
                return invalid(format!("decay must be positive and non-increasing in n (fails at n = {n})"));
            }
        }
        Ok(())
    }

    fn fd_step_for(&self, theta_i: f64) -> f64 {
        self.fd_step.unwrap_or(1e-4 * (1.0 + theta_i.abs()))
    }
}

/// Running `log(mean(exp(x_i)))`.
#[derive(Debug, Clone, Default)]
struct LogMeanExp {
    max: f64,
    scaled_sum: f64,
    count: usize,
}

impl LogMeanExp {
    fn push(&mut self, x: f64) {
        if self.count == 0 {
            self.max = x;
            self.scaled_sum = 1.0;
        } else if x > self.max {
            self.scaled_sum = self.scaled_sum * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled_sum += (x - self.max).exp();
        }
        self.count += 1;
    }

    fn value(&self) -> f64 {
        self.max + (self.scaled_sum / self.count as f64).ln()
    }
}

/// Outcome of one gradient step.
#[derive(Debug, Clone)]
pub struct GradientStep {
    pub theta: DVector<f64>,
    /// `dP°_θ / dP°_{θ_n}` per path, before the step.
    pub reweights: Vec<f64>,
    pub gradient: DVector<f64>,
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct TunerTrace {
    /// `θ₀` followed by θ after each outer iteration.
    pub thetas: Vec<DVector<f64>>,
    pub clamped_steps: usize,
    /// Final estimate of `log p(0, u; T, v)`.
    pub log_p_hat: f64,
}

impl TunerTrace {
    /// Mean of coordinate `i` over the last `fraction` of the trace.
    pub fn tail_mean(&self, i: usize, fraction: f64) -> f64 {
        let n = self.thetas.len();
        let start = n - ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        let tail = &self.thetas[start..];
        tail.iter().map(|t| t[i]).sum::<f64>() / tail.len() as f64
    }
}

/// One point of a divergence scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlPoint {
    pub theta: f64,
    pub kl: f64,
    pub std_err: f64,
    /// ESS of the reference weights used for this point.
    pub ess: f64,
}

#[derive(Debug, Clone)]
pub struct KlScan {
    pub points: Vec<KlPoint>,
    pub log_p_hat: f64,
    pub reference_ess: f64,
    pub warning: Option<String>,
}

impl KlScan {
    pub fn argmin(&self) -> KlPoint {
        *self
            .points
            .iter()
            .min_by(|a, b| a.kl.total_cmp(&b.kl))
            .expect("scan has at least one point")
    }
}

/// Target model, guide family and grid shared by tuning and scanning.
#[derive(Clone)]
pub struct ThetaProblem {
    pub model: DiffusionModel,
    pub family: GuideFamily,
    pub spec: BridgeSpec,
    pub grid: TimeGrid,
}

impl fmt::Debug for ThetaProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ThetaProblem")
            .field("model", &self.model)
            .field("spec", &self.spec)
            .field("steps", &self.grid.steps())
            .finish_non_exhaustive()
    }
}

impl ThetaProblem {
    pub fn new(model: DiffusionModel, family: GuideFamily, spec: BridgeSpec, grid: TimeGrid) -> Self {
        Self { model, family, spec, grid }
    }

    /// Guided bridge with a cache built for `theta`.
    pub fn bridge(&self, theta: &DVector<f64>) -> Result<GuidedBridge> {
        let guide = (self.family)(theta)?.with_theta(theta.clone());
        GuidedBridge::from_guide(self.model.clone(), &guide, &self.spec, &self.grid)
    }

    /// `h_θ(X)` for each path.
    pub fn log_h(&self, theta: &DVector<f64>, paths: &[&WeightedPath]) -> Result<Vec<f64>> {
        let bridge = self.bridge(theta)?;
        paths
            .iter()
            .map(|p| bridge.evaluate(&p.path).map(|(a, b)| a + b))
            .collect()
    }

    /// Central finite-difference `∇_θ h_θ(X)` per path.
    pub fn grad_log_h(&self, theta: &DVector<f64>, paths: &[&WeightedPath], cfg: &TunerConfig) -> Result<Vec<DVector<f64>>> {
        let p = theta.len();
        let mut grads = vec![DVector::zeros(p); paths.len()];
        for i in 0..p {
            let h = cfg.fd_step_for(theta[i]);
            let mut up = theta.clone();
            up[i] += h;
            let mut down = theta.clone();
            down[i] -= h;
            let hu = self.log_h(&up, paths)?;
            let hd = self.log_h(&down, paths)?;
            for (g, (a, b)) in grads.iter_mut().zip(hu.iter().zip(&hd)) {
                g[i] = (a - b) / (2.0 * h);
            }
        }
        Ok(grads)
    }

    /// One descent step on `D_KL(P* ‖ P°_θ)` from proposals drawn under `θ_n`:
    ///
    /// ```text
    /// θ ← θ - α(n,k) (1/M) Σ_m [dP°_θ/dP°_{θ_n}] [dP*/dP°_θ] ∇_θ log(dP*/dP°_θ)   at X°(m)
    /// ```
    ///
    /// with `dP°_θ/dP°_{θ_n} = exp(h_{θ_n} - h_θ)` and
    /// `dP*/dP°_θ = exp(h_θ - log p̂)`.
    #[allow(clippy::too_many_arguments)]
    pub fn theta_gradient_step(
        &self,
        theta: &DVector<f64>,
        theta_n: &DVector<f64>,
        batch: &[WeightedPath],
        log_p_hat: f64,
        cfg: &TunerConfig,
        n: usize,
        k: usize,
    ) -> Result<GradientStep> {
        if batch.is_empty() {
            return invalid("gradient step needs a non-empty batch");
        }
        let refs: Vec<&WeightedPath> = batch.iter().collect();
        let h_ref: Vec<f64> = batch.iter().map(|p| p.log_weight()).collect();
        let h_now = if theta == theta_n { h_ref.clone() } else { self.log_h(theta, &refs)? };
        let reweights: Vec<f64> = h_ref.iter().zip(&h_now).map(|(r, c)| (r - c).exp()).collect();
        let grads = self.grad_log_h(theta, &refs, cfg)?;

        let mut clamped = false;
        let mut gradient = DVector::zeros(theta.len());
        for m in 0..batch.len() {
            // log of reweight × target ratio
            let mut log_factor = (h_ref[m] - h_now[m]) + (h_now[m] - log_p_hat);
            if log_factor > cfg.max_log_ratio {
                log_factor = cfg.max_log_ratio;
                clamped = true;
            }
            gradient += &grads[m] * log_factor.exp();
        }
        gradient /= batch.len() as f64;
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(BridgeError::Numerical {
                node: 0,
                message: "θ-gradient is not finite".into(),
            });
        }
        let theta_new = theta - &gradient * cfg.decay.rate(n, k);
        Ok(GradientStep {
            theta: theta_new,
            reweights,
            gradient,
            clamped,
        })
    }

    /// Outer iteration `n = 1, 2, …`: fix `θ_n = θ`, draw `M` proposals under
    /// `θ_n` (streams `rng.child(n).child(m)`), take `K` gradient steps.
    pub fn run_tuner(&self, cfg: &TunerConfig, rng: RngSpec) -> Result<TunerTrace> {
        cfg.validate()?;
        let mut theta = cfg.theta0.clone();
        let mut thetas = vec![theta.clone()];
        let mut p_hat = LogMeanExp::default();
        let mut clamped_steps = 0;
        for n in 1..=cfg.n_outer {
            let theta_n = theta.clone();
            let bridge = self.bridge(&theta_n)?;
            let outer = rng.child(n as u64);
            let batch = (0..cfg.batch_size as u64)
                .into_par_iter()
                .map(|m| bridge.simulate(outer.child(m)))
                .collect::<Result<Vec<_>>>()?;
            for p in &batch {
                p_hat.push(p.log_weight());
            }
            for k in 1..=cfg.inner_steps {
                let step = self.theta_gradient_step(&theta, &theta_n, &batch, p_hat.value(), cfg, n, k)?;
                clamped_steps += usize::from(step.clamped);
                theta = step.theta;
            }
            thetas.push(theta.clone());
        }
        Ok(TunerTrace {
            thetas,
            clamped_steps,
            log_p_hat: if p_hat.count == 0 { f64::NAN } else { p_hat.value() },
        })
    }

    /// Estimates `D_KL(P* ‖ P°_θ)` for each θ from `n_mc` proposals under
    /// `theta_ref`, using self-normalized weights `∝ exp(h_{θ_ref})` and
    /// `log p̂ = log mean exp(h_{θ_ref})`.
    pub fn kl_scan(&self, theta_grid: &[DVector<f64>], n_mc: usize, theta_ref: &DVector<f64>, rng: RngSpec) -> Result<KlScan> {
        if n_mc == 0 || theta_grid.is_empty() {
            return invalid("KL scan needs at least one reference path and one θ");
        }
        let bridge = self.bridge(theta_ref)?;
        let samples = (0..n_mc as u64)
            .into_par_iter()
            .map(|i| bridge.simulate(rng.child(i)))
            .collect::<Result<Vec<_>>>()?;
        let h_ref: Vec<f64> = samples.iter().map(|s| s.log_weight()).collect();
        let mut acc = LogMeanExp::default();
        h_ref.iter().for_each(|&h| acc.push(h));
        let log_p_hat = acc.value();
        let max = h_ref.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = h_ref.iter().map(|h| (h - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
        let warning = (ess < 0.01 * n_mc as f64).then(|| {
            let msg = format!("reference ESS {ess:.1} is below 1% of {n_mc} paths; KL estimates are unreliable");
            log::warn!("{msg}");
            msg
        });
        let refs: Vec<&WeightedPath> = samples.iter().collect();
        let points = theta_grid
            .par_iter()
            .map(|theta| -> Result<KlPoint> {
                let h = if theta == theta_ref { h_ref.clone() } else { self.log_h(theta, &refs)? };
                let mean: f64 = w.iter().zip(&h).map(|(w, h)| w * h).sum();
                let var: f64 = w.iter().zip(&h).map(|(w, h)| w * w * (h - mean).powi(2)).sum();
                Ok(KlPoint {
                    theta: theta[0],
                    kl: mean - log_p_hat,
                    std_err: var.sqrt(),
                    ess,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(KlScan {
            points,
            log_p_hat,
            reference_ess: ess,
            warning,
        })
    }
}

/// Free-function form of [`ThetaProblem::run_tuner`].
pub fn run_tuner(problem: &ThetaProblem, cfg: &TunerConfig, rng: RngSpec) -> Result<TunerTrace> {
    problem.run_tuner(cfg, rng)
}

/// Free-function form of [`ThetaProblem::kl_scan`].
pub fn kl_scan(problem: &ThetaProblem, theta_grid: &[DVector<f64>], n_mc: usize, theta_ref: &DVector<f64>, rng: RngSpec) -> Result<KlScan> {
    problem.kl_scan(theta_grid, n_mc, theta_ref, rng)
}
