//! Independence Metropolis–Hastings and self-normalized importance sampling
//! over guided proposal bridges.
//!
//! Both use only `log ψ(T)`: the factor `p̃(0,u; T,v) / p(0,u; T,v)` is the
//! same for every proposal and cancels.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::guided::{GuidedBridge, WeightedPath};
use crate::sde::{Path, RngSpec};

#[derive(Debug, Clone)]
pub struct ChainState {
    pub current: WeightedPath,
    pub iteration: usize,
    pub accepted_count: usize,
}

impl ChainState {
    pub fn new(initial: WeightedPath) -> Self {
        Self {
            current: initial,
            iteration: 0,
            accepted_count: 0,
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.iteration == 0 {
            return 0.0;
        }
        self.accepted_count as f64 / self.iteration as f64
    }
}

/// `min(1, ψ_prop / ψ_curr)`.
pub fn acceptance_probability(current_log_psi: f64, proposed_log_psi: f64) -> f64 {
    (proposed_log_psi - current_log_psi).exp().min(1.0)
}

/// One independence-sampler step; `rng` drives both the proposal and the
/// uniform draw.
pub fn mh_step(mut state: ChainState, bridge: &GuidedBridge, rng: RngSpec) -> Result<ChainState> {
    let proposal = bridge.simulate(rng.child(0))?;
    let accept_prob = acceptance_probability(state.current.log_psi, proposal.log_psi);
    let u: f64 = rng.child(1).rng().random();
    state.iteration += 1;
    if u < accept_prob {
        state.current = proposal;
        state.accepted_count += 1;
    }
    Ok(state)
}

#[derive(Debug, Clone)]
pub struct ChainSummary {
    pub iterations: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    /// `log ψ(T)` of the chain state after every iteration.
    pub log_psi_trace: Vec<f64>,
    /// States after iterations `thin, 2·thin, …`.
    pub paths: Vec<WeightedPath>,
}

/// Runs `n_iters` steps from an initial proposal drawn with `rng.child(0)`.
pub fn run_chain(bridge: &GuidedBridge, n_iters: usize, rng: RngSpec, thin: usize) -> Result<ChainSummary> {
    if n_iters == 0 {
        return invalid("chain needs at least one iteration");
    }
    if thin == 0 {
        return invalid("thinning interval must be positive");
    }
    let mut state = ChainState::new(bridge.simulate(rng.child(0))?);
    let mut trace = Vec::with_capacity(n_iters);
    let mut paths = Vec::with_capacity(n_iters / thin);
    for i in 1..=n_iters {
        state = mh_step(state, bridge, rng.child(i as u64))?;
        trace.push(state.current.log_psi);
        if i % thin == 0 {
            paths.push(state.current.clone());
        }
    }
    Ok(ChainSummary {
        iterations: state.iteration,
        accepted: state.accepted_count,
        acceptance_rate: state.acceptance_rate(),
        log_psi_trace: trace,
        paths,
    })
}

/// Paths with log-weights shifted so that the largest is 0.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble {
    pub samples: Vec<WeightedPath>,
    pub log_weights: Vec<f64>,
}

impl WeightedEnsemble {
    pub fn new(samples: Vec<WeightedPath>, log_weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.len() != log_weights.len() {
            return invalid("ensemble needs one log-weight per sample and at least one sample");
        }
        if log_weights.iter().any(|w| !w.is_finite()) {
            return invalid("log-weights must be finite");
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_weights = log_weights.into_iter().map(|w| w - max).collect();
        Ok(Self { samples, log_weights })
    }

    /// Weighted by `log ψ(T)`.
    pub fn from_weighted_paths(samples: Vec<WeightedPath>) -> Result<Self> {
        let lw = samples.iter().map(|s| s.log_psi).collect();
        Self::new(samples, lw)
    }

    /// Equal weights, e.g. for oracle or baseline paths.
    pub fn uniform(paths: Vec<Path>) -> Result<Self> {
        let samples: Vec<WeightedPath> = paths
            .into_iter()
            .map(|path| WeightedPath {
                path,
                log_psi: 0.0,
                log_ptilde0: 0.0,
                endpoint_mismatch: false,
            })
            .collect();
        let lw = vec![0.0; samples.len()];
        Self::new(samples, lw)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Self-normalized weights, summing to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let raw: Vec<f64> = self.log_weights.iter().map(|w| w.exp()).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }

    /// `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        let (s1, s2) = self
            .log_weights
            .iter()
            .map(|w| w.exp())
            .fold((0.0, 0.0), |(a, b), w| (a + w, b + w * w));
        s1 * s1 / s2
    }

    /// Coordinate `coord` of every sample at node `k`, with normalized weights.
    pub fn marginal(&self, k: usize, coord: usize) -> (Vec<f64>, Vec<f64>) {
        let values = self.samples.iter().map(|s| s.path.coord(k, coord)).collect();
        (values, self.normalized_weights())
    }

    /// Weighted mean and a standard error `sd / sqrt(ESS)` of a marginal.
    pub fn weighted_mean(&self, k: usize, coord: usize) -> (f64, f64) {
        let (x, w) = self.marginal(k, coord);
        let mean: f64 = x.iter().zip(&w).map(|(x, w)| x * w).sum();
        let var: f64 = x.iter().zip(&w).map(|(x, w)| w * (x - mean).powi(2)).sum();
        (mean, (var / self.ess()).sqrt())
    }
}

/// Draws `n_samples` independent proposals (sample `i` uses `rng.child(i)`)
/// weighted by `log ψ(T)`.
pub fn importance_ensemble(bridge: &GuidedBridge, n_samples: usize, rng: RngSpec) -> Result<WeightedEnsemble> {
    if n_samples == 0 {
        return invalid("importance sampling needs at least one sample");
    }
    let samples = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| bridge.simulate(rng.child(i)))
        .collect::<Result<Vec<_>>>()?;
    WeightedEnsemble::from_weighted_paths(samples)
}

/// ESS of the self-normalized weights, in `[1, n]`.
pub fn effective_sample_size(ensemble: &WeightedEnsemble) -> f64 {
    ensemble.ess()
}
