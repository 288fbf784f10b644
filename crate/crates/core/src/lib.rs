//! Simulation of multi-dimensional diffusion bridges with guided proposals.
//!
//! A guided proposal adds `a(t, x) ∇ log p̃(t, x; T, v)` to the drift of the
//! target diffusion, where `p̃` is the transition density of a linear
//! auxiliary process. The likelihood ratio between the target bridge and
//! the proposal is known up to a constant through
//! `ψ(T) = exp ∫_0^T G(s, X°_s) ds`, which drives the importance and
//! Metropolis–Hastings samplers and the θ tuner.
//!
//! Modules, bottom-up:
//! - [`sde`]: models, grids, paths, Euler–Maruyama.
//! - [`linear`]: the linear guide (`Φ`, `μ`, `K`, `r̃`, `H̃`, `v(s)`).
//! - [`guided`]: guided drift, `G`, and weighted proposal paths.
//! - [`baselines`]: pulled-process proposals and exact linear bridges.
//! - [`samplers`]: independence MH and importance sampling.
//! - [`tuner`]: stochastic-gradient θ tuning and KL scans.
//! - [`oracle`]: rejection bridges, density histograms, W₁ distances.
//! - [`diagnostics`]: numerical self-checks.

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod guided;
pub mod linear;
pub mod models;
pub mod oracle;
pub mod samplers;
pub mod sde;
pub mod table;
pub mod tuner;

pub use baselines::{exact_linear_bridge, simulate_delyon_hu_full, simulate_delyon_hu_nodrift, simulate_exact_linear_bridge};
pub use error::{BridgeError, Result};
pub use guided::{g_functional, guided_drift, simulate_guided_bridge, GuidedBridge, WeightedPath};
pub use linear::{
    build_guide_cache, fundamental_matrix, guide_covariance, guide_log_density, guide_mean, guide_score, GuideCache,
    LinearGuide,
};
pub use oracle::{marginal_distance, rejection_bridge_sample, transition_density_estimate, wasserstein1};
pub use samplers::{effective_sample_size, importance_ensemble, mh_step, run_chain, ChainState, ChainSummary, WeightedEnsemble};
pub use sde::{
    euler_maruyama, make_bridge_grid, sample_brownian_increments, BridgeSpec, DiffusionModel, Path, RngSpec, TimeGrid,
};
pub use tuner::{kl_scan, run_tuner, Decay, GuideFamily, KlScan, ThetaProblem, TunerConfig, TunerTrace};

pub use nalgebra::{DMatrix, DVector};
