//! Built-in models and guide families.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linear::LinearGuide;
use crate::sde::{BridgeSpec, DiffusionModel};
use crate::tuner::GuideFamily;

/// `dX = β₁ dt + σ dW` in one dimension.
pub fn brownian_with_drift(beta1: f64, sigma: f64) -> DiffusionModel {
    DiffusionModel::new(
        1,
        1,
        move |_, _| DVector::from_element(1, beta1),
        move |_, _| DMatrix::from_element(1, 1, sigma),
    )
    .expect("scalar model")
}

/// `dX = (β₁ - β₂ sin(8X)) dt + σ dW`.
pub fn sine_drift(beta1: f64, beta2: f64, sigma: f64) -> DiffusionModel {
    DiffusionModel::new(
        1,
        1,
        move |_, x| DVector::from_element(1, beta1 - beta2 * (8.0 * x[0]).sin()),
        move |_, _| DMatrix::from_element(1, 1, sigma),
    )
    .expect("scalar model")
}

/// `dX = -λ (X - m) dt + σ dW` as a linear process.
pub fn ornstein_uhlenbeck_guide(rate: f64, mean: f64, sigma: f64) -> Result<LinearGuide> {
    LinearGuide::constant(
        DMatrix::from_element(1, 1, -rate),
        DVector::from_element(1, rate * mean),
        DMatrix::from_element(1, 1, sigma),
    )
}

/// `dX = -λ (X - m) dt + σ dW` as a target model.
pub fn ornstein_uhlenbeck(rate: f64, mean: f64, sigma: f64) -> Result<DiffusionModel> {
    Ok(ornstein_uhlenbeck_guide(rate, mean, sigma)?.as_model())
}

/// `dX = (c₀ + c₁ X + … + c_p X^p) dt + σ dW`.
pub fn polynomial(coeffs: Vec<f64>, sigma: f64) -> Result<DiffusionModel> {
    if coeffs.is_empty() {
        return invalid("polynomial drift needs at least one coefficient");
    }
    DiffusionModel::new(
        1,
        1,
        move |_, x| DVector::from_element(1, coeffs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c)),
        move |_, _| DMatrix::from_element(1, 1, sigma),
    )
}

/// `θ ↦` scaled Brownian motion with constant drift `θ[0]` and scale `scale`.
pub fn drift_guide_family(scale: f64) -> GuideFamily {
    Arc::new(move |theta: &DVector<f64>| {
        if theta.len() != 1 {
            return invalid(format!("drift guide family takes a scalar θ, got length {}", theta.len()));
        }
        LinearGuide::scalar_brownian(scale, theta[0])
    })
}

/// The one-dimensional sine-drift bridge used throughout the examples:
/// `b(x) = β₁ - β₂ sin(8x)`, `σ = 1/2`, from `0` to `π/2` over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineExample {
    pub beta1: f64,
    pub beta2: f64,
    pub sigma: f64,
    pub start: f64,
    pub end: f64,
    pub horizon: f64,
}

impl Default for SineExample {
    fn default() -> Self {
        Self {
            beta1: 2.0,
            beta2: 2.0,
            sigma: 0.5,
            start: 0.0,
            end: PI / 2.0,
            horizon: 1.0,
        }
    }
}

impl SineExample {
    /// Guide drift near the divergence minimizer for the default parameters.
    pub const TUNED_THETA: f64 = 1.36;

    pub fn model(&self) -> DiffusionModel {
        sine_drift(self.beta1, self.beta2, self.sigma)
    }

    pub fn spec(&self) -> BridgeSpec {
        BridgeSpec::scalar(self.start, self.end, self.horizon).expect("valid example")
    }

    pub fn guide(&self, theta: f64) -> LinearGuide {
        LinearGuide::scalar_brownian(self.sigma, theta).expect("valid example")
    }

    pub fn family(&self) -> GuideFamily {
        drift_guide_family(self.sigma)
    }
}
