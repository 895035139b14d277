//! Geometry of the population loss: aliased global optima, stationary
//! points of the single-user angle objective and dense loss surfaces.
//!
//! Throughout, the single-user population loss with the channel held at
//! its true value is
//!
//! ```text
//! f(θ̂) = P · Σ_n |e^{-j c n sin θ} − e^{-j c n sin θ̂}|²,   c = 2πd/λ,
//! ```
//!
//! where `P = Σ_m |h_m|²` is the user's total channel power.

mod roots;
mod surface;

pub use roots::{
    finite_sum_sign_changes, stationarity_condition, stationary_points, stationary_points_with, GradientForm,
    StationaryOptions, StationaryPointSet,
};
pub use surface::{evaluate_surface, LossSurface, SurfaceAxis, SurfaceParameter, SurfaceScenario, MAX_SURFACE_POINTS};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::{AoAVector, ArrayConfig};

/// Slack on the integer bounds so that aliases landing exactly on ±90°
/// survive rounding.
const BOUND_SLACK: f64 = 1e-12;

/// Every angle whose steering vector coincides with the true one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalOptimaSet {
    pub true_angle: f64,
    /// Sorted ascending.
    pub alias_angles: Vec<f64>,
    /// Integer shift of each alias: `sin θ̂ = sin θ − l·λ/d`.
    pub alias_integers: Vec<i64>,
}

impl GlobalOptimaSet {
    pub fn len(&self) -> usize {
        self.alias_angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alias_angles.is_empty()
    }

    /// Aliases other than the true angle.
    pub fn spurious(&self) -> impl Iterator<Item = f64> + '_ {
        self.alias_integers
            .iter()
            .zip(&self.alias_angles)
            .filter(|(l, _)| **l != 0)
            .map(|(_, a)| *a)
    }
}

/// All `θ̂ ∈ [−π/2, π/2]` with `sin θ̂ = sin θ − l·λ/d` for integer `l`.
pub fn enumerate_global_optima(array: &ArrayConfig, true_angle: f64) -> Result<GlobalOptimaSet> {
    let truth = AoAVector::new(vec![true_angle])?.as_slice()[0];
    let r = array.spacing_ratio();
    let s = truth.sin();
    let lo = (r * (s - 1.0) - BOUND_SLACK).ceil() as i64;
    let hi = (r * (s + 1.0) + BOUND_SLACK).floor() as i64;
    let mut pairs: Vec<(f64, i64)> = (lo..=hi)
        .filter_map(|l| {
            let alias_sin = if l == 0 { s } else { s - l as f64 / r };
            (alias_sin.abs() <= 1.0 + BOUND_SLACK).then(|| {
                let angle = if l == 0 { truth } else { alias_sin.clamp(-1.0, 1.0).asin() };
                (angle, l)
            })
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(GlobalOptimaSet {
        true_angle: truth,
        alias_angles: pairs.iter().map(|p| p.0).collect(),
        alias_integers: pairs.iter().map(|p| p.1).collect(),
    })
}

/// `f(θ̂)` above, evaluated directly from the phase differences.
pub fn single_user_population_loss(array: &ArrayConfig, true_angle: f64, channel_power: f64, estimate: f64) -> f64 {
    let c = array.wavenumber_spacing();
    let delta = true_angle.sin() - estimate.sin();
    let sum: f64 = (0..array.n_antennas())
        .map(|n| 2.0 - 2.0 * (c * n as f64 * delta).cos())
        .sum();
    channel_power * sum
}

/// Exact derivative `df/dθ̂ = −2P c cos θ̂ Σ_n n sin(c n (sin θ − sin θ̂))`.
pub fn exact_population_gradient(array: &ArrayConfig, true_angle: f64, channel_power: f64, estimate: f64) -> f64 {
    let c = array.wavenumber_spacing();
    let delta = true_angle.sin() - estimate.sin();
    let sum: f64 = (0..array.n_antennas())
        .map(|n| n as f64 * (c * n as f64 * delta).sin())
        .sum();
    -2.0 * channel_power * c * estimate.cos() * sum
}

/// Phase arguments `(η, ζ) = (c(sin θ + sin θ̂), 2c sin θ̂)`.
pub fn phase_rates(array: &ArrayConfig, true_angle: f64, estimate: f64) -> (f64, f64) {
    let c = array.wavenumber_spacing();
    (c * (true_angle.sin() + estimate.sin()), 2.0 * c * estimate.sin())
}

/// The finite sum `P c cos θ̂ Σ_n n [sin(η n) − sin(ζ n)]`, whose large-N
/// behaviour gives the closed-form stationarity condition.
pub fn stationarity_sum(array: &ArrayConfig, true_angle: f64, channel_power: f64, estimate: f64) -> f64 {
    let c = array.wavenumber_spacing();
    let (eta, zeta) = phase_rates(array, true_angle, estimate);
    channel_power * c * estimate.cos() * bracket_sum(array.n_antennas(), eta, zeta)
}

pub(crate) fn bracket_sum(n_antennas: usize, eta: f64, zeta: f64) -> f64 {
    (0..n_antennas)
        .map(|n| {
            let n = n as f64;
            n * ((eta * n).sin() - (zeta * n).sin())
        })
        .sum()
}
