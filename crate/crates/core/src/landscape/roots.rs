//! Stationary points of the single-user angle objective from the large-N
//! condition
//!
//! ```text
//! cos θ̂ · [cos(ζ(N−1))/ζ − cos(η(N−1))/η] = 0
//! ```
//!
//! located by a sign-change scan followed by bisection.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{bracket_sum, exact_population_gradient, phase_rates, stationarity_sum};
use crate::error::{Error, Result};
use crate::par;
use crate::preprocess::AngleGrid;
use crate::signal::ArrayConfig;

const SCAN_CHUNK: usize = 1024;
const DEDUP: f64 = 1e-9;
/// Below this many antennas the large-N condition is a poor guide.
pub const ASYMPTOTIC_MIN_ANTENNAS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryOptions {
    /// Bisection stops once the bracket is narrower than this (rad).
    pub bisection_tolerance: f64,
    /// Roots whose condition value exceeds this are sign flips across a
    /// pole or a guard-band edge and are dropped.
    pub residual_tolerance: f64,
    /// Half-width (rad) of the band around `ζ = 0` and `η = 0` where the
    /// ratio form is replaced by the finite sum divided by N−1.
    pub guard_band: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self {
            bisection_tolerance: 1e-13,
            residual_tolerance: 1e-8,
            guard_band: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPointSet {
    /// Sorted ascending; always contains ±π/2, never the true angle.
    pub angles: Vec<f64>,
    /// `|condition|` at each angle.
    pub residuals: Vec<f64>,
    pub true_angle: f64,
    pub array: ArrayConfig,
    /// Condition value at the root found at the true angle, if the scan
    /// crossed it.
    pub true_angle_residual: Option<f64>,
    /// Sign changes rejected by the residual test.
    pub discarded: usize,
    /// False when the array is too small for the asymptotic condition.
    pub asymptotic_regime: bool,
}

impl StationaryPointSet {
    /// Roots strictly inside `(−π/2, π/2)`.
    pub fn interior(&self) -> impl Iterator<Item = f64> + '_ {
        self.angles.iter().copied().filter(|a| a.abs() < FRAC_PI_2 - DEDUP)
    }
}

/// Large-N stationarity condition. Within `guard_band` of `θ̂ = 0` or
/// `θ̂ = −θ` the ratio form blows up and the finite sum over the array,
/// divided by N−1, is used instead.
pub fn stationarity_condition(array: &ArrayConfig, true_angle: f64, estimate: f64, guard_band: f64) -> f64 {
    let l = (array.n_antennas() - 1) as f64;
    let (eta, zeta) = phase_rates(array, true_angle, estimate);
    let near_pole = estimate.abs() < guard_band || (estimate + true_angle).abs() < guard_band;
    let bracket = if near_pole || eta == 0.0 || zeta == 0.0 {
        bracket_sum(array.n_antennas(), eta, zeta) / l
    } else {
        (zeta * l).cos() / zeta - (eta * l).cos() / eta
    };
    estimate.cos() * bracket
}

pub fn stationary_points(array: &ArrayConfig, true_angle: f64, search: &AngleGrid) -> Result<StationaryPointSet> {
    stationary_points_with(array, true_angle, search, &StationaryOptions::default())
}

pub fn stationary_points_with(
    array: &ArrayConfig,
    true_angle: f64,
    search: &AngleGrid,
    options: &StationaryOptions,
) -> Result<StationaryPointSet> {
    check_resolution(array, search)?;
    let f = |t: f64| stationarity_condition(array, true_angle, t, options.guard_band);
    let crossings = scan_roots(search, &f, options.bisection_tolerance);

    let mut kept: Vec<(f64, f64)> = Vec::new();
    let mut true_residual = None;
    let mut discarded = 0;
    for root in crossings {
        let residual = f(root).abs();
        if (root - true_angle).abs() < 1e-7 {
            true_residual = Some(residual);
        } else if residual < options.residual_tolerance {
            kept.push((root, residual));
        } else {
            discarded += 1;
        }
    }
    for edge in [-FRAC_PI_2, FRAC_PI_2] {
        kept.push((edge, f(edge).abs()));
    }
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    kept.dedup_by(|b, a| (b.0 - a.0).abs() < DEDUP);
    Ok(StationaryPointSet {
        angles: kept.iter().map(|p| p.0).collect(),
        residuals: kept.iter().map(|p| p.1).collect(),
        true_angle,
        array: *array,
        true_angle_residual: true_residual,
        discarded,
        asymptotic_regime: array.n_antennas() >= ASYMPTOTIC_MIN_ANTENNAS,
    })
}

/// Which finite-N angle derivative to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientForm {
    /// True derivative of the population loss.
    Exact,
    /// `cos θ̂ Σ_n n [sin(η n) − sin(ζ n)]`, the sum behind the large-N condition.
    StationaritySum,
}

/// Interior sign changes of a finite-N derivative over `search`,
/// refined by bisection.
pub fn finite_sum_sign_changes(
    array: &ArrayConfig,
    true_angle: f64,
    search: &AngleGrid,
    form: GradientForm,
) -> Result<Vec<f64>> {
    check_resolution(array, search)?;
    let f = |t: f64| match form {
        GradientForm::Exact => exact_population_gradient(array, true_angle, 1.0, t),
        GradientForm::StationaritySum => stationarity_sum(array, true_angle, 1.0, t),
    };
    Ok(scan_roots(search, &f, 1e-13))
}

fn check_resolution(array: &ArrayConfig, search: &AngleGrid) -> Result<()> {
    // The condition oscillates with period 1/(2·(d/λ)·(N−1)) in sin θ̂,
    // which bounds its period in θ̂ from below.
    let period = 1.0 / (2.0 * array.spacing_ratio() * (array.n_antennas() - 1) as f64);
    if search.step() > period / 8.0 {
        return Err(Error::ScanTooCoarse {
            step: search.step(),
            period,
        });
    }
    Ok(())
}

/// Sign changes of `f` between neighbouring grid points, skipping
/// intervals that touch ±π/2 where the cos θ̂ factor vanishes.
fn scan_roots<F>(grid: &AngleGrid, f: &F, tol: f64) -> Vec<f64>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let points = grid.points();
    let values = par::map_range_chunked(points.len(), SCAN_CHUNK, |i| f(points[i]));
    let at_edge = |t: f64| FRAC_PI_2 - t.abs() < DEDUP;
    let mut roots = Vec::new();
    for i in 0..points.len() {
        if at_edge(points[i]) {
            continue;
        }
        if values[i] == 0.0 {
            roots.push(points[i]);
            continue;
        }
        if i + 1 < points.len() && !at_edge(points[i + 1]) && values[i] * values[i + 1] < 0.0 {
            roots.push(bisect(f, points[i], points[i + 1], values[i], tol));
        }
    }
    roots
}

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> f64 {
    let mut f_hi = f(hi);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if f_lo.abs() <= f_hi.abs() {
        lo
    } else {
        hi
    }
}
