//! Uniform-linear-array uplink model: steering vectors, block-fading
//! complex Gaussian channels and received-signal synthesis
//! `Y = A(θ)·[h_1, …, h_M] + N`.
//!
//! Angles are radians everywhere in the library; degrees only appear at
//! the CLI/config boundary.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::serial;

const ANGLE_SLACK: f64 = 1e-12;

/// Uniform linear array: antenna count and element spacing in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArrayConfig")]
pub struct ArrayConfig {
    n_antennas: usize,
    spacing_ratio: f64,
}

#[derive(Deserialize)]
struct RawArrayConfig {
    n_antennas: usize,
    spacing_ratio: f64,
}

impl TryFrom<RawArrayConfig> for ArrayConfig {
    type Error = Error;
    fn try_from(raw: RawArrayConfig) -> Result<Self> {
        ArrayConfig::new(raw.n_antennas, raw.spacing_ratio)
    }
}

impl ArrayConfig {
    pub fn new(n_antennas: usize, spacing_ratio: f64) -> Result<Self> {
        if n_antennas < 2 {
            return Err(Error::invalid(format!(
                "array needs at least 2 antennas, got {n_antennas}"
            )));
        }
        // d >= λ/2
        if !(spacing_ratio >= 0.5) || !spacing_ratio.is_finite() {
            return Err(Error::invalid(format!(
                "spacing ratio d/λ must be finite and >= 0.5, got {spacing_ratio}"
            )));
        }
        Ok(Self {
            n_antennas,
            spacing_ratio,
        })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }

    /// Phase advance per element per unit `sin θ`: `2π d/λ`.
    pub fn wavenumber_spacing(&self) -> f64 {
        2.0 * PI * self.spacing_ratio
    }
}

/// Angles of arrival of the K users, radians in `[-π/2, π/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AoAVector(Vec<f64>);

impl TryFrom<Vec<f64>> for AoAVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        AoAVector::new(v)
    }
}

impl From<AoAVector> for Vec<f64> {
    fn from(v: AoAVector) -> Self {
        v.0
    }
}

impl AoAVector {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("AoA vector must not be empty"));
        }
        for &a in &angles {
            if !a.is_finite() || a.abs() > FRAC_PI_2 + ANGLE_SLACK {
                return Err(Error::invalid(format!(
                    "angle {a} rad lies outside [-π/2, π/2]"
                )));
            }
        }
        Ok(Self(
            angles
                .into_iter()
                .map(|a| a.clamp(-FRAC_PI_2, FRAC_PI_2))
                .collect(),
        ))
    }

    pub fn from_degrees(degrees: &[f64]) -> Result<Self> {
        Self::new(degrees.iter().map(|d| d.to_radians()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.0.iter().map(|a| a.to_degrees()).collect()
    }

    /// Copy with ascending order.
    pub fn sorted(&self) -> AoAVector {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        AoAVector(v)
    }
}

/// Complex Gaussian prior `CN(μ_h, Σ_h)` of one snapshot's channel gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior")]
pub struct ChannelPrior {
    #[serde(with = "serial::cvec")]
    mean: CVec,
    #[serde(with = "serial::cmat")]
    covariance: CMat,
}

#[derive(Deserialize)]
struct RawPrior {
    #[serde(with = "serial::cvec")]
    mean: CVec,
    #[serde(with = "serial::cmat")]
    covariance: CMat,
}

impl TryFrom<RawPrior> for ChannelPrior {
    type Error = Error;
    fn try_from(raw: RawPrior) -> Result<Self> {
        ChannelPrior::new(raw.mean, raw.covariance)
    }
}

impl ChannelPrior {
    pub fn new(mean: CVec, covariance: CMat) -> Result<Self> {
        let k = mean.len();
        if covariance.nrows() != k || covariance.ncols() != k {
            return Err(Error::DimensionMismatch {
                context: "prior covariance",
                expected: k,
                actual: covariance.nrows(),
            });
        }
        if linalg::hermitian_deviation(&covariance) > 1e-12 {
            return Err(Error::invalid("prior covariance is not Hermitian"));
        }
        linalg::cholesky(&covariance, "prior covariance")?;
        Ok(Self { mean, covariance })
    }

    /// Independent users with common mean and variance.
    pub fn iid(k_users: usize, mean: Complex64, variance: f64) -> Result<Self> {
        Self::new(
            CVec::from_element(k_users, mean),
            CMat::identity(k_users, k_users).scale(variance),
        )
    }

    pub fn k_users(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &CVec {
        &self.mean
    }

    pub fn covariance(&self) -> &CMat {
        &self.covariance
    }
}

/// One realization of the channel over M snapshots, with its polar split
/// `h = β·e^{jψ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    #[serde(with = "serial::cmat")]
    pub gains: CMat,
    #[serde(with = "serial::rmat")]
    pub path_gains: DMatrix<f64>,
    #[serde(with = "serial::rmat")]
    pub path_angles: DMatrix<f64>,
}

impl ChannelRealization {
    pub fn from_gains(gains: CMat) -> Self {
        let path_gains = gains.map(|z| z.norm());
        let path_angles = gains.map(|z| z.arg());
        Self {
            gains,
            path_gains,
            path_angles,
        }
    }

    pub fn k_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.gains.ncols()
    }
}

/// Received signal `Y` (N×M) with its known noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    #[serde(with = "serial::cmat")]
    pub signal: CMat,
    pub noise_variance: f64,
    pub array: ArrayConfig,
}

impl ObservationSet {
    pub fn new(signal: CMat, noise_variance: f64, array: ArrayConfig) -> Result<Self> {
        if signal.nrows() != array.n_antennas() {
            return Err(Error::DimensionMismatch {
                context: "signal rows vs antennas",
                expected: array.n_antennas(),
                actual: signal.nrows(),
            });
        }
        if signal.ncols() == 0 {
            return Err(Error::invalid("observation needs at least one snapshot"));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::invalid(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        Ok(Self {
            signal,
            noise_variance,
            array,
        })
    }

    pub fn n_snapshots(&self) -> usize {
        self.signal.ncols()
    }
}

/// Steering vector `a(θ)[n] = exp(-j·2π·(d/λ)·n·sin θ)`.
pub fn array_response(array: &ArrayConfig, theta: f64) -> CVec {
    let phase = array.wavenumber_spacing() * theta.sin();
    CVec::from_fn(array.n_antennas(), |n, _| {
        if n == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::from_polar(1.0, -phase * n as f64)
        }
    })
}

/// `A(θ) = [a(θ_1), …, a(θ_K)]`.
pub fn array_matrix(array: &ArrayConfig, aoas: &AoAVector) -> CMat {
    let mut a = CMat::zeros(array.n_antennas(), aoas.len());
    for (k, &theta) in aoas.as_slice().iter().enumerate() {
        a.set_column(k, &array_response(array, theta));
    }
    a
}

/// One draw of circularly-symmetric `CN(0, 1)`.
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn standard_complex_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVec {
    CVec::from_fn(len, |_, _| standard_complex_normal(rng))
}

/// Draw M i.i.d. columns from `CN(μ_h, Σ_h)` via the Cholesky factor.
pub fn sample_channel<R: Rng + ?Sized>(
    prior: &ChannelPrior,
    n_snapshots: usize,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if n_snapshots == 0 {
        return Err(Error::invalid("need at least one snapshot"));
    }
    let chol = linalg::cholesky(prior.covariance(), "prior covariance")?;
    let l = chol.l();
    let k = prior.k_users();
    let mut gains = CMat::zeros(k, n_snapshots);
    for m in 0..n_snapshots {
        let eps = standard_complex_normal_vec(rng, k);
        gains.set_column(m, &(prior.mean() + &l * eps));
    }
    Ok(ChannelRealization::from_gains(gains))
}

/// `Y = A(θ)·H + N` with `N` i.i.d. `CN(0, σ²)`. With `σ² = 0` no noise is
/// drawn and the result is exactly `A(θ)·H`.
pub fn synthesize_observation<R: Rng + ?Sized>(
    array: &ArrayConfig,
    aoas: &AoAVector,
    channel: &ChannelRealization,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ObservationSet> {
    if !(noise_variance >= 0.0) {
        return Err(Error::invalid(format!(
            "noise variance must be non-negative, got {noise_variance}"
        )));
    }
    if channel.k_users() != aoas.len() {
        return Err(Error::DimensionMismatch {
            context: "channel users vs AoAs",
            expected: aoas.len(),
            actual: channel.k_users(),
        });
    }
    let mut y = array_matrix(array, aoas) * &channel.gains;
    if noise_variance > 0.0 {
        let sd = noise_variance.sqrt();
        for z in y.iter_mut() {
            *z += standard_complex_normal(rng) * sd;
        }
    }
    ObservationSet::new(y, noise_variance, *array)
}

/// Mean received power per antenna, `E‖A h‖² / N`, with
/// `E‖A h‖² = tr(A Σ_h A^H) + μ_h^H A^H A μ_h`.
pub fn signal_power_per_antenna(array: &ArrayConfig, prior: &ChannelPrior, aoas: &AoAVector) -> f64 {
    let a = array_matrix(array, aoas);
    let spread = linalg::trace(&(&a * prior.covariance() * a.adjoint())).re;
    let mean_part = (&a * prior.mean()).norm_squared();
    (spread + mean_part) / array.n_antennas() as f64
}

/// Noise variance giving the requested average per-antenna receive SNR:
/// `σ² = E‖A h‖² / (N · 10^{snr_db/10})`.
pub fn snr_to_noise_variance(
    snr_db: f64,
    array: &ArrayConfig,
    prior: &ChannelPrior,
    aoas: &AoAVector,
) -> f64 {
    signal_power_per_antenna(array, prior, aoas) / 10f64.powf(snr_db / 10.0)
}
