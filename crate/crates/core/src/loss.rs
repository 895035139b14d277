//! The variational objective: negative ELBO with a Dirac posterior on the
//! angles and Gaussian posteriors `CN(μ_ĥm, Σ_ĥm)` on each snapshot's gains.
//!
//! The KL part keeps its constants, so it is a proper KL divergence and
//! vanishes when the posterior equals the prior. The reconstruction part is
//! the exact expectation of `‖Y − Â·Ĥ‖²_F / σ²` under the posterior:
//!
//! ```text
//! (1/σ²) Σ_m ‖y_m − Â μ_m‖² + tr(Â Σ_m Â^H)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};
use crate::preprocess::PseudoLabels;
use crate::serial;
use crate::signal::{array_matrix, standard_complex_normal_vec, AoAVector, ArrayConfig, ChannelPrior, ObservationSet};

const PSD_SLACK: f64 = 1e-9;

/// Point estimate of the angles plus per-snapshot Gaussian posteriors of
/// the channel gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub aoa_estimate: AoAVector,
    /// K×M, column m is `μ_ĥm`.
    #[serde(with = "serial::cmat")]
    pub channel_means: CMat,
    /// One K×K Hermitian PSD matrix per snapshot.
    #[serde(with = "serial::cmat_list")]
    pub channel_covariances: Vec<CMat>,
}

impl VariationalState {
    pub fn new(aoa_estimate: AoAVector, channel_means: CMat, channel_covariances: Vec<CMat>) -> Result<Self> {
        let k = aoa_estimate.len();
        if channel_means.nrows() != k {
            return Err(Error::DimensionMismatch {
                context: "channel means rows vs AoAs",
                expected: k,
                actual: channel_means.nrows(),
            });
        }
        if channel_covariances.len() != channel_means.ncols() {
            return Err(Error::DimensionMismatch {
                context: "covariances vs snapshots",
                expected: channel_means.ncols(),
                actual: channel_covariances.len(),
            });
        }
        for cov in &channel_covariances {
            if cov.nrows() != k || cov.ncols() != k {
                return Err(Error::DimensionMismatch {
                    context: "posterior covariance size",
                    expected: k,
                    actual: cov.nrows(),
                });
            }
            let scale = cov.iter().map(|z| z.norm()).fold(1.0, f64::max);
            if linalg::hermitian_deviation(cov) > PSD_SLACK * scale {
                return Err(Error::invalid("posterior covariance is not Hermitian"));
            }
            let (vals, _) = linalg::hermitian_eigen(cov);
            if vals[0] < -PSD_SLACK * scale {
                return Err(Error::invalid("posterior covariance is not positive semidefinite"));
            }
        }
        Ok(Self {
            aoa_estimate,
            channel_means,
            channel_covariances,
        })
    }

    /// Zero-variance posterior centred on `means`.
    pub fn point_mass(aoa_estimate: AoAVector, channel_means: CMat) -> Result<Self> {
        let k = channel_means.nrows();
        let m = channel_means.ncols();
        Self::new(aoa_estimate, channel_means, vec![CMat::zeros(k, k); m])
    }

    pub fn k_users(&self) -> usize {
        self.aoa_estimate.len()
    }

    pub fn n_snapshots(&self) -> usize {
        self.channel_means.ncols()
    }

    pub fn with_aoas(&self, aoas: AoAVector) -> Self {
        Self {
            aoa_estimate: aoas,
            ..self.clone()
        }
    }
}

/// The two parts of the negative ELBO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub kl_term: f64,
    pub reconstruction_term: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(kl_term: f64, reconstruction_term: f64) -> Self {
        Self {
            kl_term,
            reconstruction_term,
            total: kl_term + reconstruction_term,
        }
    }
}

/// Weight of the pseudo-label penalty in the initialization objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitLossConfig {
    pub gamma: f64,
}

impl InitLossConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self { gamma })
    }
}

/// Prior for snapshot `m`: either one prior per snapshot or a single prior
/// shared by all.
pub fn prior_for(priors: &[ChannelPrior], m: usize) -> &ChannelPrior {
    if priors.len() == 1 {
        &priors[0]
    } else {
        &priors[m]
    }
}

pub(crate) fn check_priors(priors: &[ChannelPrior], k: usize, m: usize) -> Result<()> {
    if priors.len() != 1 && priors.len() != m {
        return Err(Error::DimensionMismatch {
            context: "priors vs snapshots",
            expected: m,
            actual: priors.len(),
        });
    }
    if let Some(p) = priors.iter().find(|p| p.k_users() != k) {
        return Err(Error::DimensionMismatch {
            context: "prior users",
            expected: k,
            actual: p.k_users(),
        });
    }
    Ok(())
}

/// `KL(CN(q_mean, q_cov) ‖ CN(μ_h, Σ_h))`
/// `= tr(Σ_h⁻¹ q_cov) + (q_mean−μ_h)^H Σ_h⁻¹ (q_mean−μ_h) − K + ln(|Σ_h| / |q_cov|)`.
pub fn kl_gaussian(q_mean: &CVec, q_cov: &CMat, prior: &ChannelPrior) -> Result<f64> {
    let k = prior.k_users();
    if q_mean.len() != k || q_cov.nrows() != k {
        return Err(Error::DimensionMismatch {
            context: "KL operand size",
            expected: k,
            actual: q_mean.len(),
        });
    }
    let chol_p = linalg::cholesky(prior.covariance(), "prior covariance")?;
    let chol_q = linalg::cholesky(&linalg::hermitize(q_cov), "posterior covariance")?;
    let trace_term = linalg::trace(&chol_p.solve(q_cov)).re;
    let diff = q_mean - prior.mean();
    let quad = diff.dotc(&chol_p.solve(&diff)).re;
    Ok(trace_term + quad - k as f64 + linalg::log_det(&chol_p) - linalg::log_det(&chol_q))
}

/// `Σ_m ‖y_m − Â μ_m‖² + tr(Â Σ_m Â^H)` for a given `Â` (no 1/σ² factor).
pub(crate) fn reconstruction_sum(signal: &CMat, a_hat: &CMat, state: &VariationalState) -> f64 {
    let residual = signal - a_hat * &state.channel_means;
    let gram = a_hat.adjoint() * a_hat;
    let spread: f64 = state
        .channel_covariances
        .iter()
        .map(|cov| linalg::trace(&(cov * &gram)).re)
        .sum();
    linalg::frobenius_sq(&residual) + spread
}

fn check_state(obs: &ObservationSet, state: &VariationalState) -> Result<()> {
    if state.n_snapshots() != obs.n_snapshots() {
        return Err(Error::DimensionMismatch {
            context: "state snapshots vs observation",
            expected: obs.n_snapshots(),
            actual: state.n_snapshots(),
        });
    }
    Ok(())
}

/// Exact posterior expectation of `‖Y − Â·Ĥ‖²_F / σ²` given observed `Y`.
pub fn expected_reconstruction_observed(obs: &ObservationSet, state: &VariationalState) -> Result<f64> {
    check_state(obs, state)?;
    if obs.noise_variance <= 0.0 {
        return Err(Error::ZeroNoiseVariance);
    }
    let a_hat = array_matrix(&obs.array, &state.aoa_estimate);
    Ok(reconstruction_sum(&obs.signal, &a_hat, state) / obs.noise_variance)
}

/// Noise-averaged reconstruction error
/// `Σ_m ‖A h_m − Â μ_m‖² + σ²N + tr(Â Σ_m Â^H)`, without the 1/σ² factor.
pub fn population_reconstruction(
    true_aoas: &AoAVector,
    true_gains: &CMat,
    state: &VariationalState,
    array: &ArrayConfig,
    noise_variance: f64,
) -> f64 {
    let clean = array_matrix(array, true_aoas) * true_gains;
    let a_hat = array_matrix(array, &state.aoa_estimate);
    let floor = noise_variance * (array.n_antennas() * true_gains.ncols()) as f64;
    reconstruction_sum(&clean, &a_hat, state) + floor
}

/// [`population_reconstruction`] divided by σ², the scale of the training loss.
pub fn population_reconstruction_normalized(
    true_aoas: &AoAVector,
    true_gains: &CMat,
    state: &VariationalState,
    array: &ArrayConfig,
    noise_variance: f64,
) -> Result<f64> {
    if noise_variance <= 0.0 {
        return Err(Error::ZeroNoiseVariance);
    }
    Ok(population_reconstruction(true_aoas, true_gains, state, array, noise_variance) / noise_variance)
}

pub fn kl_sum(state: &VariationalState, priors: &[ChannelPrior]) -> Result<f64> {
    check_priors(priors, state.k_users(), state.n_snapshots())?;
    (0..state.n_snapshots())
        .map(|m| {
            kl_gaussian(
                &state.channel_means.column(m).into_owned(),
                &state.channel_covariances[m],
                prior_for(priors, m),
            )
        })
        .sum()
}

/// Negative ELBO split into its KL and reconstruction parts.
pub fn total_loss(obs: &ObservationSet, state: &VariationalState, priors: &[ChannelPrior]) -> Result<LossBreakdown> {
    let kl = kl_sum(state, priors)?;
    let recon = expected_reconstruction_observed(obs, state)?;
    Ok(LossBreakdown::new(kl, recon))
}

/// Initialization objective: the training loss evaluated at the
/// pseudo-labels plus `γ·‖θ̃ − θ̂‖²`, both angle vectors sorted ascending
/// before differencing.
pub fn init_loss(
    obs: &ObservationSet,
    state: &VariationalState,
    priors: &[ChannelPrior],
    pseudo: &PseudoLabels,
    cfg: &InitLossConfig,
) -> Result<f64> {
    if pseudo.angles.len() != state.k_users() {
        return Err(Error::DimensionMismatch {
            context: "pseudo-labels vs users",
            expected: state.k_users(),
            actual: pseudo.angles.len(),
        });
    }
    let labels = AoAVector::new(pseudo.angles.clone())?;
    let surrogate = total_loss(obs, &state.with_aoas(labels.clone()), priors)?;
    Ok(surrogate.total + cfg.gamma * sorted_distance_sq(&labels, &state.aoa_estimate))
}

pub(crate) fn sorted_distance_sq(a: &AoAVector, b: &AoAVector) -> f64 {
    a.sorted()
        .as_slice()
        .iter()
        .zip(b.sorted().as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum()
}

/// One reparameterized draw `ĥ_m = μ_ĥm + L ε` with `L L^H = Σ_ĥm`.
pub fn reparameterize_sample<R: Rng + ?Sized>(state: &VariationalState, m: usize, rng: &mut R) -> CVec {
    let eps = standard_complex_normal_vec(rng, state.k_users());
    let l = linalg::psd_sqrt(&state.channel_covariances[m]);
    state.channel_means.column(m) + l * eps
}

/// Path gains `|h|` and path angles `arg h ∈ (−π, π]`.
pub fn recover_path_parameters(gains: &CVec) -> (Vec<f64>, Vec<f64>) {
    gains.iter().map(|z| (z.norm(), z.arg())).unzip()
}
