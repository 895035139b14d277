//! Per-observation variational estimation: the channel posterior is
//! updated in closed form, the angles by projected gradient descent with
//! backtracking, alternately. A pseudo-label phase seeds the angles.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::loss::{self, check_priors, prior_for, InitLossConfig, LossBreakdown, VariationalState};
use crate::preprocess::{pseudo_labels_with, AngleGrid, PseudoLabelOptions, PseudoLabels, Sector};
use crate::signal::{array_matrix, AoAVector, ChannelPrior, ObservationSet};

/// Relative eigenvalue cutoff for the pseudo-inverse in the noiseless case.
const PINV_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
/// Sufficient-decrease fraction for the backtracking line search.
const ARMIJO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOptimizerConfig")]
pub struct OptimizerConfig {
    pub aoa_step_size: f64,
    pub max_outer_iterations: usize,
    pub aoa_gradient_tolerance: f64,
    /// Stop when one outer iteration lowers the loss by less than this
    /// fraction of `max(1, |loss|)`.
    pub loss_tolerance: f64,
    /// Weight of the pseudo-label penalty. `None` picks it so that both
    /// terms of the initialization objective have the same magnitude.
    pub init_config: Option<InitLossConfig>,
    pub phase1_iterations: usize,
    pub pseudo_labels: PseudoLabelOptions,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimizerConfig {
    #[serde(default = "defaults::step")]
    aoa_step_size: f64,
    #[serde(default = "defaults::iterations")]
    max_outer_iterations: usize,
    #[serde(default = "defaults::gradient_tol")]
    aoa_gradient_tolerance: f64,
    #[serde(default = "defaults::loss_tol")]
    loss_tolerance: f64,
    #[serde(default)]
    init_config: Option<InitLossConfig>,
    #[serde(default = "defaults::phase1")]
    phase1_iterations: usize,
    #[serde(default)]
    pseudo_labels: PseudoLabelOptions,
}

mod defaults {
    pub fn step() -> f64 {
        1e-2
    }
    pub fn iterations() -> usize {
        500
    }
    pub fn gradient_tol() -> f64 {
        1e-7
    }
    pub fn loss_tol() -> f64 {
        1e-10
    }
    pub fn phase1() -> usize {
        5
    }
}

impl TryFrom<RawOptimizerConfig> for OptimizerConfig {
    type Error = Error;
    fn try_from(r: RawOptimizerConfig) -> Result<Self> {
        let cfg = Self {
            aoa_step_size: r.aoa_step_size,
            max_outer_iterations: r.max_outer_iterations,
            aoa_gradient_tolerance: r.aoa_gradient_tolerance,
            loss_tolerance: r.loss_tolerance,
            init_config: r.init_config,
            phase1_iterations: r.phase1_iterations,
            pseudo_labels: r.pseudo_labels,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            aoa_step_size: defaults::step(),
            max_outer_iterations: defaults::iterations(),
            aoa_gradient_tolerance: defaults::gradient_tol(),
            loss_tolerance: defaults::loss_tol(),
            init_config: None,
            phase1_iterations: defaults::phase1(),
            pseudo_labels: PseudoLabelOptions::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.aoa_step_size) {
            return Err(Error::invalid("aoa_step_size must be positive"));
        }
        if !positive(self.aoa_gradient_tolerance) {
            return Err(Error::invalid("aoa_gradient_tolerance must be positive"));
        }
        if !positive(self.loss_tolerance) {
            return Err(Error::invalid("loss_tolerance must be positive"));
        }
        if self.max_outer_iterations == 0 || self.phase1_iterations == 0 {
            return Err(Error::invalid("iteration counts must be positive"));
        }
        if self.phase1_iterations > self.max_outer_iterations {
            return Err(Error::invalid("phase1_iterations exceeds max_outer_iterations"));
        }
        if let Some(InitLossConfig { gamma }) = self.init_config {
            InitLossConfig::new(gamma)?;
        }
        if let Some(r) = self.pseudo_labels.suppression_radius {
            if !(r >= 0.0) {
                return Err(Error::invalid("suppression radius must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    LossTolerance,
    StepUnderflow,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub state: VariationalState,
    /// Loss after every outer iteration, starting with the initial state.
    pub loss_trace: Vec<LossBreakdown>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations_used: usize,
    #[serde(with = "crate::serial::rmat")]
    pub path_gains: DMatrix<f64>,
    #[serde(with = "crate::serial::rmat")]
    pub path_angles: DMatrix<f64>,
    pub pseudo_labels: Option<PseudoLabels>,
    /// Initialization objective at the end of the first phase.
    pub init_objective: Option<f64>,
    pub gamma: Option<f64>,
}

impl EstimationResult {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().map_or(f64::NAN, |l| l.total)
    }
}

/// Training objective. With σ² > 0 it is the negative ELBO; in the
/// noiseless limit the posterior collapses and the objective becomes the
/// plain squared reconstruction error.
pub fn objective(obs: &ObservationSet, state: &VariationalState, priors: &[ChannelPrior]) -> Result<LossBreakdown> {
    if obs.noise_variance > 0.0 {
        loss::total_loss(obs, state, priors)
    } else {
        let a_hat = array_matrix(&obs.array, &state.aoa_estimate);
        Ok(LossBreakdown::new(0.0, loss::reconstruction_sum(&obs.signal, &a_hat, state)))
    }
}

/// Exact minimizer of the loss over the channel posterior at fixed angles:
/// `μ_m = (Â^HÂ + σ²Σ_h⁻¹)⁻¹(Â^H y_m + σ²Σ_h⁻¹μ_h)`,
/// `Σ = (Σ_h⁻¹ + Â^HÂ/σ²)⁻¹`.
pub fn closed_form_channel_update(
    obs: &ObservationSet,
    aoa_estimate: &AoAVector,
    priors: &[ChannelPrior],
) -> Result<(CMat, Vec<CMat>)> {
    let k = aoa_estimate.len();
    let m_count = obs.n_snapshots();
    check_priors(priors, k, m_count)?;
    let a_hat = array_matrix(&obs.array, aoa_estimate);
    let gram = a_hat.adjoint() * &a_hat;
    let matched = a_hat.adjoint() * &obs.signal;
    let s2 = obs.noise_variance;

    if s2 == 0.0 {
        let means = linalg::pinv_hermitian(&gram, PINV_TOL) * matched;
        return Ok((means, vec![CMat::zeros(k, k); m_count]));
    }

    let solve_for = |prior: &ChannelPrior| -> Result<(CMat, CMat, nalgebra::Cholesky<Complex64, nalgebra::Dyn>)> {
        let chol_p = linalg::cholesky(prior.covariance(), "prior covariance")?;
        let prior_precision = linalg::hermitize(&chol_p.inverse());
        let system = linalg::hermitize(&(&gram + prior_precision.scale(s2)));
        let chol = linalg::cholesky(&system, "regularized Gram matrix")?;
        let cov = linalg::hermitize(&chol.inverse().scale(s2));
        let shift = (prior_precision * prior.mean()).scale(s2);
        Ok((cov, CMat::from_column_slice(k, 1, shift.as_slice()), chol))
    };

    let mut means = CMat::zeros(k, m_count);
    let mut covs = Vec::with_capacity(m_count);
    if priors.len() == 1 {
        let (cov, shift, chol) = solve_for(&priors[0])?;
        let mut rhs = matched;
        for mut col in rhs.column_iter_mut() {
            col += shift.column(0);
        }
        means = chol.solve(&rhs);
        covs = vec![cov; m_count];
    } else {
        for m in 0..m_count {
            let (cov, shift, chol) = solve_for(prior_for(priors, m))?;
            let rhs = matched.column(m) + shift.column(0);
            means.set_column(m, &chol.solve(&rhs));
            covs.push(cov);
        }
    }
    Ok((means, covs))
}

/// Gradient of the objective with respect to each angle:
/// `g_k = (2/σ²) Σ_m Re[(Σ_l Σ_m[k,l] â_l^H − μ_mk r_m^H) ∂â_k]`,
/// where `r_m = y_m − Â μ_m` and `∂â_k = −j·(2πd/λ)·n·cos θ̂_k ⊙ â_k`.
/// The 1/σ² factor is dropped in the noiseless case, matching [`objective`].
pub fn aoa_gradient_observed(obs: &ObservationSet, state: &VariationalState) -> Result<Vec<f64>> {
    if state.n_snapshots() != obs.n_snapshots() {
        return Err(Error::DimensionMismatch {
            context: "state snapshots vs observation",
            expected: obs.n_snapshots(),
            actual: state.n_snapshots(),
        });
    }
    let k = state.k_users();
    let n = obs.array.n_antennas();
    let a_hat = array_matrix(&obs.array, &state.aoa_estimate);
    let residual = &obs.signal - &a_hat * &state.channel_means;
    let scale = if obs.noise_variance > 0.0 { 2.0 / obs.noise_variance } else { 2.0 };
    let c = obs.array.wavenumber_spacing();

    let mut grad = vec![0.0; k];
    for (kk, g) in grad.iter_mut().enumerate() {
        let theta = state.aoa_estimate.as_slice()[kk];
        let rate = c * theta.cos();
        let deriv = CMat::from_fn(n, 1, |i, _| a_hat[(i, kk)] * Complex64::new(0.0, -rate * i as f64));
        // Inner products of every column of Â and of the residual with ∂â_k.
        let a_proj = a_hat.adjoint() * &deriv;
        let r_proj = residual.adjoint() * &deriv;
        let mut acc = 0.0;
        for m in 0..state.n_snapshots() {
            let cov = &state.channel_covariances[m];
            let mut term = -state.channel_means[(kk, m)] * r_proj[(m, 0)];
            for l in 0..k {
                term += cov[(kk, l)] * a_proj[(l, 0)];
            }
            acc += term.re;
        }
        *g = scale * acc;
    }
    Ok(grad)
}

/// Outcome of one projected, backtracked angle step.
#[derive(Debug, Clone, PartialEq)]
pub struct DescentStep {
    pub state: VariationalState,
    pub loss: LossBreakdown,
    pub step_used: f64,
    /// No acceptable step was found within the halving budget.
    pub underflow: bool,
}

/// `θ̂ ← clamp(θ̂ − t·g)` starting from `t = aoa_step_size` and halving `t`
/// until the loss decreases sufficiently. Channel parameters are untouched.
pub fn aoa_descent_step(
    obs: &ObservationSet,
    state: &VariationalState,
    priors: &[ChannelPrior],
    gradient: &[f64],
    cfg: &OptimizerConfig,
    sector: &Sector,
) -> Result<DescentStep> {
    let current = objective(obs, state, priors)?;
    let unchanged = |underflow| DescentStep {
        state: state.clone(),
        loss: current,
        step_used: 0.0,
        underflow,
    };
    if gradient.iter().all(|&g| g == 0.0) {
        return Ok(unchanged(false));
    }
    let theta = state.aoa_estimate.as_slice();
    let mut step = cfg.aoa_step_size;
    for _ in 0..=MAX_HALVINGS {
        let proposal: Vec<f64> = theta
            .iter()
            .zip(gradient)
            .map(|(t, g)| sector.clamp(t - step * g))
            .collect();
        // Predicted first-order decrease along the projected displacement.
        let predicted: f64 = theta
            .iter()
            .zip(&proposal)
            .zip(gradient)
            .map(|((t, p), g)| g * (t - p))
            .sum();
        if predicted <= 0.0 {
            // Projection removed every descent component.
            return Ok(unchanged(false));
        }
        let candidate = state.with_aoas(AoAVector::new(proposal)?);
        let loss = objective(obs, &candidate, priors)?;
        if loss.total <= current.total - ARMIJO * predicted {
            return Ok(DescentStep {
                state: candidate,
                loss,
                step_used: step,
                underflow: false,
            });
        }
        step *= 0.5;
    }
    Ok(unchanged(true))
}

/// How the angles are seeded before the alternating phase.
#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    PseudoLabels,
    Fixed(AoAVector),
}

/// Draw K angles uniformly in the sector.
pub fn random_initialization<R: Rng + ?Sized>(sector: &Sector, k: usize, rng: &mut R) -> Result<AoAVector> {
    AoAVector::new((0..k).map(|_| rng.random_range(sector.lower()..=sector.upper())).collect())
}

/// Two-phase estimation seeded by pseudo-labels on `grid`.
pub fn estimate(
    obs: &ObservationSet,
    priors: &[ChannelPrior],
    sector: &Sector,
    grid: &AngleGrid,
    cfg: &OptimizerConfig,
) -> Result<EstimationResult> {
    estimate_with(obs, priors, sector, grid, cfg, &Initialization::PseudoLabels)
}

/// Alternating phase only, starting from the given angles.
pub fn estimate_from(
    obs: &ObservationSet,
    priors: &[ChannelPrior],
    sector: &Sector,
    initial: &AoAVector,
    cfg: &OptimizerConfig,
) -> Result<EstimationResult> {
    let state = initial_state(obs, priors, sector, initial)?;
    refine(obs, priors, sector, cfg, state, Vec::new(), None, None, None)
}

pub fn estimate_with(
    obs: &ObservationSet,
    priors: &[ChannelPrior],
    sector: &Sector,
    grid: &AngleGrid,
    cfg: &OptimizerConfig,
    init: &Initialization,
) -> Result<EstimationResult> {
    cfg.validate()?;
    let k = priors
        .first()
        .ok_or_else(|| Error::invalid("at least one prior is required"))?
        .k_users();
    let labels = match init {
        Initialization::Fixed(aoas) => return estimate_from(obs, priors, sector, aoas, cfg),
        Initialization::PseudoLabels => pseudo_labels_with(obs, grid, k, &cfg.pseudo_labels)?,
    };

    // Initialization phase. The penalty ties θ̂ to the labels and the
    // surrogate term is evaluated at the labels, so the minimizer over the
    // angles is θ̂ = θ̃ and the minimizer over the channel is the closed form.
    let label_aoas = AoAVector::new(labels.angles.clone())?;
    let mut state = initial_state(obs, priors, sector, &label_aoas)?;
    let mut trace = vec![objective(obs, &state, priors)?];
    let gamma = match cfg.init_config {
        Some(c) => c.gamma,
        None => {
            let spacing = grid.step().max(f64::EPSILON);
            (trace[0].total.abs() / (k as f64 * spacing * spacing)).max(f64::MIN_POSITIVE)
        }
    };
    let init_cfg = InitLossConfig { gamma };
    let mut init_value = init_objective(obs, &state, priors, &labels, &init_cfg)?;
    for _ in 1..cfg.phase1_iterations {
        let (means, covs) = closed_form_channel_update(obs, &state.aoa_estimate, priors)?;
        let candidate = VariationalState::new(state.aoa_estimate.clone(), means, covs)?;
        let value = init_objective(obs, &candidate, priors, &labels, &init_cfg)?;
        if value >= init_value {
            break;
        }
        init_value = value;
        state = candidate;
        trace.push(objective(obs, &state, priors)?);
    }
    refine(obs, priors, sector, cfg, state, trace, Some(labels), Some(init_value), Some(gamma))
}

fn init_objective(
    obs: &ObservationSet,
    state: &VariationalState,
    priors: &[ChannelPrior],
    labels: &PseudoLabels,
    cfg: &InitLossConfig,
) -> Result<f64> {
    if obs.noise_variance > 0.0 {
        loss::init_loss(obs, state, priors, labels, cfg)
    } else {
        let at_labels = state.with_aoas(AoAVector::new(labels.angles.clone())?);
        Ok(objective(obs, &at_labels, priors)?.total
            + cfg.gamma * loss::sorted_distance_sq(&at_labels.aoa_estimate, &state.aoa_estimate))
    }
}

fn initial_state(
    obs: &ObservationSet,
    priors: &[ChannelPrior],
    sector: &Sector,
    aoas: &AoAVector,
) -> Result<VariationalState> {
    let clamped = AoAVector::new(aoas.as_slice().iter().map(|&t| sector.clamp(t)).collect())?;
    let (means, covs) = closed_form_channel_update(obs, &clamped, priors)?;
    VariationalState::new(clamped, means, covs)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    obs: &ObservationSet,
    priors: &[ChannelPrior],
    sector: &Sector,
    cfg: &OptimizerConfig,
    mut state: VariationalState,
    mut trace: Vec<LossBreakdown>,
    labels: Option<PseudoLabels>,
    init_value: Option<f64>,
    gamma: Option<f64>,
) -> Result<EstimationResult> {
    if trace.is_empty() {
        trace.push(objective(obs, &state, priors)?);
    }
    let mut current = *trace.last().expect("trace is non-empty");
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;
    for _ in 0..cfg.max_outer_iterations {
        let grad = aoa_gradient_observed(obs, &state)?;
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < cfg.aoa_gradient_tolerance {
            stop = StopReason::GradientTolerance;
            break;
        }
        iterations += 1;
        let step = aoa_descent_step(obs, &state, priors, &grad, cfg, sector)?;
        if step.step_used == 0.0 {
            stop = StopReason::StepUnderflow;
            break;
        }
        let (means, covs) = closed_form_channel_update(obs, &step.state.aoa_estimate, priors)?;
        let updated = VariationalState::new(step.state.aoa_estimate.clone(), means, covs)?;
        let updated_loss = objective(obs, &updated, priors)?;
        // The closed form is the exact minimizer; keeping the old channel
        // when rounding says otherwise makes the trace monotone by construction.
        let (next, next_loss) = if updated_loss.total <= step.loss.total {
            (updated, updated_loss)
        } else {
            (step.state, step.loss)
        };
        let decrease = current.total - next_loss.total;
        state = next;
        current = next_loss;
        trace.push(current);
        if decrease < cfg.loss_tolerance * current.total.abs().max(1.0) {
            stop = StopReason::LossTolerance;
            break;
        }
    }
    let path_gains = state.channel_means.map(|z| z.norm());
    let path_angles = state.channel_means.map(|z| z.arg());
    Ok(EstimationResult {
        state,
        loss_trace: trace,
        converged: stop != StopReason::MaxIterations,
        stop_reason: stop,
        iterations_used: iterations,
        path_gains,
        path_angles,
        pseudo_labels: labels,
        init_objective: init_value,
        gamma,
    })
}

/// Squared angle errors after matching estimates to the truth by sorted order.
pub fn aligned_squared_errors(estimate: &AoAVector, truth: &AoAVector) -> Vec<f64> {
    estimate
        .sorted()
        .as_slice()
        .iter()
        .zip(truth.sorted().as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .collect()
}
