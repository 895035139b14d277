//! Monte Carlo comparison of the variational estimator against MUSIC with
//! least-squares gains, swept over SNR.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{fmt_f64, simulate_trial, trial_rng, InitMode, Prepared, Scenario, SimulatedTrial, SnrDb};
use crate::baselines::{ls_channel, music_estimate};
use crate::error::Result;
use crate::estimator::{estimate_with, random_initialization, Initialization};
use crate::linalg::CMat;
use crate::par;
use crate::signal::AoAVector;

pub const PROPOSED: &str = "proposed";
pub const MUSIC_LS: &str = "music-ls";
pub const METHODS: [&str; 2] = [PROPOSED, MUSIC_LS];

pub const METRICS_HEADER: &str =
    "method,snr_db,mse_aoa,mse_path_gain,mse_path_angle,median_abs_aoa_error,trials,failures";
pub const TRIALS_HEADER: &str = "method,snr_db,trial,true_aoas_deg,estimated_aoas_deg,aoa_sq_error,path_gain_sq_error,path_angle_sq_error,converged,loss_monotone,status";
pub const TIMING_HEADER: &str = "method,snr_db,trials,runtime_ms";

/// Aggregate over the successful trials of one method at one SNR.
/// Angle errors are in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub snr_db: SnrDb,
    pub mse_aoa: f64,
    pub mse_path_gain: f64,
    pub mse_path_angle: f64,
    pub median_abs_aoa_error: f64,
    pub trials: usize,
    pub failures: usize,
    /// Wall-clock total; kept out of the deterministic outputs.
    #[serde(skip)]
    pub runtime_ms: f64,
}

/// Result of one method on one synthesized observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub method: String,
    pub snr_db: SnrDb,
    pub trial: usize,
    pub true_aoas: Vec<f64>,
    pub estimated_aoas: Vec<f64>,
    /// Mean over users of the squared angle error (rad²).
    pub aoa_sq_error: f64,
    /// Mean over users and snapshots of the squared path-gain error.
    pub path_gain_sq_error: f64,
    /// Mean over users and snapshots of the squared wrapped path-angle error (rad²).
    pub path_angle_sq_error: f64,
    /// Largest absolute angle error over users (rad).
    pub max_abs_aoa_error: f64,
    pub converged: Option<bool>,
    pub loss_monotone: Option<bool>,
    pub error: Option<String>,
    #[serde(skip)]
    pub runtime_ms: f64,
}

impl TrialOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }

    fn failed(method: &str, snr: SnrDb, trial: usize, truth: Vec<f64>, err: String) -> Self {
        Self {
            method: method.into(),
            snr_db: snr,
            trial,
            true_aoas: truth,
            estimated_aoas: Vec::new(),
            aoa_sq_error: f64::NAN,
            path_gain_sq_error: f64::NAN,
            path_angle_sq_error: f64::NAN,
            max_abs_aoa_error: f64::NAN,
            converged: None,
            loss_monotone: None,
            error: Some(err),
            runtime_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<MetricRow>,
    pub trials: Vec<TrialOutcome>,
}

/// Wrap an angle difference to `(−π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// `perm[k]` is the estimated user matched to true user `k`, pairing both
/// sides in ascending angle order.
pub fn sorted_assignment(estimate: &[f64], truth: &[f64]) -> Vec<usize> {
    let order = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        idx
    };
    let (oe, ot) = (order(estimate), order(truth));
    let mut perm = vec![0; truth.len()];
    for (e, t) in oe.into_iter().zip(ot) {
        perm[t] = e;
    }
    perm
}

/// Squared errors after alignment: (mean angle², mean gain², mean wrapped phase², max |angle|).
pub fn aligned_errors(est_aoas: &[f64], est_gains: &CMat, true_aoas: &[f64], true_gains: &CMat) -> (f64, f64, f64, f64) {
    let perm = sorted_assignment(est_aoas, true_aoas);
    let k = true_aoas.len();
    let m = true_gains.ncols();
    let mut aoa = 0.0;
    let mut worst: f64 = 0.0;
    let mut gain = 0.0;
    let mut phase = 0.0;
    for (t, &e) in perm.iter().enumerate() {
        let d = est_aoas[e] - true_aoas[t];
        aoa += d * d;
        worst = worst.max(d.abs());
        for s in 0..m {
            let (h, hh) = (true_gains[(t, s)], est_gains[(e, s)]);
            gain += (hh.norm() - h.norm()).powi(2);
            phase += wrap_angle(hh.arg() - h.arg()).powi(2);
        }
    }
    (aoa / k as f64, gain / (k * m) as f64, phase / (k * m) as f64, worst)
}

fn outcome(
    method: &str,
    sim: &SimulatedTrial,
    aoas: &AoAVector,
    gains: &CMat,
    converged: Option<bool>,
    monotone: Option<bool>,
    runtime_ms: f64,
) -> TrialOutcome {
    let truth = sim.true_aoas.as_slice();
    let (a, g, p, worst) = aligned_errors(aoas.as_slice(), gains, truth, &sim.channel.gains);
    TrialOutcome {
        method: method.into(),
        snr_db: sim.snr_db,
        trial: sim.trial,
        true_aoas: truth.to_vec(),
        estimated_aoas: aoas.as_slice().to_vec(),
        aoa_sq_error: a,
        path_gain_sq_error: g,
        path_angle_sq_error: p,
        max_abs_aoa_error: worst,
        converged,
        loss_monotone: monotone,
        error: None,
        runtime_ms,
    }
}

/// Run both methods on one (SNR, trial) cell.
pub fn run_trial(prepared: &Prepared, snr_index: usize, trial: usize) -> Vec<TrialOutcome> {
    let scenario = &prepared.scenario;
    let snr = scenario.snr_db[snr_index];
    let mut rng = trial_rng(scenario.seed, snr_index, trial);
    let sim = match simulate_trial(prepared, snr_index, trial, &mut rng) {
        Ok(s) => s,
        Err(e) => {
            return METHODS
                .iter()
                .map(|m| TrialOutcome::failed(m, snr, trial, Vec::new(), e.to_string()))
                .collect();
        }
    };
    let truth = sim.true_aoas.as_slice().to_vec();
    let priors = std::slice::from_ref(&prepared.prior);

    let start = Instant::now();
    let proposed = (|| -> Result<TrialOutcome> {
        let init = match scenario.init_mode {
            InitMode::PseudoLabels => Initialization::PseudoLabels,
            InitMode::Random => {
                Initialization::Fixed(random_initialization(&prepared.search_sector, scenario.users, &mut rng)?)
            }
        };
        let res = estimate_with(
            &sim.observation,
            priors,
            &prepared.search_sector,
            &prepared.grid,
            &prepared.optimizer,
            &init,
        )?;
        let monotone = res.loss_trace.windows(2).all(|w| w[1].total <= w[0].total);
        Ok(outcome(
            PROPOSED,
            &sim,
            &res.state.aoa_estimate,
            &res.state.channel_means,
            Some(res.converged),
            Some(monotone),
            start.elapsed().as_secs_f64() * 1e3,
        ))
    })()
    .unwrap_or_else(|e| TrialOutcome::failed(PROPOSED, snr, trial, truth.clone(), e.to_string()));

    let start = Instant::now();
    let music = (|| -> Result<TrialOutcome> {
        let spec = music_estimate(&sim.observation, &prepared.music_grid, scenario.users)?;
        let aoas = AoAVector::new(spec.peaks)?;
        let gains = ls_channel(&sim.observation, &aoas)?;
        Ok(outcome(MUSIC_LS, &sim, &aoas, &gains, None, None, start.elapsed().as_secs_f64() * 1e3))
    })()
    .unwrap_or_else(|e| TrialOutcome::failed(MUSIC_LS, snr, trial, truth, e.to_string()));

    vec![proposed, music]
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// All (SNR, trial) cells, run in parallel and aggregated in
/// (method, SNR, trial) order.
pub fn run_benchmark(scenario: &Scenario) -> Result<BenchmarkReport> {
    let prepared = Prepared::new(scenario)?;
    let cells: Vec<(usize, usize)> = (0..scenario.snr_db.len())
        .flat_map(|s| (0..scenario.n_trials).map(move |t| (s, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = par::map_slice(&cells, |&(s, t)| run_trial(&prepared, s, t))
        .into_iter()
        .flatten()
        .collect();

    let mut rows = Vec::new();
    let mut trials = Vec::new();
    let per_cell = METHODS.len();
    for (mi, method) in METHODS.into_iter().enumerate() {
        for (si, &snr) in scenario.snr_db.iter().enumerate() {
            let cell: Vec<&TrialOutcome> = (0..scenario.n_trials)
                .map(|t| &outcomes[(si * scenario.n_trials + t) * per_cell + mi])
                .collect();
            let ok: Vec<&&TrialOutcome> = cell.iter().filter(|o| o.succeeded()).collect();
            rows.push(MetricRow {
                method: method.into(),
                snr_db: snr,
                mse_aoa: mean(ok.iter().map(|o| o.aoa_sq_error)),
                mse_path_gain: mean(ok.iter().map(|o| o.path_gain_sq_error)),
                mse_path_angle: mean(ok.iter().map(|o| o.path_angle_sq_error)),
                median_abs_aoa_error: median(ok.iter().map(|o| o.aoa_sq_error.sqrt()).collect()),
                trials: ok.len(),
                failures: cell.len() - ok.len(),
                runtime_ms: cell.iter().map(|o| o.runtime_ms).sum(),
            });
            trials.extend(cell.into_iter().cloned());
        }
    }
    Ok(BenchmarkReport { rows, trials })
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.method,
            r.snr_db,
            fmt_f64(r.mse_aoa),
            fmt_f64(r.mse_path_gain),
            fmt_f64(r.mse_path_angle),
            fmt_f64(r.median_abs_aoa_error),
            r.trials,
            r.failures
        ));
    }
    out
}

pub fn timing_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from(TIMING_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{:.3}\n", r.method, r.snr_db, r.trials + r.failures, r.runtime_ms));
    }
    out
}

fn degree_list(v: &[f64]) -> String {
    v.iter().map(|a| fmt_f64(a.to_degrees())).collect::<Vec<_>>().join(";")
}

fn flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "true",
        Some(false) => "false",
        None => "",
    }
}

pub fn trials_csv(trials: &[TrialOutcome]) -> String {
    let mut out = String::from(TRIALS_HEADER);
    out.push('\n');
    for t in trials {
        let status = match &t.error {
            None => "ok".to_string(),
            Some(e) => format!("\"error: {}\"", e.replace('"', "'")),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            t.method,
            t.snr_db,
            t.trial,
            degree_list(&t.true_aoas),
            degree_list(&t.estimated_aoas),
            fmt_f64(t.aoa_sq_error),
            fmt_f64(t.path_gain_sq_error),
            fmt_f64(t.path_angle_sq_error),
            flag(t.converged),
            flag(t.loss_monotone),
            status
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn wrapping() {
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(-3.0 * PI / 2.0) - PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
        assert!((wrap_angle(PI) - PI).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn errors_are_permutation_invariant(
            truth in proptest::collection::vec(-1.5f64..1.5, 1..4),
            noise in proptest::collection::vec(-0.01f64..0.01, 3),
            shift in 0usize..3,
        ) {
            let k = truth.len();
            let est: Vec<f64> = truth.iter().zip(&noise).map(|(t, n)| t + n).collect();
            let tg = CMat::from_fn(k, 2, |i, j| Complex64::new(i as f64 + 1.0, j as f64));
            let eg = CMat::from_fn(k, 2, |i, j| Complex64::new(i as f64 + 1.1, j as f64 - 0.1));
            let base = aligned_errors(&est, &eg, &truth, &tg);
            // Relabel the true users with a cyclic shift.
            let rot = |v: &[f64]| (0..k).map(|i| v[(i + shift) % k]).collect::<Vec<_>>();
            let tg2 = CMat::from_fn(k, 2, |i, j| tg[((i + shift) % k, j)]);
            let shifted = aligned_errors(&est, &eg, &rot(&truth), &tg2);
            prop_assert!((base.0 - shifted.0).abs() < 1e-15);
            prop_assert!(base.0 >= 0.0 && base.1 >= 0.0 && base.2 >= 0.0);
        }
    }

    #[test]
    fn assignment_by_order() {
        assert_eq!(sorted_assignment(&[0.5, -0.2, 0.1], &[0.0, 0.6, -0.3]), vec![2, 0, 1]);
    }

    #[test]
    fn golden_headers() {
        assert_eq!(
            METRICS_HEADER,
            "method,snr_db,mse_aoa,mse_path_gain,mse_path_angle,median_abs_aoa_error,trials,failures"
        );
        assert_eq!(TIMING_HEADER, "method,snr_db,trials,runtime_ms");
    }
}
