//! Experiment orchestration: scenario files, Monte Carlo benchmarks over
//! SNR and seeds, landscape exports and the command-line front end.

pub mod benchmark;
pub mod cli;
pub mod config;
pub mod export;

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use benchmark::{run_benchmark, BenchmarkReport, MetricRow, TrialOutcome};
pub use config::{AoaSpec, InitMode, Scenario, SnrDb};
pub use export::{run_landscape_export, LandscapeReport};

use crate::error::{Error, Result};
use crate::estimator::OptimizerConfig;
use crate::preprocess::{AngleGrid, Sector};
use crate::signal::{sample_channel, snr_to_noise_variance, synthesize_observation, AoAVector, ChannelPrior, ChannelRealization, ObservationSet};

const MAX_DRAW_ATTEMPTS: usize = 10_000;

/// Independent generator for one (SNR, trial) cell. Streams keep cells
/// disjoint, so results do not depend on evaluation order.
pub fn trial_rng(master_seed: u64, snr_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((snr_index as u64) << 32) | trial as u64);
    rng
}

/// Everything derived once from a scenario.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub prior: ChannelPrior,
    /// Sector the users actually lie in.
    pub user_sector: Sector,
    /// Range searched by the estimators.
    pub search_sector: Sector,
    pub grid: AngleGrid,
    pub music_grid: AngleGrid,
    pub optimizer: OptimizerConfig,
}

impl Prepared {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            scenario: scenario.clone(),
            prior: scenario.prior()?,
            user_sector: scenario.sector()?,
            search_sector: scenario.search_sector()?,
            grid: scenario.pseudo_label_grid()?,
            music_grid: scenario.music_grid()?,
            optimizer: scenario.optimizer_config(),
        })
    }
}

/// One synthesized observation with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrial {
    pub snr_db: SnrDb,
    pub trial: usize,
    pub true_aoas: AoAVector,
    pub channel: ChannelRealization,
    pub observation: ObservationSet,
}

/// Draw the angles for a trial: the fixed list, or uniform draws in the
/// user sector respecting the minimum separation.
pub fn draw_aoas<R: Rng + ?Sized>(prepared: &Prepared, rng: &mut R) -> Result<AoAVector> {
    let scenario = &prepared.scenario;
    match &scenario.aoas_deg {
        AoaSpec::Fixed(v) => AoAVector::from_degrees(v),
        AoaSpec::RandomInSector => {
            let sep = scenario.min_separation_deg.to_radians();
            let (lo, hi) = (prepared.user_sector.lower(), prepared.user_sector.upper());
            for _ in 0..MAX_DRAW_ATTEMPTS {
                let mut v: Vec<f64> = (0..scenario.users).map(|_| rng.random_range(lo..=hi)).collect();
                v.sort_by(f64::total_cmp);
                if v.windows(2).all(|w| w[1] - w[0] >= sep) {
                    return AoAVector::new(v);
                }
            }
            Err(Error::invalid(format!(
                "could not place {} users {}° apart in the sector",
                scenario.users, scenario.min_separation_deg
            )))
        }
    }
}

/// Synthesize the observation for one cell, leaving `rng` positioned
/// after the draws so the caller can keep using it.
pub fn simulate_trial<R: Rng + ?Sized>(
    prepared: &Prepared,
    snr_index: usize,
    trial: usize,
    rng: &mut R,
) -> Result<SimulatedTrial> {
    let scenario = &prepared.scenario;
    let snr = *scenario
        .snr_db
        .get(snr_index)
        .ok_or_else(|| Error::invalid(format!("no SNR with index {snr_index}")))?;
    let aoas = draw_aoas(prepared, rng)?;
    let channel = sample_channel(&prepared.prior, scenario.snapshots, rng)?;
    let noise_variance = if snr.is_noiseless() {
        0.0
    } else {
        snr_to_noise_variance(snr.0, &scenario.array, &prepared.prior, &aoas)
    };
    let observation = synthesize_observation(&scenario.array, &aoas, &channel, noise_variance, rng)?;
    Ok(SimulatedTrial {
        snr_db: snr,
        trial,
        true_aoas: aoas,
        channel,
        observation,
    })
}

/// Write `(file name, contents)` pairs under `dir`, creating it if needed.
pub fn write_files(dir: &Path, files: &[(String, String)]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            Ok(path)
        })
        .collect()
}

/// Shortest round-trip decimal form; `NaN` and `inf` spelled out.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}
