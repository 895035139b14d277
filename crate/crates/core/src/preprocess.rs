//! Data preprocessing: empirical covariance, codebook-correlation
//! pseudo-labels over an angle grid, and sectorization of the search range.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::par;
use crate::signal::{array_response, ObservationSet};

const EDGE_SLACK: f64 = 1e-9;
const STEP_SLACK: f64 = 1e-7;

/// Inclusive uniform grid `{min, min+Δ, …, max}` of candidate angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    min_angle: f64,
    max_angle: f64,
    step: f64,
}

impl AngleGrid {
    pub fn new(min_angle: f64, max_angle: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid(format!("grid step must be positive, got {step}")));
        }
        if !(min_angle < max_angle) {
            return Err(Error::invalid(format!(
                "grid minimum {min_angle} must be below maximum {max_angle}"
            )));
        }
        if min_angle < -FRAC_PI_2 - EDGE_SLACK || max_angle > FRAC_PI_2 + EDGE_SLACK {
            return Err(Error::invalid("grid must lie within [-π/2, π/2]"));
        }
        if (max_angle - min_angle) / step < 1.0 - STEP_SLACK {
            return Err(Error::invalid("grid span must cover at least one step"));
        }
        Ok(Self {
            min_angle: min_angle.max(-FRAC_PI_2),
            max_angle: max_angle.min(FRAC_PI_2),
            step,
        })
    }

    pub fn from_degrees(min_deg: f64, max_deg: f64, step_deg: f64) -> Result<Self> {
        Self::new(min_deg.to_radians(), max_deg.to_radians(), step_deg.to_radians())
    }

    pub fn min_angle(&self) -> f64 {
        self.min_angle
    }

    pub fn max_angle(&self) -> f64 {
        self.max_angle
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn whole_steps(&self) -> (usize, bool) {
        let x = (self.max_angle - self.min_angle) / self.step;
        let n = (x + STEP_SLACK).floor();
        (n as usize, (x - n).abs() > STEP_SLACK)
    }

    pub fn len(&self) -> usize {
        let (n, ragged) = self.whole_steps();
        n + 1 + usize::from(ragged)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The i-th grid angle; the last point is exactly `max_angle`.
    pub fn point(&self, i: usize) -> f64 {
        let (n, ragged) = self.whole_steps();
        if (!ragged && i == n) || (ragged && i == n + 1) {
            self.max_angle
        } else {
            self.min_angle + i as f64 * self.step
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point nearest to `angle` (clamped to the grid).
    pub fn nearest_index(&self, angle: f64) -> usize {
        let i = ((angle - self.min_angle) / self.step).round();
        (i.max(0.0) as usize).min(self.len() - 1)
    }
}

/// Angular sector `[center − width/2, center + width/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    center: f64,
    width: f64,
}

impl Sector {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !center.is_finite() {
            return Err(Error::invalid(format!(
                "sector needs positive width and finite center, got ({center}, {width})"
            )));
        }
        let (lo, hi) = (center - width / 2.0, center + width / 2.0);
        if lo < -FRAC_PI_2 - EDGE_SLACK || hi > FRAC_PI_2 + EDGE_SLACK {
            return Err(Error::invalid(format!(
                "sector [{lo}, {hi}] rad exceeds [-π/2, π/2]"
            )));
        }
        Ok(Self { center, width })
    }

    pub fn from_degrees(center_deg: f64, width_deg: f64) -> Result<Self> {
        Self::new(center_deg.to_radians(), width_deg.to_radians())
    }

    /// The whole half-space `[-π/2, π/2]`.
    pub fn full() -> Self {
        Self {
            center: 0.0,
            width: std::f64::consts::PI,
        }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn lower(&self) -> f64 {
        (self.center - self.width / 2.0).max(-FRAC_PI_2)
    }

    pub fn upper(&self) -> f64 {
        (self.center + self.width / 2.0).min(FRAC_PI_2)
    }

    pub fn contains(&self, angle: f64) -> bool {
        angle >= self.lower() - EDGE_SLACK && angle <= self.upper() + EDGE_SLACK
    }

    pub fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.lower(), self.upper())
    }
}

/// Grid spanning exactly the sector with spacing `step`.
pub fn sector_grid(sector: &Sector, step: f64) -> Result<AngleGrid> {
    AngleGrid::new(sector.lower(), sector.upper(), step)
}

/// `R = (1/M)·Y·Y^H`.
pub fn empirical_covariance(obs: &ObservationSet) -> CMat {
    let y = &obs.signal;
    (y * y.adjoint()).unscale(obs.n_snapshots() as f64)
}

/// `Y·1_M`, the snapshot sum used by every correlation evaluation.
fn snapshot_sum(obs: &ObservationSet) -> CVec {
    obs.signal.column_sum()
}

fn correlation_from_sum(obs: &ObservationSet, sum: &CVec, theta: f64) -> f64 {
    let a = array_response(&obs.array, theta);
    sum.dotc(&a).norm() / obs.n_snapshots() as f64
}

/// `r(θ, Y) = (1/M)·|1_M^T Y^H a(θ)|`.
pub fn codebook_correlation(obs: &ObservationSet, theta: f64) -> f64 {
    correlation_from_sum(obs, &snapshot_sum(obs), theta)
}

/// Correlation at every grid point, in grid order.
pub fn correlation_scan(obs: &ObservationSet, grid: &AngleGrid) -> Vec<f64> {
    let sum = snapshot_sum(obs);
    par::map_range_chunked(grid.len(), 512, |i| {
        correlation_from_sum(obs, &sum, grid.point(i))
    })
}

/// Grid angles with the K largest correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabels {
    pub angles: Vec<f64>,
    pub correlations: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelOptions {
    /// Minimum separation (rad) between selected labels; `None` keeps the
    /// plain top-K selection.
    pub suppression_radius: Option<f64>,
}

pub fn pseudo_labels(obs: &ObservationSet, grid: &AngleGrid, k_users: usize) -> Result<PseudoLabels> {
    pseudo_labels_with(obs, grid, k_users, &PseudoLabelOptions::default())
}

pub fn pseudo_labels_with(
    obs: &ObservationSet,
    grid: &AngleGrid,
    k_users: usize,
    options: &PseudoLabelOptions,
) -> Result<PseudoLabels> {
    if k_users == 0 {
        return Err(Error::invalid("need at least one user"));
    }
    if grid.len() < k_users {
        return Err(Error::GridTooSmall {
            points: grid.len(),
            required: k_users,
        });
    }
    let values = correlation_scan(obs, grid);
    select_top(&values, grid, k_users, options.suppression_radius)
}

/// Top-K selection with ties going to the smaller angle. Maximizing the
/// sum of K correlations over K-subsets is the same as taking the K
/// individually largest.
fn select_top(
    values: &[f64],
    grid: &AngleGrid,
    k: usize,
    radius: Option<f64>,
) -> Result<PseudoLabels> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for idx in order {
        if chosen.len() == k {
            break;
        }
        let ok = match radius {
            Some(r) => chosen
                .iter()
                .all(|&c| (grid.point(c) - grid.point(idx)).abs() > r),
            None => true,
        };
        if ok {
            chosen.push(idx);
        }
    }
    if chosen.len() < k {
        return Err(Error::GridTooSmall {
            points: chosen.len(),
            required: k,
        });
    }
    chosen.sort_unstable();
    Ok(PseudoLabels {
        angles: chosen.iter().map(|&i| grid.point(i)).collect(),
        correlations: chosen.iter().map(|&i| values[i]).collect(),
    })
}
