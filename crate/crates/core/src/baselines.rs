//! Classical reference methods: MUSIC for the angles and least squares for
//! the gains given angles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::par;
use crate::preprocess::{empirical_covariance, AngleGrid};
use crate::signal::{array_matrix, array_response, AoAVector, ObservationSet};

/// Floor on `a^H E_n E_n^H a` so the pseudo-spectrum stays finite.
pub const MUSIC_DENOMINATOR_FLOOR: f64 = 1e-8;
/// Largest condition number of `Â^HÂ` accepted by [`ls_channel`].
pub const LS_MAX_CONDITION: f64 = 1e12;
const SCAN_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicSpectrum {
    pub grid: AngleGrid,
    pub values: Vec<f64>,
    /// K peak angles, sorted ascending.
    pub peaks: Vec<f64>,
    /// Fewer than K local maxima existed; the rest are the largest
    /// remaining grid values.
    pub degraded: bool,
}

pub fn music_estimate(obs: &ObservationSet, grid: &AngleGrid, k_sources: usize) -> Result<MusicSpectrum> {
    let n = obs.array.n_antennas();
    if k_sources == 0 || k_sources >= n {
        return Err(Error::invalid(format!("MUSIC needs 0 < K < N, got K = {k_sources}, N = {n}")));
    }
    if obs.n_snapshots() < k_sources {
        return Err(Error::invalid(format!(
            "MUSIC needs at least K = {k_sources} snapshots, got {}",
            obs.n_snapshots()
        )));
    }
    if grid.len() < k_sources {
        return Err(Error::GridTooSmall {
            points: grid.len(),
            required: k_sources,
        });
    }
    let (_, vectors) = linalg::hermitian_eigen(&empirical_covariance(obs));
    let noise = vectors.columns(0, n - k_sources).into_owned();
    let noise_h = noise.adjoint();
    let values = par::map_range_chunked(grid.len(), SCAN_CHUNK, |i| {
        let a = array_response(&obs.array, grid.point(i));
        let proj = &noise_h * a;
        1.0 / proj.norm_squared().max(MUSIC_DENOMINATOR_FLOOR)
    });
    let (peaks, degraded) = pick_peaks(&values, k_sources);
    Ok(MusicSpectrum {
        grid: *grid,
        peaks: peaks.into_iter().map(|i| grid.point(i)).collect(),
        values,
        degraded,
    })
}

/// Indices of the K largest strict local maxima (3-point test, endpoints
/// compared with their single neighbour), ties going to the lower index.
/// Pads with the largest remaining values when there are too few maxima.
fn pick_peaks(values: &[f64], k: usize) -> (Vec<usize>, bool) {
    let n = values.len();
    let is_peak = |i: usize| {
        let left = i == 0 || values[i] > values[i - 1];
        let right = i + 1 == n || values[i] > values[i + 1];
        n > 1 && left && right
    };
    let by_value = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    let mut maxima: Vec<usize> = (0..n).filter(|&i| is_peak(i)).collect();
    maxima.sort_by(by_value);
    maxima.truncate(k);
    let degraded = maxima.len() < k;
    if degraded {
        let mut rest: Vec<usize> = (0..n).filter(|i| !maxima.contains(i)).collect();
        rest.sort_by(by_value);
        maxima.extend(rest.into_iter().take(k - maxima.len()));
    }
    maxima.sort_unstable();
    (maxima, degraded)
}

/// `ĥ_m = (Â^HÂ)⁻¹ Â^H y_m` for every snapshot.
pub fn ls_channel(obs: &ObservationSet, aoas: &AoAVector) -> Result<CMat> {
    let a_hat = array_matrix(&obs.array, aoas);
    let gram = linalg::hermitize(&(a_hat.adjoint() * &a_hat));
    let condition = linalg::condition_number(&gram);
    if !(condition <= LS_MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let chol = linalg::cholesky(&gram, "Gram matrix")?;
    Ok(chol.solve(&(a_hat.adjoint() * &obs.signal)))
}
