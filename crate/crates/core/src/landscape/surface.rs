//! Dense evaluation of the noise-averaged loss over a grid of estimates,
//! with every parameter not on an axis held at its true value and the
//! posterior collapsed to a point.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::par;
use crate::signal::{array_matrix, AoAVector, ArrayConfig};

pub const MAX_SURFACE_POINTS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceParameter {
    /// Estimated angle of the user (rad).
    Aoa,
    /// Phase added to the user's gains in every snapshot (rad).
    PathAngleOffset,
    /// Factor applied to the magnitude of the user's gains.
    PathGainScale,
}

/// One axis: `points` evenly spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceAxis {
    pub parameter: SurfaceParameter,
    pub user: usize,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl SurfaceAxis {
    pub fn new(parameter: SurfaceParameter, user: usize, min: f64, max: f64, points: usize) -> Result<Self> {
        let axis = Self {
            parameter,
            user,
            min,
            max,
            points,
        };
        axis.validate()?;
        Ok(axis)
    }

    fn validate(&self) -> Result<()> {
        if self.points == 0 {
            return Err(Error::invalid("surface axis needs at least one point"));
        }
        if !(self.min <= self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::invalid(format!("bad axis range [{}, {}]", self.min, self.max)));
        }
        match self.parameter {
            SurfaceParameter::Aoa if self.min < -FRAC_PI_2 - 1e-12 || self.max > FRAC_PI_2 + 1e-12 => {
                Err(Error::invalid("angle axis must stay within [-pi/2, pi/2]"))
            }
            SurfaceParameter::PathGainScale if self.min < 0.0 => Err(Error::invalid("gain scale must be non-negative")),
            _ => Ok(()),
        }
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.points == 1 {
            self.min
        } else if i + 1 == self.points {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.value(i)).collect()
    }
}

/// Ground truth around which the surface is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceScenario {
    pub array: ArrayConfig,
    pub true_aoas: AoAVector,
    /// K×M true gains.
    pub true_gains: CMat,
    /// Adds the constant `σ²·N·M` noise floor.
    pub noise_variance: f64,
}

/// Loss values on the Cartesian product of the axes, row-major with the
/// first axis varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSurface {
    pub axes: Vec<SurfaceAxis>,
    pub values: Vec<f64>,
}

impl LossSurface {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.points + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (d, axis) in self.axes.iter().enumerate().rev() {
            idx[d] = flat % axis.points;
            flat /= axis.points;
        }
        idx
    }

    pub fn value(&self, idx: &[usize]) -> f64 {
        self.values[self.flat_index(idx)]
    }

    /// Coordinates of a grid point.
    pub fn coordinates(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(&i, a)| a.value(i)).collect()
    }

    /// Flat indices of strict minima over the full neighbourhood
    /// (including diagonals). Boundary points compare only with the
    /// neighbours that exist.
    pub fn local_minima(&self) -> Vec<usize> {
        let shape = self.shape();
        let offsets = neighbour_offsets(shape.len());
        (0..self.values.len())
            .filter(|&flat| {
                let idx = self.multi_index(flat);
                let v = self.values[flat];
                offsets.iter().all(|off| {
                    let mut nb = Vec::with_capacity(idx.len());
                    for (d, (&i, &o)) in idx.iter().zip(off).enumerate() {
                        let j = i as i64 + o;
                        if j < 0 || j >= shape[d] as i64 {
                            return true;
                        }
                        nb.push(j as usize);
                    }
                    v < self.value(&nb)
                })
            })
            .collect()
    }

    /// Local minima within `rel_tol·(max − min)` of the smallest value.
    pub fn global_minima(&self, rel_tol: f64) -> Vec<usize> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cut = lo + rel_tol * (hi - lo);
        self.local_minima().into_iter().filter(|&i| self.values[i] <= cut).collect()
    }

    pub fn argmin(&self) -> usize {
        (0..self.values.len())
            .min_by(|&a, &b| self.values[a].total_cmp(&self.values[b]))
            .unwrap_or(0)
    }
}

fn neighbour_offsets(dims: usize) -> Vec<Vec<i64>> {
    let mut all = vec![vec![]];
    for _ in 0..dims {
        all = all
            .into_iter()
            .flat_map(|p: Vec<i64>| {
                [-1, 0, 1].into_iter().map(move |o| {
                    let mut q = p.clone();
                    q.push(o);
                    q
                })
            })
            .collect();
    }
    all.retain(|p| p.iter().any(|&o| o != 0));
    all
}

pub fn evaluate_surface(axes: &[SurfaceAxis], scenario: &SurfaceScenario) -> Result<LossSurface> {
    if axes.is_empty() {
        return Err(Error::invalid("surface needs at least one axis"));
    }
    let k = scenario.true_aoas.len();
    if scenario.true_gains.nrows() != k {
        return Err(Error::DimensionMismatch {
            context: "surface gains vs AoAs",
            expected: k,
            actual: scenario.true_gains.nrows(),
        });
    }
    let mut total: usize = 1;
    for axis in axes {
        axis.validate()?;
        if axis.user >= k {
            return Err(Error::invalid(format!("axis user {} out of range (K = {k})", axis.user)));
        }
        total = total.saturating_mul(axis.points);
    }
    if total > MAX_SURFACE_POINTS {
        return Err(Error::OversizeGrid {
            points: total,
            limit: MAX_SURFACE_POINTS,
        });
    }

    let clean = array_matrix(&scenario.array, &scenario.true_aoas) * &scenario.true_gains;
    let floor = scenario.noise_variance * (scenario.array.n_antennas() * scenario.true_gains.ncols()) as f64;
    let row_len = total / axes[0].points;
    let surface = LossSurface {
        axes: axes.to_vec(),
        values: Vec::new(),
    };
    let rows = par::map_range(axes[0].points, |r| {
        (0..row_len)
            .map(|j| {
                let idx = surface.multi_index(r * row_len + j);
                let mut aoas = scenario.true_aoas.as_slice().to_vec();
                let mut gains = scenario.true_gains.clone();
                for (axis, &i) in axes.iter().zip(&idx) {
                    let v = axis.value(i);
                    match axis.parameter {
                        SurfaceParameter::Aoa => aoas[axis.user] = v.clamp(-FRAC_PI_2, FRAC_PI_2),
                        SurfaceParameter::PathAngleOffset => {
                            let rot = Complex64::from_polar(1.0, v);
                            gains.row_mut(axis.user).iter_mut().for_each(|z| *z *= rot);
                        }
                        SurfaceParameter::PathGainScale => {
                            gains.row_mut(axis.user).iter_mut().for_each(|z| *z *= v);
                        }
                    }
                }
                let estimate = AoAVector::new(aoas).expect("angles clamped to range");
                let recon = array_matrix(&scenario.array, &estimate) * gains;
                linalg::frobenius_sq(&(&clean - recon)) + floor
            })
            .collect::<Vec<f64>>()
    });
    Ok(LossSurface {
        values: rows.into_iter().flatten().collect(),
        ..surface
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::single_user_population_loss;
    use crate::loss::{population_reconstruction, VariationalState};
    use std::f64::consts::PI;

    fn scenario(n: usize, r: f64, theta_deg: f64) -> SurfaceScenario {
        SurfaceScenario {
            array: ArrayConfig::new(n, r).unwrap(),
            true_aoas: AoAVector::from_degrees(&[theta_deg]).unwrap(),
            true_gains: CMat::from_element(1, 1, Complex64::new(1.0, 0.0)),
            noise_variance: 0.0,
        }
    }

    fn aoa_axis(points: usize) -> SurfaceAxis {
        SurfaceAxis::new(SurfaceParameter::Aoa, 0, -FRAC_PI_2, FRAC_PI_2, points).unwrap()
    }

    #[test]
    fn one_dim_argmin_at_truth() {
        let sc = scenario(16, 0.5, 11.0);
        // 0.01° spacing puts 11° exactly on the grid.
        let s = evaluate_surface(&[aoa_axis(18001)], &sc).unwrap();
        let best = s.coordinates(&s.multi_index(s.argmin()))[0];
        assert!((best.to_degrees() - 11.0).abs() < 1e-9);
        assert_eq!(s.global_minima(1e-3).len(), 1);
        for i in (0..18001).step_by(997) {
            let est = s.axes[0].value(i);
            assert!((s.values[i] - single_user_population_loss(&sc.array, sc.true_aoas.as_slice()[0], 1.0, est)).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_population_reconstruction() {
        let sc = SurfaceScenario {
            array: ArrayConfig::new(8, 1.0).unwrap(),
            true_aoas: AoAVector::new(vec![-0.3, 0.4]).unwrap(),
            true_gains: CMat::from_fn(2, 3, |i, j| Complex64::new(1.0 + i as f64, j as f64 - 1.0)),
            noise_variance: 0.2,
        };
        let axes = [
            SurfaceAxis::new(SurfaceParameter::Aoa, 1, 0.0, 0.8, 5).unwrap(),
            SurfaceAxis::new(SurfaceParameter::PathAngleOffset, 0, -1.0, 1.0, 4).unwrap(),
            SurfaceAxis::new(SurfaceParameter::PathGainScale, 1, 0.5, 1.5, 3).unwrap(),
        ];
        let s = evaluate_surface(&axes, &sc).unwrap();
        assert_eq!(s.values.len(), 60);
        for flat in 0..60 {
            let idx = s.multi_index(flat);
            assert_eq!(s.flat_index(&idx), flat);
            let c = s.coordinates(&idx);
            let mut gains = sc.true_gains.clone();
            gains.row_mut(0).iter_mut().for_each(|z| *z *= Complex64::from_polar(1.0, c[1]));
            gains.row_mut(1).iter_mut().for_each(|z| *z *= c[2]);
            let state = VariationalState::point_mass(AoAVector::new(vec![-0.3, c[0]]).unwrap(), gains).unwrap();
            let want = population_reconstruction(&sc.true_aoas, &sc.true_gains, &state, &sc.array, 0.2);
            assert!((s.values[flat] - want).abs() < 1e-10 * want.max(1.0));
        }
    }

    #[test]
    fn more_local_minima_at_wider_spacing() {
        let axes = [
            aoa_axis(721),
            SurfaceAxis::new(SurfaceParameter::PathAngleOffset, 0, -PI, PI, 73).unwrap(),
        ];
        let narrow = evaluate_surface(&axes, &scenario(8, 0.5, 11.0)).unwrap();
        let wide = evaluate_surface(&axes, &scenario(8, 2.0, 11.0)).unwrap();
        assert!(wide.local_minima().len() > narrow.local_minima().len());
    }

    #[test]
    fn global_minima_independent_of_array_size() {
        for r in [0.5, 2.0] {
            let counts: Vec<usize> = [32, 64]
                .iter()
                .map(|&n| evaluate_surface(&[aoa_axis(18001)], &scenario(n, r, 11.0)).unwrap().global_minima(1e-3).len())
                .collect();
            assert_eq!(counts[0], counts[1]);
            assert_eq!(counts[0], if r == 0.5 { 1 } else { 4 });
        }
    }

    #[test]
    fn guards() {
        let sc = scenario(4, 0.5, 0.0);
        let big = SurfaceAxis::new(SurfaceParameter::PathGainScale, 0, 0.0, 1.0, 5000).unwrap();
        assert!(matches!(evaluate_surface(&[big, big], &sc), Err(Error::OversizeGrid { .. })));
        assert!(SurfaceAxis::new(SurfaceParameter::Aoa, 0, -2.0, 0.0, 3).is_err());
        let wrong_user = SurfaceAxis::new(SurfaceParameter::Aoa, 1, -1.0, 1.0, 3).unwrap();
        assert!(evaluate_surface(&[wrong_user], &sc).is_err());
        assert!(evaluate_surface(&[], &sc).is_err());
    }
}
