//! Scenario files: JSON with angles in degrees. Unknown fields are
//! rejected and every error names the offending field and line.

use std::fmt;
use std::path::Path;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::estimator::OptimizerConfig;
use crate::landscape::{SurfaceAxis, SurfaceParameter};
use crate::preprocess::{sector_grid, AngleGrid, Sector};
use crate::serial::{unpair, Pair};
use crate::signal::{AoAVector, ArrayConfig, ChannelPrior};

/// SNR in dB; `"inf"` in JSON means a noiseless observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrDb(pub f64);

impl SnrDb {
    pub fn is_noiseless(&self) -> bool {
        self.0 == f64::INFINITY
    }
}

impl fmt::Display for SnrDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_noiseless() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_noiseless() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) if v.is_finite() => Ok(SnrDb(v)),
            Raw::Text(t) if t == "inf" => Ok(SnrDb(f64::INFINITY)),
            _ => Err(de::Error::custom("snr must be a finite number or \"inf\"")),
        }
    }
}

/// Fixed angles in degrees, or a fresh draw per trial.
#[derive(Debug, Clone, PartialEq)]
pub enum AoaSpec {
    Fixed(Vec<f64>),
    RandomInSector,
}

impl Serialize for AoaSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AoaSpec::Fixed(v) => v.serialize(s),
            AoaSpec::RandomInSector => s.serialize_str("random-in-sector"),
        }
    }
}

impl<'de> Deserialize<'de> for AoaSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => Ok(AoaSpec::Fixed(v)),
            Raw::Text(t) if t == "random-in-sector" => Ok(AoaSpec::RandomInSector),
            _ => Err(de::Error::custom(
                "aoas_deg must be a list of angles or \"random-in-sector\"",
            )),
        }
    }
}

/// Either independent users with a common mean and variance, or a full
/// mean vector and covariance matrix of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorSpec {
    Iid { mean: Pair, variance: f64 },
    Full { mean: Vec<Pair>, covariance: Vec<Vec<Pair>> },
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Iid {
            mean: [1.0, 0.0],
            variance: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn build(&self, k_users: usize) -> Result<ChannelPrior> {
        match self {
            PriorSpec::Iid { mean, variance } => {
                if !(*variance > 0.0) {
                    return Err(Error::invalid("prior variance must be positive"));
                }
                ChannelPrior::iid(k_users, unpair(*mean), *variance)
            }
            PriorSpec::Full { mean, covariance } => {
                let mean = crate::linalg::CVec::from_iterator(mean.len(), mean.iter().map(|&p| unpair(p)));
                let cov = crate::serial::cmat_from_rows(covariance).map_err(Error::InvalidArgument)?;
                let prior = ChannelPrior::new(mean, cov)?;
                if prior.k_users() != k_users {
                    return Err(Error::DimensionMismatch {
                        context: "prior size vs users",
                        expected: k_users,
                        actual: prior.k_users(),
                    });
                }
                Ok(prior)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorSpec {
    pub center_deg: f64,
    pub width_deg: f64,
}

impl Default for SectorSpec {
    fn default() -> Self {
        Self {
            center_deg: 0.0,
            width_deg: 120.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Seed the angles with codebook pseudo-labels.
    #[default]
    PseudoLabels,
    /// Seed the angles uniformly at random in the sector.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub parameter: SurfaceParameter,
    #[serde(default)]
    pub user: usize,
    /// Degrees for angle parameters, plain factor for gain scale.
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn to_axis(&self) -> Result<SurfaceAxis> {
        let (min, max) = match self.parameter {
            SurfaceParameter::Aoa | SurfaceParameter::PathAngleOffset => (self.min.to_radians(), self.max.to_radians()),
            SurfaceParameter::PathGainScale => (self.min, self.max),
        };
        SurfaceAxis::new(self.parameter, self.user, min, max, self.points)
    }

    pub fn label(&self) -> String {
        let unit = match self.parameter {
            SurfaceParameter::PathGainScale => "",
            _ => "_deg",
        };
        let name = match self.parameter {
            SurfaceParameter::Aoa => "aoa",
            SurfaceParameter::PathAngleOffset => "path_angle_offset",
            SurfaceParameter::PathGainScale => "path_gain_scale",
        };
        format!("{name}{unit}_user{}", self.user)
    }

    /// Axis values in the units of the config file.
    pub fn display_values(&self) -> Vec<f64> {
        (0..self.points)
            .map(|i| {
                if self.points == 1 {
                    self.min
                } else if i + 1 == self.points {
                    self.max
                } else {
                    self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub name: String,
    pub axes: Vec<AxisSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSpec {
    /// Defaults to the first entry of `aoas_deg`.
    #[serde(default)]
    pub true_angle_deg: Option<f64>,
    #[serde(default = "default_scan_step")]
    pub scan_step_deg: f64,
    /// Gain of every user in the single snapshot the surfaces are built on.
    #[serde(default = "unit_gain")]
    pub gain: Pair,
    /// Noise floor added to surface values.
    #[serde(default)]
    pub noise_variance: f64,
    #[serde(default)]
    pub surfaces: Vec<SurfaceSpec>,
}

fn unit_gain() -> Pair {
    [1.0, 0.0]
}

fn default_scan_step() -> f64 {
    0.01
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            true_angle_deg: None,
            scan_step_deg: default_scan_step(),
            gain: unit_gain(),
            noise_variance: 0.0,
            surfaces: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub array: ArrayConfig,
    pub users: usize,
    pub aoas_deg: AoaSpec,
    /// Smallest gap between randomly drawn angles.
    #[serde(default = "default_separation")]
    pub min_separation_deg: f64,
    #[serde(default)]
    pub prior: PriorSpec,
    pub snr_db: Vec<SnrDb>,
    pub n_trials: usize,
    pub seed: u64,
    pub snapshots: usize,
    #[serde(default)]
    pub sector: SectorSpec,
    #[serde(default = "default_grid_step")]
    pub grid_step_deg: f64,
    /// Grid for the MUSIC spectrum; defaults to `grid_step_deg`.
    #[serde(default)]
    pub music_grid_step_deg: Option<f64>,
    /// Search the whole half-space instead of the sector.
    #[serde(default)]
    pub full_range_search: bool,
    #[serde(default)]
    pub nms_radius_deg: Option<f64>,
    #[serde(default)]
    pub init_mode: InitMode,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub landscape: LandscapeSpec,
}

fn default_separation() -> f64 {
    5.0
}

fn default_grid_step() -> f64 {
    0.01
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::invalid(format!(
                "config field `{path}`: {inner}",
            ))
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 {
            return Err(Error::invalid("users must be at least 1"));
        }
        if self.n_trials == 0 {
            return Err(Error::invalid("n_trials must be at least 1"));
        }
        if self.snr_db.is_empty() {
            return Err(Error::invalid("snr_db must not be empty"));
        }
        if self.snapshots == 0 {
            return Err(Error::invalid("snapshots must be at least 1"));
        }
        if !(self.grid_step_deg > 0.0) {
            return Err(Error::invalid("grid_step_deg must be positive"));
        }
        if let Some(s) = self.music_grid_step_deg {
            if !(s > 0.0) {
                return Err(Error::invalid("music_grid_step_deg must be positive"));
            }
        }
        if !(self.min_separation_deg >= 0.0) {
            return Err(Error::invalid("min_separation_deg must be non-negative"));
        }
        if let AoaSpec::Fixed(v) = &self.aoas_deg {
            if v.len() != self.users {
                return Err(Error::DimensionMismatch {
                    context: "aoas_deg vs users",
                    expected: self.users,
                    actual: v.len(),
                });
            }
            AoAVector::from_degrees(v)?;
        }
        self.prior()?;
        self.sector()?;
        self.optimizer.validate()?;
        if !(self.landscape.scan_step_deg > 0.0) {
            return Err(Error::invalid("landscape.scan_step_deg must be positive"));
        }
        if !(self.landscape.noise_variance >= 0.0) {
            return Err(Error::invalid("landscape.noise_variance must be non-negative"));
        }
        let random = matches!(self.aoas_deg, AoaSpec::RandomInSector);
        if random && self.users != 1 && !self.landscape.surfaces.is_empty() {
            return Err(Error::invalid("loss surfaces with random-in-sector angles need exactly one user"));
        }
        for s in &self.landscape.surfaces {
            if s.axes.is_empty() {
                return Err(Error::invalid(format!("surface `{}` has no axes", s.name)));
            }
            if s.name.is_empty() || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::invalid(format!("surface name `{}` must be [A-Za-z0-9_-]+", s.name)));
            }
            for a in &s.axes {
                a.to_axis()?;
            }
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<ChannelPrior> {
        self.prior.build(self.users)
    }

    /// The user's sector.
    pub fn sector(&self) -> Result<Sector> {
        Sector::from_degrees(self.sector.center_deg, self.sector.width_deg)
    }

    /// Range searched by the estimators.
    pub fn search_sector(&self) -> Result<Sector> {
        if self.full_range_search {
            Ok(Sector::full())
        } else {
            self.sector()
        }
    }

    pub fn pseudo_label_grid(&self) -> Result<AngleGrid> {
        sector_grid(&self.search_sector()?, self.grid_step_deg.to_radians())
    }

    pub fn music_grid(&self) -> Result<AngleGrid> {
        let step = self.music_grid_step_deg.unwrap_or(self.grid_step_deg);
        sector_grid(&self.search_sector()?, step.to_radians())
    }

    /// Optimizer settings with the scenario-level suppression radius applied.
    pub fn optimizer_config(&self) -> OptimizerConfig {
        let mut cfg = self.optimizer;
        if let Some(r) = self.nms_radius_deg {
            cfg.pseudo_labels.suppression_radius = Some(r.to_radians());
        }
        cfg
    }

    pub fn array(&self) -> ArrayConfig {
        self.array
    }

    pub fn true_angle_for_landscape(&self) -> Result<f64> {
        match (self.landscape.true_angle_deg, &self.aoas_deg) {
            (Some(t), _) => Ok(AoAVector::from_degrees(&[t])?.as_slice()[0]),
            (None, AoaSpec::Fixed(v)) => Ok(v[0].to_radians()),
            (None, AoaSpec::RandomInSector) => Err(Error::invalid(
                "landscape.true_angle_deg is required when aoas_deg is random-in-sector",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "array": {"n_antennas": 8, "spacing_ratio": 0.5},
        "users": 1,
        "aoas_deg": [11.0],
        "snr_db": [0, "inf"],
        "n_trials": 2,
        "seed": 1,
        "snapshots": 4
    }"#;

    #[test]
    fn minimal_config_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.snr_db, vec![SnrDb(0.0), SnrDb(f64::INFINITY)]);
        assert_eq!(s.prior, PriorSpec::default());
        assert_eq!(s.sector, SectorSpec::default());
        assert_eq!(s.optimizer, OptimizerConfig::default());
        assert_eq!(s.pseudo_label_grid().unwrap().len(), 12001);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = MINIMAL.replace("\"snapshots\": 4", "\"snapshots\": -4");
        let msg = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(msg.contains("snapshots"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
        let unknown = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"sed\": 2");
        assert!(Scenario::from_json(&unknown).unwrap_err().to_string().contains("sed"));
        let snr = MINIMAL.replace("\"inf\"", "\"loud\"");
        assert!(Scenario::from_json(&snr).unwrap_err().to_string().contains("snr_db"));
        let count = MINIMAL.replace("[11.0]", "[11.0, 12.0]");
        assert!(Scenario::from_json(&count).is_err());
        let opt = MINIMAL.replace("\"snapshots\": 4", "\"snapshots\": 4, \"optimizer\": {\"aoa_step_size\": 0}");
        assert!(Scenario::from_json(&opt).unwrap_err().to_string().contains("optimizer"));
    }

    #[test]
    fn snr_roundtrip() {
        let v: Vec<SnrDb> = serde_json::from_str(r#"[1.5, "inf"]"#).unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[1.5,"inf"]"#);
        assert_eq!(v[1].to_string(), "inf");
    }

    #[test]
    fn full_prior_and_random_aoas() {
        let text = MINIMAL
            .replace("\"users\": 1", "\"users\": 2")
            .replace("[11.0]", "\"random-in-sector\"")
            .replace(
                "\"snapshots\": 4",
                r#""snapshots": 4, "prior": {"mean": [[1,0],[0,1]], "covariance": [[[2,0],[0,0]],[[0,0],[1,0]]]}"#,
            );
        let s = Scenario::from_json(&text).unwrap();
        assert_eq!(s.aoas_deg, AoaSpec::RandomInSector);
        assert_eq!(s.prior().unwrap().k_users(), 2);
        assert!(s.true_angle_for_landscape().is_err());
    }
}
