//! Run configuration: grid definition, analysis thresholds, candidate-pair
//! neighborhood and interpolation mode, loaded from a TOML file with unknown
//! keys rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::covariance::Neighborhood;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, DEFAULT_DEPTH_LEVELS};

/// Analysis thresholds. Defaults follow the documented estimation rules:
/// at least 2 years per climatological statistic, 3 values per noise
/// estimate, 40 shared year pairs per covariance, groups of 10 differences,
/// correlation cutoff 0.01, pivot floor 0.01, noise floor 0.1,
/// test level 1%, and sample-size gates of 100 (per box-year) and 40 (years
/// per box) for the distribution tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub min_years: usize,
    pub min_count: usize,
    pub min_support: usize,
    pub max_lag: i32,
    pub min_group: usize,
    pub drop_below: f64,
    pub delta_floor: f64,
    pub preserve_diagonal: bool,
    pub noise_floor: f64,
    pub alpha: f64,
    pub min_eta: usize,
    pub min_delta: usize,
    pub iqr_threshold: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_years: 2,
            min_count: 3,
            min_support: 40,
            max_lag: 1,
            min_group: 10,
            drop_below: 0.01,
            delta_floor: 0.01,
            preserve_diagonal: true,
            noise_floor: 0.1,
            alpha: 0.01,
            min_eta: 100,
            min_delta: 40,
            iqr_threshold: 0.05,
        }
    }
}

/// How absent boxes are filled by the `interpolate` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
#[clap(rename_all = "lowercase")]
pub enum InterpolationMode {
    /// Barycentric interpolation on a triangulation of the scaled points,
    /// nearest-neighbor outside the hull.
    Triangulated,
    /// Nearest replicated point only.
    Nearest,
    /// Global mean of the present values.
    Average,
    /// Leave absent boxes absent.
    None,
}

impl InterpolationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            InterpolationMode::Triangulated => "triangulated",
            InterpolationMode::Nearest => "nearest",
            InterpolationMode::Average => "average",
            InterpolationMode::None => "none",
        }
    }
}

impl std::str::FromStr for InterpolationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "triangulated" => Ok(InterpolationMode::Triangulated),
            "nearest" => Ok(InterpolationMode::Nearest),
            "average" => Ok(InterpolationMode::Average),
            "none" => Ok(InterpolationMode::None),
            other => Err(Error::Config(format!(
                "unknown interpolation mode {:?}; expected triangulated|nearest|average|none",
                other
            ))),
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub thresholds: Thresholds,
    pub neighborhood: Neighborhood,
    pub interpolation: InterpolationMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid: GridSpec {
                lon_resolution_deg: 1.0,
                lat_resolution_deg: 1.0,
                depth_levels: DEFAULT_DEPTH_LEVELS.to_vec(),
                months_per_year: 12,
                year_range: (1904, 2024),
            },
            thresholds: Thresholds::default(),
            neighborhood: Neighborhood::default(),
            interpolation: InterpolationMode::Triangulated,
        }
    }
}

impl RunConfig {
    /// Parses TOML text, rejecting unknown keys and invalid thresholds.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a TOML config file.
    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let t = &self.thresholds;
        let positive = [
            ("drop_below", t.drop_below),
            ("noise_floor", t.noise_floor),
            ("iqr_threshold", t.iqr_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(t.delta_floor > 0.0 && t.delta_floor <= 1.0) {
            return Err(Error::Config(format!(
                "delta_floor must lie in (0, 1], got {}",
                t.delta_floor
            )));
        }
        if !(t.alpha > 0.0 && t.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", t.alpha)));
        }
        if t.max_lag < 0 {
            return Err(Error::Config(format!("max_lag must be >= 0, got {}", t.max_lag)));
        }
        let n = &self.neighborhood;
        for (name, v) in [
            ("max_d_month", n.max_d_month),
            ("max_d_lon", n.max_d_lon),
            ("max_d_lat", n.max_d_lat),
            ("max_d_depth", n.max_d_depth),
        ] {
            if v < 0 {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical (serialized) configuration; recorded in
    /// every output header so artifacts identify the run that made them.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
