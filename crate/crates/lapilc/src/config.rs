//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use lapilc_core::ilc::QilcWeights;
use lapilc_core::TireModel;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version written to and required from every file this crate produces.
pub const FORMAT_VERSION: u32 = 1;

/// Noise seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 20_240_601;

pub const DEFAULT_SAMPLE_TIME: f64 = 0.1;
pub const DEFAULT_MAX_SPEED: f64 = 50.0;
pub const DEFAULT_LAPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    #[serde(default)]
    pub track: TrackSource,
    /// Peak combined acceleration of the speed profile (m/s²).
    pub acceleration: f64,
    /// Speed cap of the generated profile (m/s).
    #[serde(default = "default_max_speed")]
    pub max_speed: f64,
    #[serde(default)]
    pub plant: Plant,
    /// Tire model of the nonlinear plant.
    #[serde(default)]
    pub tire: Tire,
    pub learner: LearnerConfig,
    #[serde(default = "default_laps")]
    pub laps: usize,
    #[serde(default = "default_sample_time")]
    pub sample_time: f64,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub feedforward: bool,
    /// Learning updates stop after this many laps; later laps replay the
    /// last learned input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after: Option<usize>,
}

fn default_max_speed() -> f64 {
    DEFAULT_MAX_SPEED
}

fn default_laps() -> usize {
    DEFAULT_LAPS
}

fn default_sample_time() -> f64 {
    DEFAULT_SAMPLE_TIME
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrackSource {
    #[default]
    Synthetic,
    File {
        path: PathBuf,
        /// Use the file's speed column, rescaled to `acceleration`, instead
        /// of generating a profile.
        #[serde(default)]
        use_speed: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plant {
    /// Discrete linear time-varying model, the same one the lifted map uses.
    Linear,
    /// Continuous bicycle-model simulation with the configured tire.
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tire {
    Linear,
    #[default]
    Fiala,
}

impl From<Tire> for TireModel {
    fn from(t: Tire) -> Self {
        match t {
            Tire::Linear => TireModel::Linear,
            Tire::Fiala => TireModel::Fiala,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LearnerConfig {
    Pd {
        kp: f64,
        kd: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff_hz: Option<f64>,
    },
    /// Scalar multiples of the identity for the tracking, effort and
    /// lap-to-lap change weights.
    Qilc { t: f64, r: f64, s: f64 },
}

impl LearnerConfig {
    pub fn qilc_weights(&self) -> Option<QilcWeights> {
        match *self {
            LearnerConfig::Qilc { t, r, s } => Some(QilcWeights::scaled(t, r, s)),
            LearnerConfig::Pd { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Standard deviation of the measurement noise on `e` (m); 0 disables.
    #[serde(default)]
    pub std: f64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            seed: DEFAULT_SEED,
            std: 0.0,
        }
    }
}

impl ExperimentConfig {
    /// A PD experiment on the synthetic track with every other field at its
    /// default.
    pub fn new(acceleration: f64, learner: LearnerConfig) -> Self {
        ExperimentConfig {
            format_version: FORMAT_VERSION,
            track: TrackSource::Synthetic,
            acceleration,
            max_speed: DEFAULT_MAX_SPEED,
            plant: Plant::Nonlinear,
            tire: Tire::Fiala,
            learner,
            laps: DEFAULT_LAPS,
            sample_time: DEFAULT_SAMPLE_TIME,
            noise: NoiseConfig::default(),
            feedforward: false,
            stop_after: None,
        }
    }

    /// Reads and validates a config file. A relative track path is resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::input(path, msg),
            other => other,
        })?;
        if let TrackSource::File { path: track, .. } = &mut config.track {
            if track.is_relative() {
                if let Some(dir) = path.parent() {
                    *track = dir.join(&*track);
                }
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if !(self.acceleration > 0.0) || !self.acceleration.is_finite() {
            return fail("acceleration must be positive");
        }
        if !(self.max_speed > 0.0) || !self.max_speed.is_finite() {
            return fail("max_speed must be positive");
        }
        if self.laps < 1 {
            return fail("laps must be at least 1");
        }
        if !(self.sample_time > 0.0) || !self.sample_time.is_finite() {
            return fail("sample_time must be positive");
        }
        if !(self.noise.std >= 0.0) || !self.noise.std.is_finite() {
            return fail("noise std must be non-negative");
        }
        if self.noise.seed > i64::MAX as u64 {
            return fail("noise seed must fit in a signed 64-bit integer");
        }
        match self.learner {
            LearnerConfig::Pd { kp, kd, cutoff_hz } => {
                if !kp.is_finite() || !kd.is_finite() {
                    return fail("PD gains must be finite");
                }
                if let Some(fc) = cutoff_hz {
                    if !(fc > 0.0) || fc >= 0.5 / self.sample_time {
                        return fail("cutoff_hz must lie between 0 and the Nyquist frequency");
                    }
                }
            }
            LearnerConfig::Qilc { t, r, s } => {
                for w in [t, r, s] {
                    if !(w >= 0.0) || !w.is_finite() {
                        return fail("Q-ILC weights must be non-negative");
                    }
                }
            }
        }
        Ok(())
    }
}
