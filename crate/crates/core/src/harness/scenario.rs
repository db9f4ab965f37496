use serde::{Deserialize, Serialize};

use crate::datapath::{ScalingScheme, DEFAULT_CLOCK_HZ, DEFAULT_Y_SCALE};
use crate::estimator::{EstimationProblem, SensorConstants, CHANNELS};
use crate::fixed::QFormat;
use crate::sensor::{GeometryConfig, NoiseModel};

use super::HarnessError;

/// Constant-rate axial maneuver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Maneuver {
    /// Axial translation rate (m/s).
    pub v_z: f64,
    /// Axial rotation rate (rad/s).
    pub omega_z: f64,
    /// Trajectory length (s).
    pub duration: f64,
    /// Initial boresight distance to the base plane (m).
    pub initial_distance: f64,
}

impl Default for Maneuver {
    fn default() -> Self {
        Maneuver {
            v_z: 0.1,
            omega_z: 0.05,
            duration: 1.0,
            initial_distance: 1.0,
        }
    }
}

/// Fixed-point configuration of the emulated core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareConfig {
    pub qformat: QFormat,
    /// Assumed PL clock for latency conversion (Hz).
    pub clock_hz: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            qformat: QFormat::Q15_16,
            clock_hz: DEFAULT_CLOCK_HZ,
        }
    }
}

/// Pre-scale configuration. With `h_scales` omitted, each measurement
/// matrix column is normalized to unit norm per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub y_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_scales: Option<[f64; CHANNELS]>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            y_scale: DEFAULT_Y_SCALE,
            h_scales: None,
        }
    }
}

impl ScalingConfig {
    pub fn scheme_for(&self, problem: &EstimationProblem) -> ScalingScheme {
        match self.h_scales {
            Some(scales) => ScalingScheme::explicit(scales, self.y_scale),
            None => ScalingScheme::unit_columns(problem, self.y_scale),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    /// Reference magnitudes at or below this are reported as undefined
    /// percent error instead of dividing by (near) zero.
    pub eps_denominator: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            eps_denominator: super::DEFAULT_EPS_DENOMINATOR,
        }
    }
}

/// A fully reproducible comparison run: constants, geometry, maneuver,
/// noise, Q-format and scaling. Serializes to a flat TOML file; two runs
/// of the same scenario are bit-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub constants: SensorConstants,
    #[serde(default)]
    pub maneuver: Maneuver,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub hardware: HardwareConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Beacon geometry override; bench defaults when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
}

fn default_noise() -> NoiseModel {
    NoiseModel {
        sigma_phi: 0.0,
        seed: 42,
    }
}

impl Default for Scenario {
    /// The canonical noiseless axial maneuver at default hardware
    /// settings: v_z = 0.1 m/s, omega_z = 0.05 rad/s, 1000 frames.
    fn default() -> Self {
        Scenario {
            name: "axial-default".to_owned(),
            constants: SensorConstants::default(),
            maneuver: Maneuver::default(),
            noise: default_noise(),
            hardware: HardwareConfig::default(),
            scaling: ScalingConfig::default(),
            metrics: MetricsConfig::default(),
            geometry: None,
        }
    }
}

impl Scenario {
    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml(&text)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_toml()?).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
