//! Scenario runner and analysis front end: drives maneuvers through both
//! estimation paths, computes the hardware-vs-software error metrics and
//! emits machine-readable reports.

mod comparison;
mod report;
mod scenario;

pub use comparison::{
    percent_error, percent_error_with_eps, run_comparison, ComparisonReport, FrameRecord,
    MetricError, Summary, DEFAULT_EPS_DENOMINATOR,
};
pub use report::{emit_report, read_csv, read_json, write_csv, write_json};
pub use scenario::{HardwareConfig, Maneuver, MetricsConfig, ScalingConfig, Scenario};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Estimator(#[from] crate::estimator::EstimatorError),
    #[error(transparent)]
    Sensor(#[from] crate::sensor::SensorError),
    #[error(transparent)]
    Datapath(#[from] crate::datapath::DatapathError),
    #[error(transparent)]
    Bus(#[from] crate::bus::BusError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed report: {0}")]
    MalformedReport(String),
}
