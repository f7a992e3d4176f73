//! Experiment orchestration: multi-seed trial runner, one-axis parameter
//! sweeps, metric aggregation and structured file output.

mod config;
mod output;
mod sweep;
mod trial;

pub use config::{RunConfig, SimConfig, SweepAxis, SweepConfig};
pub use output::{emit_outputs, EmittedFiles};
pub use sweep::{aggregate, run_sweep, SweepRow, SweepTable};
pub use trial::{run_trial, TrajectoryLog, TrialResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl From<crate::filter::ConfigError> for HarnessError {
    fn from(e: crate::filter::ConfigError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<crate::scenarios::ScenarioError> for HarnessError {
    fn from(e: crate::scenarios::ScenarioError) -> Self {
        HarnessError::Config(e.to_string())
    }
}
