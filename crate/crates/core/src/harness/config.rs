//! Run configuration: one TOML schema covering the scenario, the filter
//! parameters, simulation limits and an optional sweep.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::filter::GatekeeperConfig;
use crate::scenarios::ScenarioConfig;

fn default_max_steps() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Step cap per trial; trials hitting it without a violation count as
    /// safe with infinite goal time.
    pub max_steps: usize,
    /// Record and emit per-step trajectory files.
    pub write_trajectories: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            max_steps: default_max_steps(),
            write_trajectories: false,
        }
    }
}

/// Which filter parameter a sweep varies; exactly one axis per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    Beta,
    Samples,
    Delta,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Beta => "beta",
            SweepAxis::Samples => "samples",
            SweepAxis::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub gatekeeper: GatekeeperConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.gatekeeper.validate()?;
        if self.sim.max_steps == 0 {
            return Err(HarnessError::Config("sim.max_steps must be >= 1".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(HarnessError::Config("sweep.values is empty".into()));
            }
            if sweep.seeds.is_empty() {
                return Err(HarnessError::Config("sweep.seeds is empty".into()));
            }
            for v in &sweep.values {
                let _ = apply_axis(&self.gatekeeper, sweep.axis, *v)
                    .validate()
                    .map_err(HarnessError::from)?;
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Substitute one axis value into a baseline filter configuration.
pub fn apply_axis(base: &GatekeeperConfig, axis: SweepAxis, value: f64) -> GatekeeperConfig {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Epsilon => cfg.epsilon = value,
        SweepAxis::Beta => cfg.beta = value,
        SweepAxis::Samples => cfg.samples = value as usize,
        SweepAxis::Delta => cfg.delta = value,
    }
    cfg
}
