//! Concrete system models and the scenario registry.
//!
//! A scenario bundles dynamics, the nominal and backup policies, the safety
//! specification, and two noise samplers: the true distribution the
//! simulator draws from and the nominal (empirical) distribution the filter
//! certifies against. The gap between the two is what the ambiguity radius
//! covers.

pub mod dubins;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{NoiseSampler, Policy, SafetySpec, StateVector, SystemModel, ThetaSampler};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Invalid(String),
}

/// Everything a trial or a certification needs from a concrete system.
pub trait Scenario: Sync {
    fn model(&self) -> &dyn SystemModel;
    fn nominal_policy(&self) -> &dyn Policy;
    fn backup_policy(&self) -> &dyn Policy;
    fn safety(&self) -> &dyn SafetySpec;
    fn theta_sampler(&self) -> &dyn ThetaSampler;
    /// Nominal distribution the filter samples from.
    fn nominal_sampler(&self) -> &dyn NoiseSampler;
    /// True distribution the simulator applies.
    fn true_sampler(&self) -> &dyn NoiseSampler;
    fn initial_state(&self) -> StateVector;
    fn goal_reached(&self, x: &StateVector) -> bool;
    /// Stage-margin violation under exact knowledge of the unsafe set.
    fn violated(&self, x: &StateVector) -> bool;
}

/// Scenario configuration, dispatched by name. New scenarios register a
/// variant here and a builder arm in [`build_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Dubins(dubins::DubinsConfig),
}

/// Instantiate a scenario for one trial. The trial seed keys the offline
/// dataset draw so trials stay mutually independent.
pub fn build_scenario(
    cfg: &ScenarioConfig,
    trial_seed: u64,
) -> Result<Box<dyn Scenario>, ScenarioError> {
    match cfg {
        ScenarioConfig::Dubins(c) => Ok(Box::new(dubins::DubinsScenario::new(c, trial_seed)?)),
    }
}
