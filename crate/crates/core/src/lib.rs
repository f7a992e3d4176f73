//! Sampling-based distributionally robust safety filtering for stochastic
//! nonlinear systems.
//!
//! The filter supervises a nominal policy with a backup policy that has a
//! known invariant set. At each step it certifies, from finitely many noise
//! samples and with an explicit confidence level, the latest time at which
//! switching to the backup still keeps the chance of a safety violation
//! below a prescribed level — robustly over every distribution within a
//! Wasserstein ball around the sampling distribution. Certification reduces
//! to counting rollouts whose safety margin falls below an inflated
//! threshold and bounding the true violation probability with a binomial
//! upper confidence bound.
//!
//! Crate layout:
//! - [`types`]: state/control/noise containers, policy and model traits
//! - [`rng`]: counter-based streams keyed by (seed, step, candidate, sample)
//! - [`stats`]: binomial tail bounds and risk-budget arithmetic
//! - [`rollout`]: trajectory propagation, margins, Lipschitz estimation
//! - [`filter`]: the certification loop and the online switching filter
//! - [`scenarios`]: concrete systems (Dubins vehicle with mixture noise)
//! - [`harness`]: trials, parameter sweeps, CSV/manifest output

pub mod filter;
pub mod harness;
pub mod rng;
pub mod rollout;
pub mod scenarios;
pub mod stats;
pub mod types;

pub use filter::{CertificationOutcome, GatekeeperConfig, SafetyFilter};
pub use rollout::{safety_margin, Trajectory};
pub use stats::{dr_threshold, per_candidate_error, upper_confidence_bound};
pub use types::{
    ControlBounds, ControlVector, NoiseSampler, NoiseTrajectory, Policy, SafetySpec, StateVector,
    SwitchedPolicy, SystemModel, ThetaSampler,
};
