//! Dubins vehicle with multiplicative model-mismatch and actuator-gain
//! noise, circular obstacles, a proportional goal-seeking nominal policy
//! and an orbiting backup policy.
//!
//! State `[p_x, p_y, heading, speed]`, control `[u_a, u_omega]` with
//! `u_a ∈ [-5, 5]` and `u_omega ∈ [-pi/4, pi/4]`, noise
//! `[xi_a, xi_omega, eta_a, eta_omega]`. One explicit Euler step of
//!
//! ```text
//! p_x'     = v cos(heading)
//! p_y'     = v sin(heading)
//! heading' = (1 + eta_omega) u_omega + v xi_omega
//! v'       = (1 + eta_a) u_a + v xi_a
//! ```
//!
//! followed by clamping the speed to the velocity floor. The true noise is
//! a two-component Gaussian mixture; the filter's nominal distribution is
//! uniform resampling with replacement from a finite dataset drawn from it
//! offline.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::rng::{Channel, RngKey, RngStream};
use crate::scenarios::{Scenario, ScenarioError};
use crate::types::{
    ControlBounds, ControlVector, ExactTheta, NoiseSampler, Policy, SafetySpec, StateVector,
    SystemModel, ThetaSampler,
};

pub const NOISE_DIM: usize = 4;
pub const MAX_ACCEL: f64 = 5.0;
pub const MAX_TURN_RATE: f64 = FRAC_PI_4;

/// Two-component diagonal Gaussian mixture over the noise vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GmmParams {
    pub weight_nominal: f64,
    pub mean_nominal: [f64; NOISE_DIM],
    pub std_nominal: [f64; NOISE_DIM],
    pub mean_outlier: [f64; NOISE_DIM],
    pub std_outlier: [f64; NOISE_DIM],
}

impl Default for GmmParams {
    fn default() -> Self {
        GmmParams {
            weight_nominal: 0.8,
            mean_nominal: [0.0, 0.0, 0.0, 0.0],
            std_nominal: [0.05, 0.02, 0.03, 0.03],
            mean_outlier: [-0.15, 0.08, -0.10, 0.05],
            std_outlier: [0.02, 0.01, 0.05, 0.05],
        }
    }
}

impl GmmParams {
    /// Mixture mean, component-weighted.
    pub fn mixture_mean(&self) -> [f64; NOISE_DIM] {
        let mut out = [0.0; NOISE_DIM];
        let w = self.weight_nominal;
        for i in 0..NOISE_DIM {
            out[i] = w * self.mean_nominal[i] + (1.0 - w) * self.mean_outlier[i];
        }
        out
    }
}

fn default_dt() -> f64 {
    0.05
}
fn default_goal_radius() -> f64 {
    1.0
}
fn default_velocity_floor() -> f64 {
    10.0
}
fn default_dataset_size() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DubinsConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Initial state `[p_x, p_y, heading, speed]`.
    pub start: [f64; 4],
    pub goal: [f64; 2],
    pub target_speed: f64,
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    #[serde(default = "default_velocity_floor")]
    pub velocity_floor: f64,
    /// Proportional gain on heading error.
    pub k_heading: f64,
    /// Proportional gain on speed error.
    pub k_speed: f64,
    /// Invariant-set clearance beyond the obstacle radius, in meters:
    /// worst-case orbit diameter of the backup policy plus a noise buffer.
    pub clearance: f64,
    #[serde(default = "default_dataset_size")]
    pub dataset_size: usize,
    /// `(center_x, center_y, radius)` triples.
    pub obstacles: Vec<[f64; 3]>,
    #[serde(default)]
    pub noise: GmmParams,
    /// Backup invariance failure budget.
    #[serde(default)]
    pub alpha: f64,
}

impl DubinsConfig {
    fn validate(&self) -> Result<(), ScenarioError> {
        if self.dt <= 0.0 {
            return Err(ScenarioError::Invalid("dt must be > 0".into()));
        }
        if self.velocity_floor <= 0.0 {
            return Err(ScenarioError::Invalid("velocity_floor must be > 0".into()));
        }
        if self.start[3] < self.velocity_floor {
            return Err(ScenarioError::Invalid(
                "start speed below the velocity floor".into(),
            ));
        }
        if self.clearance <= 0.0 {
            return Err(ScenarioError::Invalid("clearance must be > 0".into()));
        }
        if self.dataset_size == 0 {
            return Err(ScenarioError::Invalid("dataset_size must be >= 1".into()));
        }
        if self.obstacles.iter().any(|o| o[2] <= 0.0) {
            return Err(ScenarioError::Invalid("obstacle radii must be > 0".into()));
        }
        if !(self.noise.weight_nominal >= 0.0 && self.noise.weight_nominal <= 1.0) {
            return Err(ScenarioError::Invalid(
                "mixture weight must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

pub fn control_bounds() -> ControlBounds {
    ControlBounds::new(
        vec![-MAX_ACCEL, -MAX_TURN_RATE],
        vec![MAX_ACCEL, MAX_TURN_RATE],
    )
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// One explicit Euler step of the noisy Dubins dynamics, with the velocity
/// floor applied after the step.
pub fn dubins_step(x: &StateVector, u: &ControlVector, w: &[f64], dt: f64, floor: f64) -> StateVector {
    let (px, py, heading, v) = (x[0], x[1], x[2], x[3]);
    let (xi_a, xi_w, eta_a, eta_w) = (w[0], w[1], w[2], w[3]);
    let next_v = v + dt * ((1.0 + eta_a) * u[0] + v * xi_a);
    StateVector::new(vec![
        px + dt * v * heading.cos(),
        py + dt * v * heading.sin(),
        heading + dt * ((1.0 + eta_w) * u[1] + v * xi_w),
        next_v.max(floor),
    ])
}

pub struct DubinsModel {
    pub dt: f64,
    pub velocity_floor: f64,
}

impl SystemModel for DubinsModel {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        NOISE_DIM
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn step(&self, x: &StateVector, u: &ControlVector, w: &[f64]) -> StateVector {
        dubins_step(x, u, w, self.dt, self.velocity_floor)
    }
}

/// Circular obstacles plus the goal the nominal policy steers toward.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleField {
    pub obstacles: Vec<[f64; 3]>,
    pub goal: [f64; 2],
    pub target_speed: f64,
}

/// Squared-distance margin to the nearest obstacle:
/// `min_i ((p_x - c_x)^2 + (p_y - c_y)^2 - R_i^2)`. Positive outside every
/// disk, `-R^2` at a center, `+inf` with no obstacles.
pub fn obstacle_margin(x: &StateVector, field: &ObstacleField) -> f64 {
    field
        .obstacles
        .iter()
        .map(|o| {
            let dx = x[0] - o[0];
            let dy = x[1] - o[1];
            dx * dx + dy * dy - o[2] * o[2]
        })
        .fold(f64::INFINITY, f64::min)
}

/// Index of the obstacle whose boundary is nearest, ties broken by list
/// order. `None` for an empty field.
fn nearest_obstacle(x: &StateVector, field: &ObstacleField) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, o) in field.obstacles.iter().enumerate() {
        let d = ((x[0] - o[0]).powi(2) + (x[1] - o[1]).powi(2)).sqrt() - o[2];
        if best.map_or(true, |(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Proportional goal-seeking policy: turn rate proportional to the heading
/// error toward the goal, acceleration proportional to the speed error.
pub struct NominalPolicy {
    pub field: ObstacleField,
    pub k_heading: f64,
    pub k_speed: f64,
    pub bounds: ControlBounds,
}

impl Policy for NominalPolicy {
    fn act(&self, x: &StateVector) -> ControlVector {
        let bearing = (self.field.goal[1] - x[1]).atan2(self.field.goal[0] - x[0]);
        let heading_err = wrap_angle(bearing - x[2]);
        self.bounds.clamp(vec![
            self.k_speed * (self.field.target_speed - x[3]),
            self.k_heading * heading_err,
        ])
    }
}

/// Orbit policy: decelerate to the velocity floor and turn away from the
/// nearest obstacle at the maximum yaw rate.
pub struct BackupPolicy {
    pub field: ObstacleField,
    pub k_speed: f64,
    pub velocity_floor: f64,
    pub bounds: ControlBounds,
}

impl Policy for BackupPolicy {
    fn act(&self, x: &StateVector) -> ControlVector {
        let turn = match nearest_obstacle(x, &self.field) {
            Some(i) => {
                let o = &self.field.obstacles[i];
                let (bx, by) = (o[0] - x[0], o[1] - x[1]);
                // cross product of heading and obstacle bearing: positive
                // means the obstacle is on the left, so turn right
                let cross = x[2].cos() * by - x[2].sin() * bx;
                if cross > 0.0 {
                    -MAX_TURN_RATE
                } else {
                    MAX_TURN_RATE
                }
            }
            None => 0.0,
        };
        self.bounds
            .clamp(vec![self.k_speed * (self.velocity_floor - x[3]), turn])
    }
}

/// Stage margin is the obstacle margin; the terminal invariant set inflates
/// every obstacle by the configured clearance.
pub struct DubinsSafetySpec {
    pub field: ObstacleField,
    pub clearance: f64,
    pub alpha: f64,
}

/// Terminal margin: `obstacle_margin(x) - clearance^2`. A state is in the
/// invariant set iff every obstacle is cleared by more than the backup
/// orbit's worst-case excursion.
pub fn terminal_margin(x: &StateVector, field: &ObstacleField, clearance: f64) -> f64 {
    obstacle_margin(x, field) - clearance * clearance
}

impl SafetySpec for DubinsSafetySpec {
    fn stage_margin(&self, x: &StateVector, _theta: &[f64]) -> f64 {
        obstacle_margin(x, &self.field)
    }
    fn terminal_margin(&self, x: &StateVector) -> f64 {
        terminal_margin(x, &self.field, self.clearance)
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// True noise distribution: the two-component Gaussian mixture, drawn
/// i.i.d. per dynamics step.
pub struct GmmSampler {
    pub params: GmmParams,
}

pub fn gmm_sample(params: &GmmParams, stream: &mut RngStream, out: &mut [f64]) {
    let nominal = stream.uniform() < params.weight_nominal;
    let (mean, std) = if nominal {
        (&params.mean_nominal, &params.std_nominal)
    } else {
        (&params.mean_outlier, &params.std_outlier)
    };
    for i in 0..NOISE_DIM {
        out[i] = mean[i] + std[i] * stream.standard_normal();
    }
}

impl NoiseSampler for GmmSampler {
    fn dim(&self) -> usize {
        NOISE_DIM
    }
    fn sample_into(
        &self,
        _x: &StateVector,
        _u: &ControlVector,
        stream: &mut RngStream,
        out: &mut [f64],
    ) {
        gmm_sample(&self.params, stream, out);
    }
}

/// Nominal distribution: uniform resampling with replacement from a finite
/// offline dataset.
pub struct EmpiricalSampler {
    rows: Vec<[f64; NOISE_DIM]>,
}

impl EmpiricalSampler {
    pub fn from_rows(rows: Vec<[f64; NOISE_DIM]>) -> Result<Self, ScenarioError> {
        if rows.is_empty() {
            return Err(ScenarioError::Invalid("empirical dataset is empty".into()));
        }
        Ok(EmpiricalSampler { rows })
    }

    /// Draw the dataset itself from the mixture.
    pub fn from_gmm(params: &GmmParams, size: usize, stream: &mut RngStream) -> Self {
        let mut rows = Vec::with_capacity(size);
        for _ in 0..size {
            let mut row = [0.0; NOISE_DIM];
            gmm_sample(params, stream, &mut row);
            rows.push(row);
        }
        EmpiricalSampler { rows }
    }

    pub fn rows(&self) -> &[[f64; NOISE_DIM]] {
        &self.rows
    }

    pub fn resample(&self, stream: &mut RngStream) -> [f64; NOISE_DIM] {
        self.rows[stream.index(self.rows.len())]
    }
}

impl NoiseSampler for EmpiricalSampler {
    fn dim(&self) -> usize {
        NOISE_DIM
    }
    fn sample_into(
        &self,
        _x: &StateVector,
        _u: &ControlVector,
        stream: &mut RngStream,
        out: &mut [f64],
    ) {
        out.copy_from_slice(&self.resample(stream));
    }
}

/// Fully assembled Dubins scenario for one trial.
pub struct DubinsScenario {
    model: DubinsModel,
    nominal: NominalPolicy,
    backup: BackupPolicy,
    safety: DubinsSafetySpec,
    theta: ExactTheta,
    true_noise: GmmSampler,
    empirical: EmpiricalSampler,
    start: [f64; 4],
    goal: [f64; 2],
    goal_radius: f64,
}

impl DubinsScenario {
    pub fn new(cfg: &DubinsConfig, trial_seed: u64) -> Result<Self, ScenarioError> {
        cfg.validate()?;
        let field = ObstacleField {
            obstacles: cfg.obstacles.clone(),
            goal: cfg.goal,
            target_speed: cfg.target_speed,
        };
        let mut dataset_stream =
            RngStream::from_key(RngKey::new(trial_seed, 0, 0, 0, Channel::Dataset));
        let empirical =
            EmpiricalSampler::from_gmm(&cfg.noise, cfg.dataset_size, &mut dataset_stream);
        Ok(DubinsScenario {
            model: DubinsModel {
                dt: cfg.dt,
                velocity_floor: cfg.velocity_floor,
            },
            nominal: NominalPolicy {
                field: field.clone(),
                k_heading: cfg.k_heading,
                k_speed: cfg.k_speed,
                bounds: control_bounds(),
            },
            backup: BackupPolicy {
                field: field.clone(),
                k_speed: cfg.k_speed,
                velocity_floor: cfg.velocity_floor,
                bounds: control_bounds(),
            },
            safety: DubinsSafetySpec {
                field,
                clearance: cfg.clearance,
                alpha: cfg.alpha,
            },
            theta: ExactTheta,
            true_noise: GmmSampler {
                params: cfg.noise.clone(),
            },
            empirical,
            start: cfg.start,
            goal: cfg.goal,
            goal_radius: cfg.goal_radius,
        })
    }

    pub fn field(&self) -> &ObstacleField {
        &self.safety.field
    }

    pub fn empirical_sampler(&self) -> &EmpiricalSampler {
        &self.empirical
    }
}

impl Scenario for DubinsScenario {
    fn model(&self) -> &dyn SystemModel {
        &self.model
    }
    fn nominal_policy(&self) -> &dyn Policy {
        &self.nominal
    }
    fn backup_policy(&self) -> &dyn Policy {
        &self.backup
    }
    fn safety(&self) -> &dyn SafetySpec {
        &self.safety
    }
    fn theta_sampler(&self) -> &dyn ThetaSampler {
        &self.theta
    }
    fn nominal_sampler(&self) -> &dyn NoiseSampler {
        &self.empirical
    }
    fn true_sampler(&self) -> &dyn NoiseSampler {
        &self.true_noise
    }
    fn initial_state(&self) -> StateVector {
        StateVector::new(self.start.to_vec())
    }
    fn goal_reached(&self, x: &StateVector) -> bool {
        let dx = x[0] - self.goal[0];
        let dy = x[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt() <= self.goal_radius
    }
    fn violated(&self, x: &StateVector) -> bool {
        obstacle_margin(x, &self.safety.field) < 0.0
    }
}
