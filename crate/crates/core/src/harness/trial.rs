//! Closed-loop trial runner: true noise from the scenario's true
//! distribution, certification sampling from the nominal distribution.

use serde::Serialize;

use super::HarnessError;
use crate::filter::{GatekeeperConfig, InvocationRecord, SafetyFilter};
use crate::rng::{Channel, RngKey, RngStream};
use crate::rollout::RolloutContext;
use crate::scenarios::{build_scenario, ScenarioConfig};

/// Per-step record for trajectory output: time, state, control, whether
/// the backup policy was active, and the committed switch time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub backup_active: Vec<bool>,
    pub committed_switch: Vec<u64>,
    /// Terminal state (no control applied from it).
    pub final_time: f64,
    pub final_state: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    /// No stage-margin violation over the whole trial (true noise).
    pub safe: bool,
    pub goal_reached: bool,
    /// Seconds to the goal; `None` means the goal was never reached.
    pub goal_time: Option<f64>,
    /// Fraction of executed control steps with the backup policy active.
    pub backup_ratio: f64,
    /// Control steps executed.
    pub steps: usize,
    pub diagnostics: Vec<InvocationRecord>,
    /// Wall-clock seconds; excluded from deterministic outputs.
    pub wall_time: f64,
    pub trajectory: Option<TrajectoryLog>,
}

/// Simulate one closed-loop trial. Terminates at the goal, at a safety
/// violation, or at the step cap.
pub fn run_trial(
    scenario_cfg: &ScenarioConfig,
    gk: &GatekeeperConfig,
    seed: u64,
    max_steps: usize,
    record_trajectory: bool,
) -> Result<TrialResult, HarnessError> {
    gk.validate()?;
    let started = std::time::Instant::now();
    let scenario = build_scenario(scenario_cfg, seed)?;
    let dt = scenario.model().dt();

    let ctx = RolloutContext {
        model: scenario.model(),
        nominal: scenario.nominal_policy(),
        backup: scenario.backup_policy(),
        safety: scenario.safety(),
        process_sampler: scenario.nominal_sampler(),
        theta_sampler: scenario.theta_sampler(),
    };
    // the initial commitment is "switch at t0": immediate backup, which is
    // certified by assumption when the start state is inside the backup's
    // invariant set
    let mut filter = SafetyFilter::new(ctx, gk.clone(), seed, 0)?;

    let mut x = scenario.initial_state();
    let mut safe = !scenario.violated(&x);
    let mut goal_time = None;
    let mut backup_steps = 0usize;
    let mut steps = 0usize;
    let mut noise = vec![0.0; scenario.model().noise_dim()];
    let mut log = record_trajectory.then(|| TrajectoryLog {
        times: vec![],
        states: vec![],
        controls: vec![],
        backup_active: vec![],
        committed_switch: vec![],
        final_time: 0.0,
        final_state: vec![],
    });

    for t in 0..max_steps as u64 {
        if scenario.goal_reached(&x) {
            goal_time = Some(t as f64 * dt);
            break;
        }
        if !safe {
            break;
        }
        let u = filter.step(t, &x);
        let backup_active = filter.backup_active(t);
        if backup_active {
            backup_steps += 1;
        }
        if let Some(log) = log.as_mut() {
            log.times.push(t as f64 * dt);
            log.states.push(x.as_slice().to_vec());
            log.controls.push(u.as_slice().to_vec());
            log.backup_active.push(backup_active);
            log.committed_switch.push(filter.committed_switch());
        }
        let mut stream = RngStream::from_key(RngKey::new(seed, t, 0, 0, Channel::TrueNoise));
        scenario
            .true_sampler()
            .sample_into(&x, &u, &mut stream, &mut noise);
        x = scenario.model().step(&x, &u, &noise);
        steps += 1;
        if !x.is_finite() || scenario.violated(&x) {
            safe = false;
        }
    }
    if let Some(log) = log.as_mut() {
        log.final_time = steps as f64 * dt;
        log.final_state = x.as_slice().to_vec();
    }
    if goal_time.is_none() && safe && scenario.goal_reached(&x) {
        // goal reached exactly at the step cap
        goal_time = Some(steps as f64 * dt);
    }

    Ok(TrialResult {
        seed,
        safe,
        goal_reached: goal_time.is_some(),
        goal_time,
        backup_ratio: if steps == 0 {
            0.0
        } else {
            backup_steps as f64 / steps as f64
        },
        steps,
        diagnostics: filter.into_history(),
        wall_time: started.elapsed().as_secs_f64(),
        trajectory: log,
    })
}
