//! Closed-loop trajectory propagation, finite-horizon safety margins,
//! gradient-based Lipschitz estimation and inflated-threshold violation
//! counting.
//!
//! A rollout evaluates the switched policy over `T` steps and scores it with
//! the finite-horizon safety function: the minimum of the stage margin along
//! the whole trajectory and the invariant-set margin at the terminal state.
//! A rollout that blows up numerically scores `-inf`, so divergence is
//! always counted as a violation.

use crate::rng::{Channel, RngKey, RngStream};
use crate::types::{
    NoiseSampler, NoiseTrajectory, SafetySpec, StateVector, SwitchedPolicy, SystemModel,
    ThetaSampler,
};

/// Per-coordinate derivative used when a perturbed rollout diverges. Large
/// enough that the resulting Lipschitz estimate inflates every margin past
/// any practical threshold.
pub const DIVERGED_GRADIENT_SENTINEL: f64 = 1e9;

/// States and controls of one closed-loop rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub controls: Vec<crate::types::ControlVector>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

/// A dynamics step produced a non-finite state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NumericalDivergence {
    /// Step index at which the state became non-finite.
    pub step: usize,
}

/// Iterate the closed-loop dynamics for `horizon` steps, replaying the
/// recorded noise. Noise row `tau` is consumed at step `tau` regardless of
/// which sub-policy is active; the policy is queried at relative steps
/// `0..horizon`.
pub fn propagate(
    model: &dyn SystemModel,
    policy: &SwitchedPolicy,
    x0: &StateVector,
    noise: &NoiseTrajectory,
    horizon: usize,
) -> Result<Trajectory, NumericalDivergence> {
    debug_assert!(noise.steps() >= horizon);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(x0.clone());
    for tau in 0..horizon {
        let x = &states[tau];
        let u = policy.act(x, tau as u64);
        let next = model.step(x, &u, noise.step_noise(tau));
        controls.push(u);
        if !next.is_finite() {
            return Err(NumericalDivergence { step: tau });
        }
        states.push(next);
    }
    Ok(Trajectory { states, controls })
}

/// Propagate while drawing each step's noise from the sampler conditioned
/// on the current state and control, recording the realization. This is the
/// closed-loop sampling the certification loop uses; [`propagate`] replays
/// the recorded noise (possibly perturbed) afterwards.
pub fn sample_rollout(
    model: &dyn SystemModel,
    policy: &SwitchedPolicy,
    x0: &StateVector,
    horizon: usize,
    sampler: &dyn NoiseSampler,
    stream: &mut RngStream,
    theta: Vec<f64>,
) -> (Result<Trajectory, NumericalDivergence>, NoiseTrajectory) {
    let p = model.noise_dim();
    debug_assert_eq!(p, sampler.dim());
    let mut noise = NoiseTrajectory::zeros(theta.len(), horizon, p);
    noise.theta_mut().copy_from_slice(&theta);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(x0.clone());
    for tau in 0..horizon {
        let x = &states[tau];
        let u = policy.act(x, tau as u64);
        sampler.sample_into(x, &u, stream, noise.step_noise_mut(tau));
        let next = model.step(x, &u, noise.step_noise(tau));
        controls.push(u);
        if !next.is_finite() {
            // keep drawing so the stream advances identically regardless of
            // where the blow-up happened
            for rest in tau + 1..horizon {
                sampler.sample_into(x, &controls[tau], stream, noise.step_noise_mut(rest));
            }
            return (Err(NumericalDivergence { step: tau }), noise);
        }
        states.push(next);
    }
    (Ok(Trajectory { states, controls }), noise)
}

/// Finite-horizon safety function: the minimum of the terminal
/// invariant-set margin and the stage margin over every state of the
/// trajectory (including the terminal state).
pub fn safety_margin(traj: &Trajectory, theta: &[f64], spec: &dyn SafetySpec) -> f64 {
    let terminal = spec.terminal_margin(traj.states.last().expect("trajectory has >= 1 state"));
    let stage = traj
        .states
        .iter()
        .map(|x| spec.stage_margin(x, theta))
        .fold(f64::INFINITY, f64::min);
    terminal.min(stage)
}

/// Safety margin of a rollout result, with divergence scored `-inf`.
pub fn margin_or_neg_inf(
    result: &Result<Trajectory, NumericalDivergence>,
    theta: &[f64],
    spec: &dyn SafetySpec,
) -> f64 {
    match result {
        Ok(traj) => safety_margin(traj, theta, spec),
        Err(_) => f64::NEG_INFINITY,
    }
}

/// Euclidean norm of the central-finite-difference gradient of `h` with
/// respect to the flattened noise vector, evaluated at `noise`. Coordinates
/// whose perturbed evaluation is non-finite contribute
/// [`DIVERGED_GRADIENT_SENTINEL`].
pub fn gradient_norm<F>(h: F, noise: &NoiseTrajectory, step: f64) -> f64
where
    F: Fn(&NoiseTrajectory) -> f64,
{
    debug_assert!(step > 0.0);
    let mut work = noise.clone();
    let mut sq = 0.0;
    for idx in 0..noise.flat_dim() {
        let base = noise.flat(idx);
        work.set_flat(idx, base + step);
        let plus = h(&work);
        work.set_flat(idx, base - step);
        let minus = h(&work);
        work.set_flat(idx, base);
        let d = if plus.is_finite() && minus.is_finite() {
            (plus - minus) / (2.0 * step)
        } else {
            DIVERGED_GRADIENT_SENTINEL
        };
        sq += d * d;
    }
    sq.sqrt()
}

/// Margins and gradient norms for the `N` samples of one candidate
/// switching offset.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub margins: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    pub candidate: usize,
}

/// Lipschitz-constant estimate: the largest sampled gradient norm.
pub fn estimate_lipschitz(batch: &RolloutBatch) -> f64 {
    debug_assert!(!batch.gradient_norms.is_empty());
    batch
        .gradient_norms
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Number of margins strictly below the inflated threshold `L_H * beta`.
pub fn count_violations(margins: &[f64], l_h: f64, beta: f64) -> usize {
    debug_assert!(l_h >= 0.0 && beta >= 0.0);
    let threshold = l_h * beta;
    margins.iter().filter(|m| **m < threshold).count()
}

/// Inputs shared by every rollout of one certification: dynamics, the two
/// policies, the safety specification and the samplers for the nominal
/// noise distribution.
pub struct RolloutContext<'a> {
    pub model: &'a dyn SystemModel,
    pub nominal: &'a dyn crate::types::Policy,
    pub backup: &'a dyn crate::types::Policy,
    pub safety: &'a dyn SafetySpec,
    pub process_sampler: &'a dyn NoiseSampler,
    pub theta_sampler: &'a dyn ThetaSampler,
}

/// Outcome of one sampled rollout: its safety margin, the recorded noise
/// and whether the rollout diverged.
pub struct SampleEvaluation {
    pub margin: f64,
    pub noise: NoiseTrajectory,
    pub diverged: bool,
}

impl<'a> RolloutContext<'a> {
    /// Sample and score one rollout for candidate offset `m` and sample
    /// index `i` at time `t`, drawing from counter-based streams so the
    /// result is independent of scheduling.
    pub fn evaluate_sample(
        &self,
        trial_seed: u64,
        t: u64,
        m: usize,
        i: usize,
        x0: &StateVector,
        horizon: usize,
    ) -> SampleEvaluation {
        let mut theta = vec![0.0; self.theta_sampler.dim()];
        if !theta.is_empty() {
            let mut ts = RngStream::from_key(RngKey::new(
                trial_seed,
                t,
                m as u64,
                i as u64,
                Channel::Theta,
            ));
            self.theta_sampler.sample_into(x0, &mut ts, &mut theta);
        }
        let mut ps = RngStream::from_key(RngKey::new(
            trial_seed,
            t,
            m as u64,
            i as u64,
            Channel::Process,
        ));
        let policy = SwitchedPolicy::new(self.nominal, self.backup, m as u64);
        let (result, noise) =
            sample_rollout(self.model, &policy, x0, horizon, self.process_sampler, &mut ps, theta);
        let margin = margin_or_neg_inf(&result, noise.theta(), self.safety);
        SampleEvaluation {
            margin,
            noise,
            diverged: result.is_err(),
        }
    }

    /// Finite-difference gradient norm of the safety margin with respect to
    /// the recorded noise, replaying the rollout open loop per perturbation.
    pub fn sample_gradient_norm(
        &self,
        m: usize,
        x0: &StateVector,
        horizon: usize,
        noise: &NoiseTrajectory,
        fd_step: f64,
    ) -> f64 {
        let policy = SwitchedPolicy::new(self.nominal, self.backup, m as u64);
        gradient_norm(
            |w: &NoiseTrajectory| {
                let result = propagate(self.model, &policy, x0, w, horizon);
                margin_or_neg_inf(&result, w.theta(), self.safety)
            },
            noise,
            fd_step,
        )
    }
}
