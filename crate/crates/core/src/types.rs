//! Shared domain types: states, controls, noise trajectories, policies and
//! safety specifications.
//!
//! Everything here is an immutable value after construction. Policy and
//! sampler implementations must be pure so the rollout layer can fan them
//! out across workers without synchronization.

use crate::rng::RngStream;

/// State vector `x ∈ R^n`. Dimension is fixed by the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// True when every entry is finite. Dynamics steps that produce a
    /// non-finite state are treated as model blow-up by the rollout layer.
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for StateVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

/// Control vector `u ∈ U ⊂ R^m`. Policies clamp their output to the
/// scenario's box bounds before returning, so a `ControlVector` seen by the
/// dynamics is always admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector(Vec<f64>);

impl ControlVector {
    pub fn new(values: Vec<f64>) -> Self {
        ControlVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for ControlVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Component-wise box bounds on the control input.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        ControlBounds { lower, upper }
    }

    pub fn clamp(&self, values: Vec<f64>) -> ControlVector {
        let clamped = values
            .into_iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect();
        ControlVector(clamped)
    }

    pub fn contains(&self, u: &ControlVector) -> bool {
        u.0.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Feedback policy `π : X → U`. Implementations must be pure: the same
/// state always maps to the same control, already clamped to the bounds.
pub trait Policy: Sync {
    fn act(&self, x: &StateVector) -> ControlVector;
}

/// Policy that follows the nominal controller before the switch step and
/// the backup controller from the switch step on.
pub struct SwitchedPolicy<'a> {
    pub nominal: &'a dyn Policy,
    pub backup: &'a dyn Policy,
    pub switch_step: u64,
}

impl<'a> SwitchedPolicy<'a> {
    pub fn new(nominal: &'a dyn Policy, backup: &'a dyn Policy, switch_step: u64) -> Self {
        SwitchedPolicy {
            nominal,
            backup,
            switch_step,
        }
    }

    /// Nominal action iff `t < switch_step`, backup action otherwise.
    pub fn act(&self, x: &StateVector, t: u64) -> ControlVector {
        if t < self.switch_step {
            self.nominal.act(x)
        } else {
            self.backup.act(x)
        }
    }
}

/// Process-noise sampler for one dynamics step. May condition on the
/// current state and control. Must be a deterministic function of the
/// stream: identical stream state yields identical samples.
pub trait NoiseSampler: Sync {
    fn dim(&self) -> usize;
    fn sample_into(
        &self,
        x: &StateVector,
        u: &ControlVector,
        stream: &mut RngStream,
        out: &mut [f64],
    );
}

/// Sampler for the unsafe-set parameter hypothesis. Scenarios with exact
/// obstacle knowledge use [`ExactTheta`], a zero-dimensional point mass.
pub trait ThetaSampler: Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, x: &StateVector, stream: &mut RngStream, out: &mut [f64]);
}

/// Degenerate theta sampler: the unsafe set is known exactly.
pub struct ExactTheta;

impl ThetaSampler for ExactTheta {
    fn dim(&self) -> usize {
        0
    }
    fn sample_into(&self, _x: &StateVector, _stream: &mut RngStream, _out: &mut [f64]) {}
}

/// Discrete-time stochastic dynamics `x' = f(x, u, w)`.
pub trait SystemModel: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    /// Dimension `p` of one process-noise vector.
    fn noise_dim(&self) -> usize;
    /// Duration of one discrete step, in seconds.
    fn dt(&self) -> f64;
    fn step(&self, x: &StateVector, u: &ControlVector, w: &[f64]) -> StateVector;
}

/// Safety specification: stage margin for the safe set, terminal margin
/// for the backup invariant set, and the backup failure budget alpha.
///
/// `stage_margin(x, θ) ≥ 0` iff `x` is in the safe set for hypothesis θ;
/// `terminal_margin(x) ≥ 0` iff `x` is in the invariant set the backup
/// policy maintains with probability at least `1 − alpha`.
pub trait SafetySpec: Sync {
    fn stage_margin(&self, x: &StateVector, theta: &[f64]) -> f64;
    fn terminal_margin(&self, x: &StateVector) -> f64;
    fn alpha(&self) -> f64;
}

/// One sampled noise realization for a rollout: a theta hypothesis plus
/// `T` process-noise vectors, stored flattened so the whole realization
/// can be perturbed coordinate-by-coordinate for finite differencing.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    theta: Vec<f64>,
    process: Vec<f64>,
    steps: usize,
    per_step: usize,
}

impl NoiseTrajectory {
    pub fn zeros(theta_dim: usize, steps: usize, per_step: usize) -> Self {
        NoiseTrajectory {
            theta: vec![0.0; theta_dim],
            process: vec![0.0; steps * per_step],
            steps,
            per_step,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    /// Process-noise vector consumed at rollout step `tau`.
    pub fn step_noise(&self, tau: usize) -> &[f64] {
        let s = tau * self.per_step;
        &self.process[s..s + self.per_step]
    }

    pub fn step_noise_mut(&mut self, tau: usize) -> &mut [f64] {
        let s = tau * self.per_step;
        &mut self.process[s..s + self.per_step]
    }

    /// Total flattened dimension `v + T·p` of the lumped noise space.
    pub fn flat_dim(&self) -> usize {
        self.theta.len() + self.process.len()
    }

    /// Flat coordinate access: theta entries first, then process noise in
    /// step order.
    pub fn flat(&self, idx: usize) -> f64 {
        if idx < self.theta.len() {
            self.theta[idx]
        } else {
            self.process[idx - self.theta.len()]
        }
    }

    pub fn set_flat(&mut self, idx: usize, value: f64) {
        if idx < self.theta.len() {
            self.theta[idx] = value;
        } else {
            self.process[idx - self.theta.len()] = value;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(Vec<f64>);
    impl Policy for Constant {
        fn act(&self, _x: &StateVector) -> ControlVector {
            ControlVector::new(self.0.clone())
        }
    }

    #[test]
    fn switched_policy_dichotomy() {
        let nominal = Constant(vec![1.0]);
        let backup = Constant(vec![-1.0]);
        let policy = SwitchedPolicy::new(&nominal, &backup, 5);
        let x = StateVector::new(vec![0.0]);

        assert_eq!(policy.act(&x, 4).as_slice(), &[1.0]);
        assert_eq!(policy.act(&x, 5).as_slice(), &[-1.0]);
        assert_eq!(policy.act(&x, 6).as_slice(), &[-1.0]);

        let immediate = SwitchedPolicy::new(&nominal, &backup, 0);
        for t in 0..10 {
            assert_eq!(immediate.act(&x, t).as_slice(), &[-1.0]);
        }
    }

    #[test]
    fn bounds_clamp_componentwise() {
        let bounds = ControlBounds::new(vec![-5.0, -0.5], vec![5.0, 0.5]);
        let u = bounds.clamp(vec![7.0, -2.0]);
        assert_eq!(u.as_slice(), &[5.0, -0.5]);
        assert!(bounds.contains(&u));
        let inside = bounds.clamp(vec![1.0, 0.25]);
        assert_eq!(inside.as_slice(), &[1.0, 0.25]);
    }

    #[test]
    fn noise_trajectory_flat_layout() {
        let mut w = NoiseTrajectory::zeros(2, 3, 4);
        assert_eq!(w.flat_dim(), 2 + 12);
        w.set_flat(1, 9.0);
        assert_eq!(w.theta(), &[0.0, 9.0]);
        w.set_flat(2, 7.0);
        assert_eq!(w.step_noise(0), &[7.0, 0.0, 0.0, 0.0]);
        w.set_flat(2 + 11, 3.0);
        assert_eq!(w.step_noise(2), &[0.0, 0.0, 0.0, 3.0]);
        assert_eq!(w.flat(13), 3.0);
    }

    #[test]
    fn state_finiteness() {
        assert!(StateVector::new(vec![1.0, -2.0]).is_finite());
        assert!(!StateVector::new(vec![1.0, f64::NAN]).is_finite());
        assert!(!StateVector::new(vec![f64::INFINITY]).is_finite());
    }
}
