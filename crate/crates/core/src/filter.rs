//! The certification loop: evaluate every candidate switching time with
//! sampled rollouts, bound each failure probability, and commit to the
//! latest certified switch time (or keep the previous commitment when no
//! candidate certifies).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rollout::{count_violations, RolloutContext, DIVERGED_GRADIENT_SENTINEL};
use crate::stats::{dr_threshold, per_candidate_error, upper_confidence_bound};
use crate::types::{ControlVector, StateVector, SwitchedPolicy};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("candidate count M must be >= 1")]
    NoCandidates,
    #[error("horizon T={horizon} must satisfy T >= 1 and T >= M-1 (M={candidates})")]
    HorizonTooShort { horizon: usize, candidates: usize },
    #[error("sample count N must be >= 1")]
    NoSamples,
    #[error("delta={0} must be in (0, 1)")]
    BadDelta(f64),
    #[error("epsilon={epsilon} and alpha={alpha} must satisfy 0 <= alpha < epsilon < 1")]
    BadBudgets { epsilon: f64, alpha: f64 },
    #[error("beta={0} must be finite and >= 0")]
    BadBeta(f64),
    #[error("finite-difference step must be > 0, got {0}")]
    BadFdStep(f64),
    #[error("recertify_period must be >= 1")]
    BadRecertifyPeriod,
    #[error("fixed_lipschitz={0} must be >= 0")]
    BadFixedLipschitz(f64),
    #[error("gradient_subsample must be >= 1 when the Lipschitz constant is estimated")]
    BadGradientSubsample,
}

fn default_fd_step() -> f64 {
    1e-4
}
fn default_recertify() -> usize {
    1
}

/// All certification parameters: candidate count `M`, rollout horizon `T`,
/// samples per candidate `N`, joint error rate `delta`, failure budget
/// `epsilon`, ambiguity radius `beta` and backup failure budget `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatekeeperConfig {
    pub candidates: usize,
    pub horizon: usize,
    pub samples: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Overrides per-candidate Lipschitz estimation with a constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_lipschitz: Option<f64>,
    /// Central-difference step for gradient estimation, in noise units.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Number of samples per candidate whose gradient is evaluated.
    /// `None` evaluates all `N`. Subsampling can only lower the estimate
    /// and is therefore unconservative; outcomes record it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient_subsample: Option<usize>,
    /// Control steps between certification runs.
    #[serde(default = "default_recertify")]
    pub recertify_period: usize,
}

impl GatekeeperConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.candidates == 0 {
            return Err(ConfigError::NoCandidates);
        }
        if self.horizon == 0 || self.horizon < self.candidates - 1 {
            return Err(ConfigError::HorizonTooShort {
                horizon: self.horizon,
                candidates: self.candidates,
            });
        }
        if self.samples == 0 {
            return Err(ConfigError::NoSamples);
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ConfigError::BadDelta(self.delta));
        }
        if !(self.alpha >= 0.0 && self.alpha < self.epsilon && self.epsilon < 1.0) {
            return Err(ConfigError::BadBudgets {
                epsilon: self.epsilon,
                alpha: self.alpha,
            });
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ConfigError::BadBeta(self.beta));
        }
        if !(self.fd_step > 0.0) {
            return Err(ConfigError::BadFdStep(self.fd_step));
        }
        if self.recertify_period == 0 {
            return Err(ConfigError::BadRecertifyPeriod);
        }
        if let Some(l) = self.fixed_lipschitz {
            if !(l >= 0.0) {
                return Err(ConfigError::BadFixedLipschitz(l));
            }
        } else if self.gradient_subsample == Some(0) {
            return Err(ConfigError::BadGradientSubsample);
        }
        Ok(())
    }
}

/// Per-invocation certification result. The vectors are indexed by
/// candidate offset `m`; the outcome is self-certifying in the sense that
/// recomputing feasibility from `bounds` reproduces `feasible`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificationOutcome {
    /// Violation counts `k^m`.
    pub counts: Vec<usize>,
    /// Lipschitz estimates (or the fixed override) per candidate.
    pub lipschitz: Vec<f64>,
    /// Upper confidence bounds `q̄^m`.
    pub bounds: Vec<f64>,
    /// Candidates whose bound passes the threshold.
    pub feasible: Vec<usize>,
    /// Committed absolute switch time.
    pub selected_switch: u64,
    /// True when no candidate certified and the previous commitment stands.
    pub fell_back: bool,
    /// Number of diverged rollouts per candidate (each scored `-inf`).
    pub diverged: Vec<usize>,
    /// Acceptance threshold `(epsilon - alpha)/(1 - alpha)` in force.
    pub threshold: f64,
}

/// Run one certification at time `t` from state `x_t`.
///
/// For each candidate offset `m` in `0..M`, draws `N` independent noise
/// realizations from the nominal distribution, scores the switched rollout
/// (switch at `t + m`), estimates the Lipschitz constant (unless fixed),
/// counts inflated violations and bounds the failure probability. Selects
/// `t + max(feasible)`, or `s_prev` when nothing certifies.
pub fn certify(
    ctx: &RolloutContext,
    t: u64,
    x_t: &StateVector,
    s_prev: u64,
    cfg: &GatekeeperConfig,
    trial_seed: u64,
) -> Result<CertificationOutcome, ConfigError> {
    cfg.validate()?;
    let m_count = cfg.candidates;
    let n = cfg.samples;
    let grad_count = match cfg.fixed_lipschitz {
        Some(_) => 0,
        None => cfg.gradient_subsample.unwrap_or(n).min(n),
    };

    // one cell per (m, i); order-preserving collect keeps the reduction
    // below deterministic regardless of worker count
    let cells: Vec<(f64, Option<f64>, bool)> = (0..m_count * n)
        .into_par_iter()
        .map(|flat| {
            let m = flat / n;
            let i = flat % n;
            let eval = ctx.evaluate_sample(trial_seed, t, m, i, x_t, cfg.horizon);
            let grad = if i < grad_count {
                Some(if eval.diverged {
                    DIVERGED_GRADIENT_SENTINEL
                } else {
                    ctx.sample_gradient_norm(m, x_t, cfg.horizon, &eval.noise, cfg.fd_step)
                })
            } else {
                None
            };
            (eval.margin, grad, eval.diverged)
        })
        .collect();

    let rho = per_candidate_error(cfg.delta, m_count as u64).expect("validated");
    let threshold = dr_threshold(cfg.epsilon, cfg.alpha).expect("validated");

    let mut counts = Vec::with_capacity(m_count);
    let mut lipschitz = Vec::with_capacity(m_count);
    let mut bounds = Vec::with_capacity(m_count);
    let mut diverged = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let slice = &cells[m * n..(m + 1) * n];
        let l_h = cfg.fixed_lipschitz.unwrap_or_else(|| {
            slice
                .iter()
                .filter_map(|(_, g, _)| *g)
                .fold(0.0f64, f64::max)
        });
        let margins: Vec<f64> = slice.iter().map(|(h, _, _)| *h).collect();
        let k = count_violations(&margins, l_h, cfg.beta);
        let q_bar = upper_confidence_bound(k as i64, n as u64, rho).expect("validated inputs");
        counts.push(k);
        lipschitz.push(l_h);
        bounds.push(q_bar);
        diverged.push(slice.iter().filter(|(_, _, d)| *d).count());
    }

    let feasible: Vec<usize> = (0..m_count).filter(|m| bounds[*m] <= threshold).collect();
    let (selected_switch, fell_back) = match feasible.last() {
        Some(max_m) => (t + *max_m as u64, false),
        None => (s_prev, true),
    };

    Ok(CertificationOutcome {
        counts,
        lipschitz,
        bounds,
        feasible,
        selected_switch,
        fell_back,
        diverged,
        threshold,
    })
}

/// One recorded certification, with the step at which it ran.
#[derive(Debug, Clone, Serialize)]
pub struct InvocationRecord {
    pub time: u64,
    pub outcome: CertificationOutcome,
}

/// Stateful filter wrapper: certifies every `recertify_period` steps and
/// acts under the currently committed switch time in between. A later
/// certification may push the switch time past the current step, which
/// reinstates the nominal policy.
pub struct SafetyFilter<'a> {
    ctx: RolloutContext<'a>,
    cfg: GatekeeperConfig,
    trial_seed: u64,
    committed_switch: u64,
    history: Vec<InvocationRecord>,
}

impl<'a> SafetyFilter<'a> {
    /// `initial_switch` is the pre-certified commitment the filter starts
    /// from; committing to the start time itself means "backup immediately",
    /// which is valid whenever the system starts inside the backup's
    /// invariant set.
    pub fn new(
        ctx: RolloutContext<'a>,
        cfg: GatekeeperConfig,
        trial_seed: u64,
        initial_switch: u64,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(SafetyFilter {
            ctx,
            cfg,
            trial_seed,
            committed_switch: initial_switch,
            history: Vec::new(),
        })
    }

    pub fn committed_switch(&self) -> u64 {
        self.committed_switch
    }

    pub fn history(&self) -> &[InvocationRecord] {
        &self.history
    }

    pub fn into_history(self) -> Vec<InvocationRecord> {
        self.history
    }

    /// True when the backup policy drives the control at `sim_time` under
    /// the current commitment.
    pub fn backup_active(&self, sim_time: u64) -> bool {
        sim_time >= self.committed_switch
    }

    /// Advance one control step: recertify if due, then act under the
    /// committed switch time.
    pub fn step(&mut self, sim_time: u64, x: &StateVector) -> ControlVector {
        if sim_time % self.cfg.recertify_period as u64 == 0 {
            let outcome = certify(
                &self.ctx,
                sim_time,
                x,
                self.committed_switch,
                &self.cfg,
                self.trial_seed,
            )
            .expect("config validated at construction");
            self.committed_switch = outcome.selected_switch;
            self.history.push(InvocationRecord {
                time: sim_time,
                outcome,
            });
        }
        SwitchedPolicy::new(self.ctx.nominal, self.ctx.backup, self.committed_switch)
            .act(x, sim_time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::types::{
        ExactTheta, NoiseSampler, Policy, SafetySpec, SystemModel,
    };

    struct Integrator;
    impl SystemModel for Integrator {
        fn state_dim(&self) -> usize {
            1
        }
        fn control_dim(&self) -> usize {
            1
        }
        fn noise_dim(&self) -> usize {
            1
        }
        fn dt(&self) -> f64 {
            0.1
        }
        fn step(&self, x: &StateVector, u: &ControlVector, w: &[f64]) -> StateVector {
            StateVector::new(vec![x[0] + 0.1 * u[0] + w[0]])
        }
    }

    struct Constant(f64);
    impl Policy for Constant {
        fn act(&self, _x: &StateVector) -> ControlVector {
            ControlVector::new(vec![self.0])
        }
    }

    struct SmallNoise;
    impl NoiseSampler for SmallNoise {
        fn dim(&self) -> usize {
            1
        }
        fn sample_into(
            &self,
            _x: &StateVector,
            _u: &ControlVector,
            stream: &mut RngStream,
            out: &mut [f64],
        ) {
            out[0] = 0.01 * stream.standard_normal();
        }
    }

    /// Margin is a constant offset from x[0]; start far from the boundary
    /// to make every rollout safe, or past it to make every rollout fail.
    struct OffsetSpec;
    impl SafetySpec for OffsetSpec {
        fn stage_margin(&self, x: &StateVector, _theta: &[f64]) -> f64 {
            x[0]
        }
        fn terminal_margin(&self, x: &StateVector) -> f64 {
            x[0]
        }
        fn alpha(&self) -> f64 {
            0.0
        }
    }

    fn cfg() -> GatekeeperConfig {
        GatekeeperConfig {
            candidates: 4,
            horizon: 5,
            samples: 50,
            delta: 0.05,
            epsilon: 0.1,
            beta: 0.01,
            alpha: 0.0,
            fixed_lipschitz: None,
            fd_step: 1e-4,
            gradient_subsample: Some(4),
            recertify_period: 1,
        }
    }

    fn ctx<'a>(
        model: &'a Integrator,
        nom: &'a Constant,
        bak: &'a Constant,
        spec: &'a OffsetSpec,
        sampler: &'a SmallNoise,
        theta: &'a ExactTheta,
    ) -> RolloutContext<'a> {
        RolloutContext {
            model,
            nominal: nom,
            backup: bak,
            safety: spec,
            process_sampler: sampler,
            theta_sampler: theta,
        }
    }

    #[test]
    fn all_safe_selects_latest_candidate() {
        let (model, nom, bak, spec, sampler, theta) =
            (Integrator, Constant(1.0), Constant(-1.0), OffsetSpec, SmallNoise, ExactTheta);
        let c = ctx(&model, &nom, &bak, &spec, &sampler, &theta);
        let x = StateVector::new(vec![100.0]);
        let out = certify(&c, 7, &x, 0, &cfg(), 1).unwrap();
        assert_eq!(out.counts, vec![0; 4]);
        assert_eq!(out.feasible, vec![0, 1, 2, 3]);
        assert_eq!(out.selected_switch, 7 + 3);
        assert!(!out.fell_back);
        // self-certifying: all bounds equal (same k, N, rho) and <= threshold
        for q in &out.bounds {
            assert!(*q <= out.threshold);
        }
    }

    #[test]
    fn all_unsafe_falls_back_to_previous_commitment() {
        let (model, nom, bak, spec, sampler, theta) =
            (Integrator, Constant(1.0), Constant(-1.0), OffsetSpec, SmallNoise, ExactTheta);
        let c = ctx(&model, &nom, &bak, &spec, &sampler, &theta);
        let x = StateVector::new(vec![-100.0]);
        let out = certify(&c, 3, &x, 42, &cfg(), 1).unwrap();
        assert_eq!(out.counts, vec![50; 4]);
        assert!(out.bounds.iter().all(|q| *q == 1.0));
        assert!(out.feasible.is_empty());
        assert_eq!(out.selected_switch, 42);
        assert!(out.fell_back);
    }

    #[test]
    fn single_candidate_uses_delta_directly() {
        let (model, nom, bak, spec, sampler, theta) =
            (Integrator, Constant(1.0), Constant(-1.0), OffsetSpec, SmallNoise, ExactTheta);
        let c = ctx(&model, &nom, &bak, &spec, &sampler, &theta);
        let mut config = cfg();
        config.candidates = 1;
        let x = StateVector::new(vec![100.0]);
        let out = certify(&c, 0, &x, 0, &config, 1).unwrap();
        // k=0, M=1 => q̄ = 1 - delta^{1/N}
        let expected = upper_confidence_bound(0, 50, 0.05).unwrap();
        assert_eq!(out.bounds[0], expected);
    }

    #[test]
    fn feasibility_recomputable_from_outcome() {
        let (model, nom, bak, spec, sampler, theta) =
            (Integrator, Constant(1.0), Constant(-1.0), OffsetSpec, SmallNoise, ExactTheta);
        let c = ctx(&model, &nom, &bak, &spec, &sampler, &theta);
        // start near the boundary so candidates disagree
        let x = StateVector::new(vec![0.3]);
        let out = certify(&c, 0, &x, 0, &cfg(), 5).unwrap();
        let recomputed: Vec<usize> = (0..out.bounds.len())
            .filter(|m| out.bounds[*m] <= out.threshold)
            .collect();
        assert_eq!(recomputed, out.feasible);
    }

    #[test]
    fn larger_beta_never_enlarges_feasible_set() {
        let (model, nom, bak, spec, sampler, theta) =
            (Integrator, Constant(1.0), Constant(-1.0), OffsetSpec, SmallNoise, ExactTheta);
        let c = ctx(&model, &nom, &bak, &spec, &sampler, &theta);
        let x = StateVector::new(vec![0.05]);
        let mut low = cfg();
        low.beta = 0.0;
        let mut high = cfg();
        high.beta = 0.5;
        // same trial seed and t: shared noise draws by construction
        let out_low = certify(&c, 0, &x, 0, &low, 9).unwrap();
        let out_high = certify(&c, 0, &x, 0, &high, 9).unwrap();
        for m in 0..low.candidates {
            assert!(out_high.counts[m] >= out_low.counts[m]);
        }
        for m in &out_high.feasible {
            assert!(out_low.feasible.contains(m));
        }
    }

    #[test]
    fn fixed_lipschitz_skips_estimation() {
        let (model, nom, bak, spec, sampler, theta) =
            (Integrator, Constant(1.0), Constant(-1.0), OffsetSpec, SmallNoise, ExactTheta);
        let c = ctx(&model, &nom, &bak, &spec, &sampler, &theta);
        let mut config = cfg();
        config.fixed_lipschitz = Some(7.5);
        let x = StateVector::new(vec![100.0]);
        let out = certify(&c, 0, &x, 0, &config, 1).unwrap();
        assert!(out.lipschitz.iter().all(|l| *l == 7.5));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.candidates = 0;
        assert_eq!(c.validate(), Err(ConfigError::NoCandidates));

        let mut c = cfg();
        c.horizon = 2; // < M-1 = 3
        assert!(matches!(c.validate(), Err(ConfigError::HorizonTooShort { .. })));

        let mut c = cfg();
        c.alpha = 0.1; // == epsilon
        assert!(matches!(c.validate(), Err(ConfigError::BadBudgets { .. })));

        let mut c = cfg();
        c.beta = -1.0;
        assert!(matches!(c.validate(), Err(ConfigError::BadBeta(_))));

        let mut c = cfg();
        c.gradient_subsample = Some(0);
        assert_eq!(c.validate(), Err(ConfigError::BadGradientSubsample));
        c.fixed_lipschitz = Some(1.0); // subsample irrelevant once fixed
        assert!(c.validate().is_ok());
    }

    #[test]
    fn filter_recertifies_on_period_and_can_reinstate_nominal() {
        let (model, nom, bak, spec, sampler, theta) =
            (Integrator, Constant(1.0), Constant(-1.0), OffsetSpec, SmallNoise, ExactTheta);
        let c = ctx(&model, &nom, &bak, &spec, &sampler, &theta);
        let mut config = cfg();
        config.recertify_period = 3;
        let mut filter = SafetyFilter::new(c, config, 11, 0).unwrap();
        let x = StateVector::new(vec![100.0]);

        // starts committed to immediate backup; the first certification at
        // t=0 pushes the switch out and reinstates the nominal policy
        let u0 = filter.step(0, &x);
        assert_eq!(u0.as_slice(), &[1.0]);
        assert_eq!(filter.committed_switch(), 3);
        assert_eq!(filter.history().len(), 1);

        // intermediate steps reuse the commitment without recertifying
        let _ = filter.step(1, &x);
        let _ = filter.step(2, &x);
        assert_eq!(filter.history().len(), 1);
        let _ = filter.step(3, &x);
        assert_eq!(filter.history().len(), 2);
        assert_eq!(filter.committed_switch(), 6);
    }
}
