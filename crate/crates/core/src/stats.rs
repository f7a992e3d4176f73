//! Exact binomial tail computations and the finite-sample upper confidence
//! bound on a failure probability.
//!
//! Given `k` observed violations out of `N` independent samples, the bound
//! `q̄ = max{ q ∈ [0,1] | Bin(k; N, q) ≥ ρ }` is the largest failure
//! probability still consistent with the observation at confidence `1 − ρ`.
//! It has the same form as a Clopper-Pearson upper limit. The per-candidate
//! error `ρ = 1 − (1−δ)^{1/M}` splits a joint budget `δ` across `M`
//! independent certifications, and the distributionally robust acceptance
//! threshold is `(ε − α)/(1 − α)`.

use statrs::function::beta::beta_reg;
use thiserror::Error;

/// Bisection tolerance on the upper confidence bound.
pub const QBAR_TOL: f64 = 1e-10;

/// Sample counts up to this size use direct term summation for the CDF;
/// larger counts switch to the regularized incomplete beta identity.
const DIRECT_SUM_MAX_N: u64 = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("violation count k={k} outside [0, {n}]")]
    CountOutOfRange { k: i64, n: u64 },
    #[error("sample count N must be >= 1")]
    EmptySample,
    #[error("probability {value} outside {bounds}")]
    ProbabilityOutOfRange { value: f64, bounds: &'static str },
    #[error("alpha={alpha} must satisfy 0 <= alpha < epsilon={epsilon} < 1")]
    BudgetOrdering { alpha: f64, epsilon: f64 },
    #[error("candidate count M must be >= 1")]
    NoCandidates,
}

/// `Pr[X <= k]` for `X ~ Binomial(N, q)`.
///
/// Direct summation builds every probability mass term by recurrence from
/// the mode and normalizes by their total (which is exactly one), so the
/// result carries only rounding error from `O(N)` multiplications; for
/// `N > 10^4` the identity `Bin(k; N, q) = I_{1-q}(N-k, k+1)` is used
/// instead.
pub fn binomial_cdf(k: i64, n: u64, q: f64) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if k < 0 || k as u64 > n {
        return Err(StatsError::CountOutOfRange { k, n });
    }
    if !(0.0..=1.0).contains(&q) || q.is_nan() {
        return Err(StatsError::ProbabilityOutOfRange {
            value: q,
            bounds: "[0, 1]",
        });
    }
    let k = k as u64;
    if k == n || q == 0.0 {
        return Ok(1.0);
    }
    if q == 1.0 {
        // all N trials succeed, so Pr[X <= k] = 0 for k < N
        return Ok(0.0);
    }
    if n <= DIRECT_SUM_MAX_N {
        Ok(direct_sum_cdf(k, n, q))
    } else {
        Ok(beta_reg((n - k) as f64, (k + 1) as f64, 1.0 - q).clamp(0.0, 1.0))
    }
}

fn direct_sum_cdf(k: u64, n: u64, q: f64) -> f64 {
    let n_us = n as usize;
    let ratio = q / (1.0 - q);
    let mode = (((n + 1) as f64 * q) as u64).min(n) as usize;
    // weights relative to the mode; far tails underflow to 0 harmlessly
    let mut w = vec![0.0f64; n_us + 1];
    w[mode] = 1.0;
    for j in (0..mode).rev() {
        w[j] = w[j + 1] * (j + 1) as f64 / ((n_us - j) as f64 * ratio);
    }
    for j in mode..n_us {
        w[j + 1] = w[j] * (n_us - j) as f64 * ratio / (j + 1) as f64;
    }
    let head = kahan_sum(&w[..=k as usize]);
    let total = kahan_sum(&w);
    (head / total).clamp(0.0, 1.0)
}

fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Finite-sample upper confidence bound on the failure probability:
/// `q̄ = max{ q ∈ [0,1] | Bin(k; N, q) ≥ ρ }`.
///
/// For `k < N` the CDF is strictly decreasing in `q`, so the maximum is
/// found by bisection over `[k/N, 1]` to absolute tolerance [`QBAR_TOL`].
/// For `k = N` the CDF equals one for every `q` and the bound is exactly 1.
pub fn upper_confidence_bound(k: i64, n: u64, rho: f64) -> Result<f64, StatsError> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if k < 0 || k as u64 > n {
        return Err(StatsError::CountOutOfRange { k, n });
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(StatsError::ProbabilityOutOfRange {
            value: rho,
            bounds: "(0, 1)",
        });
    }
    if k as u64 == n {
        return Ok(1.0);
    }
    let mut lo = k as f64 / n as f64; // Bin(k; N, k/N) >= 1/2 >= rho is not guaranteed
    if binomial_cdf(k, n, lo)? < rho {
        // can only happen for rho > Bin(k; N, k/N) >= ~0.5; widen to [0, lo]
        let mut lo2 = 0.0;
        let mut hi2 = lo;
        for _ in 0..200 {
            if hi2 - lo2 < QBAR_TOL {
                break;
            }
            let mid = 0.5 * (lo2 + hi2);
            if binomial_cdf(k, n, mid)? >= rho {
                lo2 = mid;
            } else {
                hi2 = mid;
            }
        }
        return Ok(lo2);
    }
    let mut hi = 1.0;
    for _ in 0..200 {
        if hi - lo < QBAR_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if binomial_cdf(k, n, mid)? >= rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Per-candidate error rate `ρ = 1 − (1−δ)^{1/M}`, so that `M` independent
/// certifications at level `1 − ρ` compose to joint confidence `1 − δ`.
pub fn per_candidate_error(delta: f64, m: u64) -> Result<f64, StatsError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(StatsError::ProbabilityOutOfRange {
            value: delta,
            bounds: "(0, 1)",
        });
    }
    if m == 0 {
        return Err(StatsError::NoCandidates);
    }
    Ok(-((-delta).ln_1p() / m as f64).exp_m1())
}

/// Distributionally robust acceptance threshold `(ε − α)/(1 − α)`.
pub fn dr_threshold(epsilon: f64, alpha: f64) -> Result<f64, StatsError> {
    if !(alpha >= 0.0 && alpha < epsilon && epsilon < 1.0) {
        return Err(StatsError::BudgetOrdering { alpha, epsilon });
    }
    Ok((epsilon - alpha) / (1.0 - alpha))
}

/// Violation count, sample size and the resulting upper confidence bound
/// for one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBound {
    pub k: u64,
    pub n: u64,
    pub rho: f64,
    pub q_bar: f64,
}

impl ConfidenceBound {
    pub fn compute(k: u64, n: u64, rho: f64) -> Result<Self, StatsError> {
        let q_bar = upper_confidence_bound(k as i64, n, rho)?;
        Ok(ConfidenceBound { k, n, rho, q_bar })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cdf_full_support_is_one() {
        for q in [0.0, 0.3, 1.0] {
            assert_eq!(binomial_cdf(5, 5, q).unwrap(), 1.0);
        }
    }

    #[test]
    fn cdf_zero_success_probability() {
        assert_eq!(binomial_cdf(0, 7, 0.0).unwrap(), 1.0);
        assert_eq!(binomial_cdf(3, 7, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn cdf_direct_value() {
        // Pr[X <= 0] for Binomial(3, 0.5) = 0.5^3
        assert_abs_diff_eq!(binomial_cdf(0, 3, 0.5).unwrap(), 0.125, epsilon = 1e-14);
        // Pr[X <= 1] for Binomial(10, 0.1) = 0.9^10 + 10*0.1*0.9^9
        let expected = 0.9f64.powi(10) + 10.0 * 0.1 * 0.9f64.powi(9);
        assert_abs_diff_eq!(binomial_cdf(1, 10, 0.1).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn cdf_matches_exact_coefficient_sum() {
        // binomial coefficients for n = 100 fit in u128 exactly
        fn oracle(k: u64, n: u64, q: f64) -> f64 {
            let mut coeff: u128 = 1;
            let mut sum = 0.0;
            for j in 0..=k {
                sum += coeff as f64 * q.powi(j as i32) * (1.0 - q).powi((n - j) as i32);
                coeff = coeff * (n - j) as u128 / (j + 1) as u128;
            }
            sum
        }
        for (k, n, q) in [(0u64, 100u64, 0.03), (5, 100, 0.1), (50, 100, 0.5), (90, 100, 0.8)] {
            let got = binomial_cdf(k as i64, n, q).unwrap();
            assert_abs_diff_eq!(got, oracle(k, n, q), epsilon = 1e-12);
        }
    }

    #[test]
    fn cdf_direct_and_beta_routes_agree() {
        // straddle the switchover by comparing both routes directly
        for (k, n, q) in [(3u64, 40u64, 0.2), (100, 5000, 0.025), (500, 9999, 0.05)] {
            let direct = direct_sum_cdf(k, n, q);
            let beta = beta_reg((n - k) as f64, (k + 1) as f64, 1.0 - q);
            assert_abs_diff_eq!(direct, beta, epsilon = 1e-11);
        }
    }

    #[test]
    fn cdf_domain_errors() {
        assert!(binomial_cdf(-1, 5, 0.5).is_err());
        assert!(binomial_cdf(6, 5, 0.5).is_err());
        assert!(binomial_cdf(2, 5, 1.5).is_err());
        assert!(binomial_cdf(2, 0, 0.5).is_err());
    }

    #[test]
    fn qbar_k_equals_n_is_one() {
        assert_eq!(upper_confidence_bound(4, 4, 0.3).unwrap(), 1.0);
        assert_eq!(upper_confidence_bound(1000, 1000, 0.01).unwrap(), 1.0);
    }

    #[test]
    fn qbar_zero_count_closed_form() {
        // Bin(0; N, q) = (1-q)^N, so q̄ = 1 - rho^{1/N}
        let got = upper_confidence_bound(0, 1000, 0.01).unwrap();
        let expected = 1.0 - 0.01f64.powf(1.0 / 1000.0);
        assert_abs_diff_eq!(got, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(expected, 0.0045952, epsilon = 1e-6);
    }

    #[test]
    fn qbar_one_of_ten() {
        // root of (1-q)^10 + 10 q (1-q)^9 = 0.5
        let got = upper_confidence_bound(1, 10, 0.5).unwrap();
        assert_abs_diff_eq!(got, 0.162, epsilon = 1e-3);
    }

    #[test]
    fn qbar_domain_errors() {
        assert!(upper_confidence_bound(-1, 10, 0.5).is_err());
        assert!(upper_confidence_bound(11, 10, 0.5).is_err());
        assert!(upper_confidence_bound(1, 10, 0.0).is_err());
        assert!(upper_confidence_bound(1, 10, 1.0).is_err());
    }

    #[test]
    fn per_candidate_error_values() {
        assert_abs_diff_eq!(per_candidate_error(0.3, 1).unwrap(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(
            per_candidate_error(0.05, 10).unwrap(),
            1.0 - 0.95f64.powf(0.1),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(per_candidate_error(0.05, 10).unwrap(), 0.0051162, epsilon = 1e-6);
        // composition: (1-rho)^M = 1-delta; geometric splitting sits just
        // above the union-bound rate delta/M
        let rho = per_candidate_error(0.01, 1000).unwrap();
        assert!(rho > 0.01 / 1000.0 && rho < 0.01 / 1000.0 * 1.01);
        assert_abs_diff_eq!((1.0 - rho).powi(1000), 0.99, epsilon = 1e-12);
        assert!(per_candidate_error(0.0, 5).is_err());
        assert!(per_candidate_error(0.5, 0).is_err());
    }

    #[test]
    fn dr_threshold_values() {
        assert_eq!(dr_threshold(0.1, 0.0).unwrap(), 0.1);
        assert_abs_diff_eq!(dr_threshold(0.05, 0.01).unwrap(), 0.040404, epsilon = 1e-6);
        assert!(dr_threshold(0.05, 0.05).is_err());
        assert!(dr_threshold(1.0, 0.0).is_err());
        assert!(dr_threshold(0.05, -0.1).is_err());
    }

    #[test]
    fn confidence_bound_struct_matches_free_function() {
        let b = ConfidenceBound::compute(3, 100, 0.05).unwrap();
        assert_eq!(b.q_bar, upper_confidence_bound(3, 100, 0.05).unwrap());
    }

    proptest! {
        /// q̄ is nondecreasing in k at fixed (N, rho).
        #[test]
        fn qbar_monotone_in_k(n in 1u64..60, rho in 0.005f64..0.6) {
            let mut prev = 0.0;
            for k in 0..=n {
                let q = upper_confidence_bound(k as i64, n, rho).unwrap();
                prop_assert!(q >= prev - 1e-9, "k={k} q={q} prev={prev}");
                prev = q;
            }
        }

        /// q̄ is nonincreasing in rho at fixed (k, N).
        #[test]
        fn qbar_monotone_in_rho(n in 2u64..60, kf in 0.0f64..1.0) {
            let k = ((n as f64 - 1.0) * kf) as i64;
            let a = upper_confidence_bound(k, n, 0.01).unwrap();
            let b = upper_confidence_bound(k, n, 0.05).unwrap();
            let c = upper_confidence_bound(k, n, 0.5).unwrap();
            prop_assert!(a >= b - 1e-9 && b >= c - 1e-9);
        }

        /// For fixed k, q̄ is nonincreasing in N.
        #[test]
        fn qbar_monotone_in_n(k in 0u64..10, rho in 0.01f64..0.5) {
            let mut prev = 1.0;
            for n in [k.max(1) + 1, k + 10, k + 50, k + 200] {
                let q = upper_confidence_bound(k as i64, n, rho).unwrap();
                prop_assert!(q <= prev + 1e-9, "n={n} q={q} prev={prev}");
                prev = q;
            }
        }

        /// Definition check: Bin(k; N, q̄) >= rho and Bin(k; N, q̄ + tol) < rho.
        #[test]
        fn qbar_satisfies_definition(n in 1u64..80, kf in 0.0f64..1.0, rho in 0.01f64..0.6) {
            let k = ((n as f64) * kf) as i64;
            let q = upper_confidence_bound(k, n, rho).unwrap();
            if (k as u64) < n {
                prop_assert!(binomial_cdf(k, n, q).unwrap() >= rho - 1e-9);
                let above = (q + 1e-6).min(1.0);
                if above < 1.0 {
                    prop_assert!(binomial_cdf(k, n, above).unwrap() < rho + 1e-9);
                }
            } else {
                prop_assert_eq!(q, 1.0);
            }
        }
    }
}
