//! Tail bounds for the coincidence statistic and the sample-size solver.
//!
//! Under any local strategy `S_m` is a supermartingale whose centred
//! increments are bounded by 3/2 with conditional variance at most 3/4.
//! The martingale Bernstein inequality then gives, for every `k > 0`,
//!
//! ```text
//! P{ sup_{m≤n} S_m ≥ (√3/2)·k·√n } ≤ exp( −(k²/2) / (1 + k/(√3·√n)) )
//! ```
//!
//! The same form, applied to `n·μ − S_n` under the quantum prediction, bounds
//! the chance that the quantum side falls below the critical value.
//!
//! Probabilities are carried as natural logarithms so that values far below
//! `f64::MIN_POSITIVE` survive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("deviation multiplier k must be positive, got {0}")]
    NonPositiveK(f64),
    #[error("threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("number of trials must be at least 1")]
    ZeroTrials,
    #[error("critical value {critical_value} exceeds the quantum expectation {expected}")]
    InfeasibleThreshold { critical_value: i64, expected: f64 },
    #[error("critical value {0} must be positive")]
    NonPositiveCritical(i64),
    #[error("per-trial quantum mean {0} is outside (0, (√2−1)/4]")]
    InvalidMean(f64),
    #[error("target error {0} is outside (0, 1)")]
    InvalidTarget(f64),
    #[error("no design with n ≤ {0} meets the targets")]
    NoFeasibleDesign(u64),
}

/// A probability stored as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProbability<T> {
    ln: T,
}

impl<T: Real> LogProbability<T> {
    pub fn one() -> Self {
        LogProbability { ln: T::zero() }
    }

    /// Clamps to at most 1.
    pub fn from_ln(ln: T) -> Self {
        LogProbability { ln: ln.min(T::zero()) }
    }

    pub fn from_value(p: T) -> Self {
        Self::from_ln(p.ln())
    }

    pub fn ln(self) -> T {
        self.ln
    }

    pub fn log10(self) -> T {
        self.ln / T::LN_10()
    }

    pub fn value(self) -> T {
        self.ln.exp()
    }

    pub fn at_most(self, p: T) -> bool {
        self.ln <= p.ln()
    }
}

#[derive(Serialize, Deserialize)]
struct LogProbabilityRepr<T> {
    value: T,
    ln: T,
}

impl<T: Real + Serialize> Serialize for LogProbability<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LogProbabilityRepr {
            value: self.value(),
            ln: self.ln,
        }
        .serialize(s)
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for LogProbability<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = LogProbabilityRepr::<T>::deserialize(d)?;
        Ok(LogProbability::from_ln(r.ln))
    }
}

fn sqrt3<T: Real>() -> T {
    T::lit(3.0).sqrt()
}

fn positive_k<T: Real>(k: T) -> Result<(), BoundsError> {
    if k > T::zero() && k.is_finite() {
        Ok(())
    } else {
        Err(BoundsError::NonPositiveK(k.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Chebyshev bound through Lenglart domination: `P{S_n ≥ k√n} ≤ min(1, √3/k)`.
///
/// Comes from `δ/(k²n) + 3n/(4δ)` minimised at `δ = √3·n/(2k)`; it also covers
/// `sup_{m≤n} S_m`.
pub fn lenglart_chebyshev_bound<T: Real>(k: T) -> Result<LogProbability<T>, BoundsError> {
    positive_k(k)?;
    Ok(LogProbability::from_ln((sqrt3::<T>() / k).ln()))
}

/// Chebyshev bound for independent trials, `min(1, 1/k²)`, for comparison.
pub fn independent_chebyshev_bound<T: Real>(k: T) -> Result<LogProbability<T>, BoundsError> {
    positive_k(k)?;
    Ok(LogProbability::from_ln(-T::lit(2.0) * k.ln()))
}

/// The deviation multiplier `k` with `threshold = (√3/2)·k·√n`.
pub fn deviation_multiplier<T: Real>(n: u64, threshold: T) -> T {
    T::lit(2.0) * threshold / (sqrt3::<T>() * T::from_count(n).sqrt())
}

/// Bernstein bound on `P{sup_{m≤n} S_m ≥ threshold}` for local strategies.
pub fn bernstein_sup_bound<T: Real>(n: u64, threshold: T) -> Result<LogProbability<T>, BoundsError> {
    if n == 0 {
        return Err(BoundsError::ZeroTrials);
    }
    if !(threshold > T::zero()) || !threshold.is_finite() {
        return Err(BoundsError::NonPositiveThreshold(threshold.to_f64().unwrap_or(f64::NAN)));
    }
    let root_n = T::from_count(n).sqrt();
    let k = deviation_multiplier(n, threshold);
    let half = T::lit(0.5);
    let ln = -(half * k * k) / (T::one() + k / (sqrt3::<T>() * root_n));
    Ok(LogProbability::from_ln(ln))
}

/// Bound on the quantum side ending at or below `critical_value`, from the
/// same inequality applied to `n·μ − S_n`.
pub fn quantum_side_error_bound<T: Real>(
    n: u64,
    critical_value: i64,
    qm_mean_per_trial: T,
) -> Result<LogProbability<T>, BoundsError> {
    if n == 0 {
        return Err(BoundsError::ZeroTrials);
    }
    let expected = T::from_count(n) * qm_mean_per_trial;
    let gap = expected - T::from_i64(critical_value).expect("critical value representable");
    if gap < T::zero() {
        return Err(BoundsError::InfeasibleThreshold {
            critical_value,
            expected: expected.to_f64().unwrap_or(f64::NAN),
        });
    }
    if gap == T::zero() {
        return Ok(LogProbability::one());
    }
    bernstein_sup_bound(n, gap)
}

/// Agreed sample size, critical value, and the two guaranteed error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct ProtocolDesign<T> {
    pub n: u64,
    pub critical_value: i64,
    /// Local realist loses although the world is local.
    pub local_error_bound: LogProbability<T>,
    /// Quantum claimant loses although the quantum prediction holds.
    pub quantum_error_bound: LogProbability<T>,
    pub qm_mean_per_trial: T,
}

impl<T: Real> ProtocolDesign<T> {
    /// Evaluate both bounds for a fixed `(n, C)`. Requires `0 < C < n·μ`.
    pub fn evaluate(n: u64, critical_value: i64, qm_mean_per_trial: T) -> Result<Self, BoundsError> {
        if n == 0 {
            return Err(BoundsError::ZeroTrials);
        }
        if critical_value <= 0 {
            return Err(BoundsError::NonPositiveCritical(critical_value));
        }
        let expected = T::from_count(n) * qm_mean_per_trial;
        if T::from_i64(critical_value).unwrap() >= expected {
            return Err(BoundsError::InfeasibleThreshold {
                critical_value,
                expected: expected.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(ProtocolDesign {
            n,
            critical_value,
            local_error_bound: bernstein_sup_bound(n, T::from_i64(critical_value).unwrap())?,
            quantum_error_bound: quantum_side_error_bound(n, critical_value, qm_mean_per_trial)?,
            qm_mean_per_trial,
        })
    }

    /// The midpoint critical value `⌊n·μ/2⌋`.
    pub fn midpoint(n: u64, qm_mean_per_trial: T) -> Result<Self, BoundsError> {
        let c = (T::from_count(n) * qm_mean_per_trial / T::lit(2.0)).floor();
        Self::evaluate(n, c.to_i64().unwrap_or(0), qm_mean_per_trial)
    }

    pub fn meets(&self, local_target: T, quantum_target: T) -> bool {
        self.local_error_bound.at_most(local_target) && self.quantum_error_bound.at_most(quantum_target)
    }
}

const MAX_TRIALS: u64 = 1 << 40;

fn check_design_inputs<T: Real>(mu: T, targets: &[T]) -> Result<(), BoundsError> {
    let ceiling = (T::SQRT_2() - T::one()) / T::lit(4.0) + T::lit(1e-12);
    if !(mu > T::zero() && mu <= ceiling) {
        return Err(BoundsError::InvalidMean(mu.to_f64().unwrap_or(f64::NAN)));
    }
    for &t in targets {
        if !(t > T::zero() && t < T::one()) {
            return Err(BoundsError::InvalidTarget(t.to_f64().unwrap_or(f64::NAN)));
        }
    }
    Ok(())
}

/// Smallest `n` in `[1, MAX_TRIALS]` satisfying `ok`, assuming `ok` is
/// monotone in `n`.
fn smallest_n(mut ok: impl FnMut(u64) -> bool) -> Result<u64, BoundsError> {
    let mut hi = 1u64;
    while !ok(hi) {
        if hi >= MAX_TRIALS {
            return Err(BoundsError::NoFeasibleDesign(MAX_TRIALS));
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    // invariant: !ok(lo) (or lo == 0), ok(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Midpoint design: `C = ⌊n·μ/2⌋` and the smallest `n` for which both error
/// bounds are at most `target_error`.
pub fn design_protocol<T: Real>(qm_mean_per_trial: T, target_error: T) -> Result<ProtocolDesign<T>, BoundsError> {
    check_design_inputs(qm_mean_per_trial, &[target_error])?;
    let n = smallest_n(|n| {
        ProtocolDesign::midpoint(n, qm_mean_per_trial)
            .map(|d| d.meets(target_error, target_error))
            .unwrap_or(false)
    })?;
    ProtocolDesign::midpoint(n, qm_mean_per_trial)
}

/// Smallest threshold `t` with `bernstein_sup_bound(n, t) ≤ target`.
///
/// The exponent simplifies to `2t²/(3n + 2t)`, so `t` is the positive root
/// of `2t² − 2Lt − 3Ln = 0` with `L = −ln target`.
fn minimal_threshold<T: Real>(n: u64, target: T) -> T {
    let l = -target.ln();
    let n = T::from_count(n);
    (l + (l * l + T::lit(6.0) * l * n).sqrt()) / T::lit(2.0)
}

/// Design for unequal error targets. The critical value is the smallest
/// integer meeting the local-realist target; `n` is the smallest for which
/// the quantum side's target is then also met.
pub fn design_protocol_asymmetric<T: Real>(
    qm_mean_per_trial: T,
    local_target: T,
    quantum_target: T,
) -> Result<ProtocolDesign<T>, BoundsError> {
    check_design_inputs(qm_mean_per_trial, &[local_target, quantum_target])?;
    let at = |n: u64| -> Result<ProtocolDesign<T>, BoundsError> {
        let mut c = minimal_threshold(n, local_target).ceil().to_i64().unwrap_or(i64::MAX).max(1);
        // Guard the closed form against rounding at the boundary.
        while !bernstein_sup_bound(n, T::from_i64(c).unwrap())?.at_most(local_target) {
            c += 1;
        }
        ProtocolDesign::evaluate(n, c, qm_mean_per_trial)
    };
    let n = smallest_n(|n| at(n).map(|d| d.meets(local_target, quantum_target)).unwrap_or(false))?;
    at(n)
}
