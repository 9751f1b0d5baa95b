//! Poisson confidence machinery: empirical bounding functions, deterministic
//! envelopes, the per-round confidence schedule, and pointwise intervals.
//!
//! For N ~ Poisson(lambda) the bounding functions satisfy
//! `Pr[lambda > u_plus(N, delta)] <= delta` and
//! `Pr[lambda < u_minus(N, delta)] <= delta`; the envelope functions bound
//! the bounding functions themselves in terms of the true mean. Natural
//! logarithms throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfidenceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A `[lcb, ucb]` confidence interval on an emission rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lcb: f64,
    pub ucb: f64,
}

impl Interval {
    pub fn new(lcb: f64, ucb: f64) -> Result<Self, ConfidenceError> {
        if !(0.0 <= lcb && lcb <= ucb) || !ucb.is_finite() {
            return Err(ConfidenceError::InvalidArgument(format!(
                "need 0 <= lcb <= ucb < inf, got [{lcb}, {ucb}]"
            )));
        }
        Ok(Interval { lcb, ucb })
    }

    pub fn contains(&self, rate: f64) -> bool {
        self.lcb <= rate && rate <= self.ucb
    }

    pub fn width(&self) -> f64 {
        self.ucb - self.lcb
    }
}

/// Deterministic envelope `[lcb_bar, ucb_bar]` around the empirical bounds,
/// a function of the true mean only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeInterval {
    pub lcb_bar: f64,
    pub ucb_bar: f64,
}

fn check_delta(delta: f64) -> Result<f64, ConfidenceError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(ConfidenceError::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok((1.0 / delta).ln())
}

/// Upper bounding function: `2 log(1/delta) + N + sqrt(2 N log(1/delta))`.
pub fn u_plus(n: u64, delta: f64) -> Result<f64, ConfidenceError> {
    let l = check_delta(delta)?;
    let n = n as f64;
    Ok(2.0 * l + n + (2.0 * n * l).sqrt())
}

/// Lower bounding function: `max{0, N - sqrt(2 N log(1/delta))}`.
pub fn u_minus(n: u64, delta: f64) -> Result<f64, ConfidenceError> {
    let l = check_delta(delta)?;
    let n = n as f64;
    Ok((n - (2.0 * n * l).sqrt()).max(0.0))
}

/// Deterministic upper envelope:
/// `mu + (14/3) log(1/delta) + 2 sqrt(2 mu log(1/delta))`.
pub fn ubar_plus(mu: f64, delta: f64) -> Result<f64, ConfidenceError> {
    let l = check_delta(delta)?;
    if !(mu >= 0.0) {
        return Err(ConfidenceError::InvalidArgument(format!("mu must be >= 0, got {mu}")));
    }
    Ok(mu + 14.0 / 3.0 * l + 2.0 * (2.0 * mu * l).sqrt())
}

/// Deterministic lower envelope: `max{0, mu - 2 sqrt(2 mu log(1/delta))}`.
pub fn ubar_minus(mu: f64, delta: f64) -> Result<f64, ConfidenceError> {
    let l = check_delta(delta)?;
    if !(mu >= 0.0) {
        return Err(ConfidenceError::InvalidArgument(format!("mu must be >= 0, got {mu}")));
    }
    Ok((mu - 2.0 * (2.0 * mu * l).sqrt()).max(0.0))
}

/// Deterministic envelope for a mean `tau * mu` observed over dwell `tau`,
/// expressed back in rate units.
pub fn envelope_interval(mu: f64, tau: f64, delta: f64) -> Result<EnvelopeInterval, ConfidenceError> {
    if !(tau > 0.0) {
        return Err(ConfidenceError::InvalidArgument(format!("tau must be > 0, got {tau}")));
    }
    Ok(EnvelopeInterval {
        lcb_bar: ubar_minus(tau * mu, delta)? / tau,
        ucb_bar: ubar_plus(tau * mu, delta)? / tau,
    })
}

/// Effective per-round confidence: `delta_total / (4 |S| i^2)` for 1-indexed
/// round `i`. Round 0 of the engine (the first traversal) reuses i = 1.
pub fn round_delta(delta_total: f64, n_cells: usize, round_i: u32) -> Result<f64, ConfidenceError> {
    if round_i == 0 {
        return Err(ConfidenceError::InvalidArgument("round index must be >= 1".into()));
    }
    if !(delta_total > 0.0 && delta_total < 1.0) {
        return Err(ConfidenceError::InvalidArgument(format!(
            "delta_total must lie in (0, 1), got {delta_total}"
        )));
    }
    if n_cells == 0 {
        return Err(ConfidenceError::InvalidArgument("n_cells must be >= 1".into()));
    }
    Ok(delta_total / (4.0 * n_cells as f64 * (round_i as f64).powi(2)))
}

/// Confidence interval on a rate from `n` counts observed over `tau` seconds
/// at effective confidence `delta`.
pub fn pointwise_interval(n: u64, tau: f64, delta: f64) -> Result<Interval, ConfidenceError> {
    if !(tau > 0.0) {
        return Err(ConfidenceError::InvalidArgument(format!("tau must be > 0, got {tau}")));
    }
    Interval::new(u_minus(n, delta)? / tau, u_plus(n, delta)? / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const E1: f64 = 0.367_879_441_171_442_33; // e^-1
    const E2: f64 = 0.135_335_283_236_612_7; // e^-2

    #[test]
    fn bounding_functions_hand_values() {
        assert!((u_plus(0, E1).unwrap() - 2.0).abs() < 1e-12);
        assert!((u_plus(8, E2).unwrap() - (4.0 + 8.0 + 32f64.sqrt())).abs() < 1e-12);
        assert!(u_plus(0, 1.0 - 1e-12).unwrap() < 1e-10);

        assert_eq!(u_minus(0, 0.3).unwrap(), 0.0);
        assert!((u_minus(8, E2).unwrap() - (8.0 - 32f64.sqrt())).abs() < 1e-12);
        assert_eq!(u_minus(1, (-8f64).exp()).unwrap(), 0.0); // 1 - 4 clamps to 0
    }

    #[test]
    fn envelope_hand_values() {
        assert_eq!(ubar_minus(0.0, 0.1).unwrap(), 0.0);
        assert!((ubar_minus(100.0, E2).unwrap() - 60.0).abs() < 1e-12);
        assert!((ubar_plus(0.0, (-3f64).exp()).unwrap() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn round_delta_schedule() {
        let d1 = round_delta(0.05, 256, 1).unwrap();
        let d2 = round_delta(0.05, 256, 2).unwrap();
        assert!((d1 - 0.05 / 1024.0).abs() < 1e-18);
        assert!((d2 - 0.05 / 4096.0).abs() < 1e-18);
        assert!(round_delta(0.05, 256, 0).is_err());
    }

    #[test]
    fn pointwise_interval_hand_values() {
        let i = pointwise_interval(0, 1.0, E1).unwrap();
        assert_eq!(i.lcb, 0.0);
        assert!((i.ucb - 2.0).abs() < 1e-12);

        let i = pointwise_interval(8, 2.0, E2).unwrap();
        assert!((i.lcb - (8.0 - 32f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((i.ucb - (4.0 + 8.0 + 32f64.sqrt()) / 2.0).abs() < 1e-12);

        assert!(pointwise_interval(3, 0.0, 0.1).is_err());
    }

    #[test]
    fn delta_out_of_range_is_rejected() {
        for bad in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(u_plus(1, bad).is_err());
            assert!(u_minus(1, bad).is_err());
            assert!(ubar_plus(1.0, bad).is_err());
            assert!(ubar_minus(1.0, bad).is_err());
        }
    }

    proptest! {
        #[test]
        fn interval_contains_empirical_mean(n in 0u64..100_000, tau in 0.01f64..1e4, delta in 1e-9f64..0.999) {
            let iv = pointwise_interval(n, tau, delta).unwrap();
            let mean = n as f64 / tau;
            prop_assert!(iv.lcb <= mean + 1e-9 && mean <= iv.ucb + 1e-9);
        }

        #[test]
        fn u_plus_monotone(n in 0u64..10_000, delta in 1e-9f64..0.999) {
            let base = u_plus(n, delta).unwrap();
            prop_assert!(u_plus(n + 1, delta).unwrap() >= base);
            // Larger log(1/delta), i.e. smaller delta, widens the bound.
            prop_assert!(u_plus(n, delta * 0.5).unwrap() >= base);
        }

        #[test]
        fn u_minus_monotone_in_n(n in 0u64..10_000, delta in 1e-9f64..0.999) {
            prop_assert!(u_minus(n + 1, delta).unwrap() >= u_minus(n, delta).unwrap());
        }

        #[test]
        fn envelope_orders_around_mean(mu in 0.0f64..1e6, delta in 1e-9f64..0.999) {
            let lo = ubar_minus(mu, delta).unwrap();
            let hi = ubar_plus(mu, delta).unwrap();
            prop_assert!(0.0 <= lo && lo <= mu && mu <= hi);
        }
    }
}
