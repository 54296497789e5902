//! Closed-form first-passage analytics for a single name.
//!
//! Marginally each distance to default is `x0 + beta t + B_t` for a standard
//! Brownian motion `B` (the idiosyncratic and common factors combine to unit
//! variance), and default is the first time it reaches zero. The survival
//! function follows from the reflection principle.

use libm::erfc;

use crate::error::{Error, Result};
use crate::params::Schedule;

/// Lower end of the root bracket for [`invert_x0`].
pub const X0_MIN: f64 = 1.0e-6;
/// Upper end of the root bracket for [`invert_x0`].
pub const X0_MAX: f64 = 6.0;
const MAX_ITER: usize = 200;

/// Standard normal CDF, accurate to a few ulps in relative terms in the lower
/// tail.
#[inline]
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleNameState {
    pub x0: f64,
    pub beta: f64,
}

impl SingleNameState {
    pub fn new(x0: f64, beta: f64) -> Self {
        SingleNameState { x0, beta }
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// `Q(tau > t)` under continuous monitoring.
pub fn survival_prob(state: SingleNameState, t: f64) -> Result<f64> {
    check_time(t)?;
    let SingleNameState { x0, beta } = state;
    if x0 <= 0.0 {
        return Ok(0.0);
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let sq = t.sqrt();
    let a = norm_cdf((x0 + beta * t) / sq);
    let b = reflected_term(x0, beta, t);
    Ok((a - b).clamp(0.0, 1.0))
}

/// `Q(tau <= t)`, computed from tail probabilities so that it keeps full
/// relative precision when it is tiny.
pub fn default_prob(state: SingleNameState, t: f64) -> Result<f64> {
    check_time(t)?;
    let SingleNameState { x0, beta } = state;
    if x0 <= 0.0 {
        return Ok(1.0);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let sq = t.sqrt();
    let a = norm_cdf((-x0 - beta * t) / sq);
    let b = reflected_term(x0, beta, t);
    Ok((a + b).clamp(0.0, 1.0))
}

// exp(-2 beta x0) * Phi((-x0 + beta t)/sqrt t), evaluated in log space
fn reflected_term(x0: f64, beta: f64, t: f64) -> f64 {
    let p = norm_cdf((-x0 + beta * t) / t.sqrt());
    if p == 0.0 {
        return 0.0;
    }
    (-2.0 * beta * x0 + p.ln()).exp()
}

/// Protection and premium legs of the CDS quote, `(LGD * sum D_j dF_j,
/// alpha * sum D_j S_j)`.
fn legs(state: SingleNameState, sched: &Schedule, lgd: f64) -> Result<(f64, f64)> {
    let mut prev_default = default_prob(state, 0.0)?;
    let mut protection = 0.0;
    let mut premium = 0.0;
    for (&t, &df) in sched.dates().iter().zip(sched.discounts()) {
        let f = default_prob(state, t)?;
        let s = survival_prob(state, t)?;
        protection += df * (f - prev_default);
        premium += df * s;
        prev_default = f;
    }
    Ok((lgd * protection, sched.alpha() * premium))
}

/// Par CDS spread (decimal) for a name with continuously monitored default.
pub fn cds_quote_analytic(state: SingleNameState, sched: &Schedule, lgd: f64) -> Result<f64> {
    if sched.is_empty() {
        return Err(Error::invalid("empty schedule"));
    }
    let (protection, premium) = legs(state, sched, lgd)?;
    if premium < 1e-14 {
        return Err(Error::DegenerateQuote(format!(
            "premium leg {premium:e} vanishes for x0 = {}",
            state.x0
        )));
    }
    Ok((protection / premium).max(0.0))
}

/// Attainable quote interval `[quote(X0_MAX), quote(X0_MIN)]` for drift `beta`.
pub fn attainable_range(beta: f64, sched: &Schedule, lgd: f64) -> Result<(f64, f64)> {
    let lo = cds_quote_analytic(SingleNameState::new(X0_MAX, beta), sched, lgd)?;
    let hi = cds_quote_analytic(SingleNameState::new(X0_MIN, beta), sched, lgd)?;
    Ok((lo, hi))
}

/// Initial distance to default whose analytic CDS quote equals `target`.
///
/// Solves `ln quote(x0) = ln target` on `[X0_MIN, X0_MAX]` by Illinois
/// regula falsi with a bisection safeguard; the quote is strictly decreasing
/// in `x0`, so the bracket always holds exactly one root.
pub fn invert_x0(target: f64, beta: f64, sched: &Schedule, lgd: f64) -> Result<f64> {
    let (lo_q, hi_q) = attainable_range(beta, sched, lgd)?;
    if !(target > 0.0) || !target.is_finite() || target < lo_q || target > hi_q {
        return Err(Error::NoSolution {
            target,
            lo: lo_q,
            hi: hi_q,
        });
    }
    let ln_target = target.ln();
    let objective = |x: f64| -> Result<f64> {
        let q = cds_quote_analytic(SingleNameState::new(x, beta), sched, lgd)?;
        Ok(if q > 0.0 { q.ln() - ln_target } else { f64::NEG_INFINITY })
    };

    // f(a) >= 0 >= f(b)
    let (mut a, mut b) = (X0_MIN, X0_MAX);
    let (mut fa, mut fb) = (objective(a)?, objective(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    for _ in 0..MAX_ITER {
        let mut x = if fa.is_finite() && fb.is_finite() {
            (a * fb - b * fa) / (fb - fa)
        } else {
            0.5 * (a + b)
        };
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = objective(x)?;
        if fx == 0.0 || (b - a) < 1e-14 * x.max(1.0) {
            return Ok(x);
        }
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if fx.abs() < 1e-14 {
            return Ok(x);
        }
    }
    Err(Error::numeric(format!(
        "x0 inversion did not converge for target {target:e} (bracket [{a}, {b}])"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sched() -> Schedule {
        Schedule::new(0.25, 5.0, 0.015).unwrap()
    }

    #[test]
    fn survival_edge_cases() {
        let s = SingleNameState::new(2.0, 0.3);
        assert_eq!(survival_prob(s, 0.0).unwrap(), 1.0);
        assert!(survival_prob(s, -1.0).is_err());
        assert_eq!(survival_prob(SingleNameState::new(0.0, 0.3), 1.0).unwrap(), 0.0);
        assert_eq!(survival_prob(SingleNameState::new(-1.0, 0.3), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn driftless_reflection() {
        // 1 - 2 Phi(-1)
        let p = survival_prob(SingleNameState::new(1.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(p, 0.682_689_492_137_085_9, epsilon = 1e-14);
    }

    #[test]
    fn survival_plus_default_is_one() {
        for &(x0, beta, t) in &[(0.5, -0.2, 0.3), (3.0, 0.25, 5.0), (6.0, 2.6, 5.0), (0.01, 0.8, 0.25)] {
            let st = SingleNameState::new(x0, beta);
            let s = survival_prob(st, t).unwrap();
            let f = default_prob(st, t).unwrap();
            assert!((s + f - 1.0).abs() < 1e-14, "{x0} {beta} {t}");
        }
    }

    #[test]
    fn survival_monotone_grid() {
        for bi in 0..3 {
            let beta = -0.3 + 0.6 * bi as f64;
            for i in 0..20 {
                let x0 = 0.1 + 0.3 * i as f64;
                let mut prev = 1.0;
                for j in 0..20 {
                    let t = 0.25 * (j + 1) as f64;
                    let s = survival_prob(SingleNameState::new(x0, beta), t).unwrap();
                    assert!(s <= prev + 1e-15);
                    if i > 0 {
                        let lower = survival_prob(SingleNameState::new(x0 - 0.3, beta), t).unwrap();
                        assert!(lower <= s + 1e-15);
                    }
                    prev = s;
                }
            }
        }
    }

    #[test]
    fn quote_limits() {
        let far = cds_quote_analytic(SingleNameState::new(40.0, 0.25), &sched(), 0.6).unwrap();
        assert!(far < 1e-15);
        let zero_lgd = cds_quote_analytic(SingleNameState::new(1.0, 0.25), &sched(), 0.0).unwrap();
        assert_eq!(zero_lgd, 0.0);
        let dead = cds_quote_analytic(SingleNameState::new(0.0, 0.25), &sched(), 0.6);
        assert!(matches!(dead, Err(Error::DegenerateQuote(_))));
    }

    #[test]
    fn quote_strictly_decreasing() {
        let s = sched();
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let x0 = 0.1 + 0.09 * i as f64;
            let q = cds_quote_analytic(SingleNameState::new(x0, 0.2491), &s, 0.6).unwrap();
            assert!(q < prev);
            prev = q;
        }
    }

    #[test]
    fn inversion_round_trip() {
        let s = sched();
        let q = cds_quote_analytic(SingleNameState::new(2.0, 0.2491), &s, 0.6).unwrap();
        let x = invert_x0(q, 0.2491, &s, 0.6).unwrap();
        assert!((x - 2.0).abs() < 1e-8);
    }

    #[test]
    fn inversion_rejects_unattainable() {
        let s = sched();
        assert!(matches!(invert_x0(0.0, 0.25, &s, 0.6), Err(Error::NoSolution { .. })));
        assert!(matches!(invert_x0(1e9, 0.25, &s, 0.6), Err(Error::NoSolution { .. })));
        let (lo, _) = attainable_range(0.25, &s, 0.6).unwrap();
        assert!(matches!(invert_x0(lo * 0.5, 0.25, &s, 0.6), Err(Error::NoSolution { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn larger_target_smaller_x0(u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let s = sched();
            // targets between 5 and 2000 bps
            let t1 = 5e-4 * (400f64).powf(u);
            let t2 = 5e-4 * (400f64).powf(v);
            prop_assume!((t1 - t2).abs() > 1e-9);
            let x1 = invert_x0(t1, 0.2491, &s, 0.6).unwrap();
            let x2 = invert_x0(t2, 0.2491, &s, 0.6).unwrap();
            prop_assert_eq!(t1 > t2, x1 < x2);
        }

        #[test]
        fn inversion_identity(x0 in 0.1f64..6.0, beta in -0.24f64..2.6) {
            let s = Schedule::new(0.25, 5.0, 0.02).unwrap();
            let q = cds_quote_analytic(SingleNameState::new(x0, beta), &s, 0.6).unwrap();
            let x = invert_x0(q, beta, &s, 0.6).unwrap();
            prop_assert!((x - x0).abs() < 1e-8, "x0 {} got {}", x0, x);
            let back = cds_quote_analytic(SingleNameState::new(x, beta), &s, 0.6).unwrap();
            prop_assert!(((back - q) / q).abs() <= 1e-10);
        }
    }
}
