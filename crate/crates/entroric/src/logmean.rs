//! Logarithmic-mean calculus.
//!
//! The logarithmic mean `theta(r, s) = (r - s) / (ln r - ln s)` weights
//! discrete gradients throughout the curvature forms. This module provides
//! the mean itself (continuously extended by zero when either argument
//! vanishes), its partial derivatives on the open quadrant, and the
//! concavity deficit that controls the sign of square contributions.

use thiserror::Error;

/// Switch to the series expansion when `|r - s| <= SERIES_THRESHOLD * max(r, s)`.
///
/// The closed forms lose accuracy to cancellation near the diagonal (the
/// partials are differences of nearly equal O(z) terms); inside this window
/// the series in `z = (r - s) / (r + s)` is accurate to machine precision
/// with a truncation error of order `z^5 <= 3e-17`.
const SERIES_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LogMeanError {
    /// The logarithmic mean is defined for finite nonnegative arguments.
    #[error("logarithmic mean needs finite nonnegative arguments, got ({r}, {s})")]
    OutOfDomain { r: f64, s: f64 },
    /// Partial derivatives blow up on the boundary of the quadrant; they are
    /// only provided for strictly positive arguments.
    #[error("logarithmic-mean partials need strictly positive arguments, got ({r}, {s})")]
    BoundaryPartials { r: f64, s: f64 },
}

fn check_nonnegative(r: f64, s: f64) -> Result<(), LogMeanError> {
    if r.is_finite() && s.is_finite() && r >= 0.0 && s >= 0.0 {
        Ok(())
    } else {
        Err(LogMeanError::OutOfDomain { r, s })
    }
}

fn check_positive(r: f64, s: f64) -> Result<(), LogMeanError> {
    check_nonnegative(r, s)?;
    if r > 0.0 && s > 0.0 {
        Ok(())
    } else {
        Err(LogMeanError::BoundaryPartials { r, s })
    }
}

/// Logarithmic mean of two nonnegative numbers.
///
/// `theta(r, s) = (r - s) / (ln r - ln s)` for distinct positive arguments,
/// `theta(r, r) = r`, and `theta(r, 0) = theta(0, s) = 0` (the continuous
/// extension). Symmetric, positively homogeneous, and bounded between the
/// geometric and arithmetic means.
pub fn theta(r: f64, s: f64) -> Result<f64, LogMeanError> {
    check_nonnegative(r, s)?;
    Ok(theta_raw(r, s))
}

/// Partial derivatives `(d theta/dr, d theta/ds)` at strictly positive `(r, s)`.
///
/// They satisfy `r * d1 + s * d2 = theta(r, s)` and are strictly positive.
pub fn theta_partials(r: f64, s: f64) -> Result<(f64, f64), LogMeanError> {
    check_positive(r, s)?;
    Ok(theta_partials_raw(r, s))
}

/// Concavity deficit of the logarithmic mean.
///
/// `deficit(s, t, u, v) = u * d1 theta(s, t) + v * d2 theta(s, t) - theta(u, v)`,
/// the gap between the tangent plane of `theta` at `(s, t)` evaluated at
/// `(u, v)` and the value there. Concavity of `theta` makes it nonnegative.
/// Requires `s, t > 0` (partials) and `u, v >= 0`.
pub fn deficit(s: f64, t: f64, u: f64, v: f64) -> Result<f64, LogMeanError> {
    check_positive(s, t)?;
    check_nonnegative(u, v)?;
    let (d1, d2) = theta_partials_raw(s, t);
    Ok(u * d1 + v * d2 - theta_raw(u, v))
}

/// `theta` without domain checks; callers guarantee finite nonnegative input.
pub(crate) fn theta_raw(r: f64, s: f64) -> f64 {
    debug_assert!(r >= 0.0 && s >= 0.0);
    if r == 0.0 || s == 0.0 {
        return 0.0;
    }
    if (r - s).abs() <= SERIES_THRESHOLD * r.max(s) {
        // theta = m / (1 + z^2/3 + z^4/5 + z^6/7 + O(z^8)), m = (r+s)/2.
        let m = 0.5 * (r + s);
        let z = (r - s) / (r + s);
        let z2 = z * z;
        return m / (1.0 + z2 * (1.0 / 3.0 + z2 * (0.2 + z2 / 7.0)));
    }
    // ln(r/s) via log1p keeps full relative accuracy for nearby arguments.
    (r - s) / ((r - s) / s).ln_1p()
}

/// Partials without domain checks; callers guarantee strictly positive input.
pub(crate) fn theta_partials_raw(r: f64, s: f64) -> (f64, f64) {
    debug_assert!(r > 0.0 && s > 0.0);
    if (r - s).abs() <= SERIES_THRESHOLD * r.max(s) {
        // d1 = (1 - (2/3) z + (1/3) z^2 - (16/45) z^3 + (4/15) z^4) / 2 + O(z^5),
        // d2 the same with z -> -z; together they satisfy r d1 + s d2 = theta
        // through fourth order.
        let z = (r - s) / (r + s);
        let even = 1.0 + z * z * (1.0 / 3.0 + z * z * (4.0 / 15.0));
        let odd = z * (2.0 / 3.0 + z * z * (16.0 / 45.0));
        return (0.5 * (even - odd), 0.5 * (even + odd));
    }
    let ell = ((r - s) / s).ln_1p();
    let d1 = (ell - (r - s) / r) / (ell * ell);
    let d2 = ((r - s) / s - ell) / (ell * ell);
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    /// Quadrature oracle: theta(r, s) = integral over p in [0,1] of r^(1-p) s^p,
    /// composite Simpson on the exponential integrand.
    fn theta_quadrature(r: f64, s: f64) -> f64 {
        let c = (s / r).ln();
        let f = |p: f64| r * (c * p).exp();
        let n = 4096;
        let h = 1.0 / n as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    fn partials_finite_difference(r: f64, s: f64) -> (f64, f64) {
        let hr = 1e-5 * r;
        let hs = 1e-5 * s;
        let d1 = (theta_raw(r + hr, s) - theta_raw(r - hr, s)) / (2.0 * hr);
        let d2 = (theta_raw(r, s + hs) - theta_raw(r, s - hs)) / (2.0 * hs);
        (d1, d2)
    }

    #[test]
    fn known_values() {
        assert_eq!(theta(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(theta(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(theta(5.0, 0.0).unwrap(), 0.0);
        assert_eq!(theta(0.0, 0.0).unwrap(), 0.0);
        let t = theta(E, 1.0).unwrap();
        assert!((t - (E - 1.0)).abs() <= 1e-14 * (E - 1.0));
        let t = theta(4.0, 1.0).unwrap();
        let expected = 3.0 / 4.0_f64.ln();
        assert!((t - expected).abs() <= 1e-14 * expected);
    }

    #[test]
    fn partials_at_diagonal_are_half() {
        for &r in &[1e-6, 0.25, 1.0, 3.0, 1e7] {
            let (d1, d2) = theta_partials(r, r).unwrap();
            assert_eq!(d1, 0.5);
            assert_eq!(d2, 0.5);
        }
    }

    #[test]
    fn deficit_known_value() {
        // u d1 + v d2 at (1,1) is (u + v)/2; theta(1,4) = 3/ln 4.
        let d = deficit(1.0, 1.0, 1.0, 4.0).unwrap();
        let expected = 2.5 - 3.0 / 4.0_f64.ln();
        assert!((d - expected).abs() <= 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            theta(-1.0, 1.0),
            Err(LogMeanError::OutOfDomain { .. })
        ));
        assert!(matches!(
            theta(f64::NAN, 1.0),
            Err(LogMeanError::OutOfDomain { .. })
        ));
        assert!(matches!(
            theta(f64::INFINITY, 1.0),
            Err(LogMeanError::OutOfDomain { .. })
        ));
        assert!(matches!(
            theta_partials(0.0, 1.0),
            Err(LogMeanError::BoundaryPartials { .. })
        ));
        assert!(matches!(
            theta_partials(1.0, 0.0),
            Err(LogMeanError::BoundaryPartials { .. })
        ));
        assert!(matches!(
            deficit(0.0, 1.0, 1.0, 1.0),
            Err(LogMeanError::BoundaryPartials { .. })
        ));
        // Boundary values of u, v are fine for the deficit.
        assert!(deficit(1.0, 1.0, 0.0, 0.0).unwrap() >= 0.0);
    }

    #[test]
    fn matches_quadrature_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x1090_43a1);
        for _ in 0..500 {
            let r = 10f64.powf(rng.gen_range(-2.0..2.0));
            let s = 10f64.powf(rng.gen_range(-2.0..2.0));
            let got = theta(r, s).unwrap();
            let want = theta_quadrature(r, s);
            assert!(
                (got - want).abs() <= 1e-10 * want,
                "theta({r}, {s}) = {got}, quadrature {want}"
            );
        }
    }

    #[test]
    fn matches_finite_difference_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7be2_11cd);
        for _ in 0..500 {
            let r = 10f64.powf(rng.gen_range(-2.0..2.0));
            let s = 10f64.powf(rng.gen_range(-2.0..2.0));
            let (d1, d2) = theta_partials(r, s).unwrap();
            let (f1, f2) = partials_finite_difference(r, s);
            assert!((d1 - f1).abs() <= 1e-6 * d1.abs().max(1e-3), "d1({r},{s})");
            assert!((d2 - f2).abs() <= 1e-6 * d2.abs().max(1e-3), "d2({r},{s})");
        }
    }

    /// The closed form and the series must agree across the switch threshold.
    #[test]
    fn series_consistent_with_closed_form_at_threshold() {
        for &scale in &[1e-6, 1.0, 1e6] {
            for &mult in &[0.9, 1.0, 1.1, 2.0, 5.0] {
                let r = scale * (1.0 + mult * 1e-3);
                let s = scale;
                let t = theta_raw(r, s);
                let direct = (r - s) / ((r - s) / s).ln_1p();
                assert!((t - direct).abs() <= 1e-12 * t, "theta at mult {mult}");
                let (d1, d2) = theta_partials_raw(r, s);
                let ell = ((r - s) / s).ln_1p();
                let c1 = (ell - (r - s) / r) / (ell * ell);
                let c2 = ((r - s) / s - ell) / (ell * ell);
                assert!((d1 - c1).abs() <= 1e-9 * d1, "d1 at mult {mult}");
                assert!((d2 - c2).abs() <= 1e-9 * d2, "d2 at mult {mult}");
            }
        }
    }

    /// Bulk invariant sweep: mean bounds, Euler identity, deficit sign.
    #[test]
    fn invariants_hold_on_random_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
        for i in 0..100_000 {
            // Mix broad log-uniform pairs with near-diagonal pairs so the
            // series branch sees heavy traffic too.
            let r = 10f64.powf(rng.gen_range(-8.0..8.0));
            let s = if i % 3 == 0 {
                r * (1.0 + rng.gen_range(-1e-2..1e-2))
            } else {
                10f64.powf(rng.gen_range(-8.0..8.0))
            };
            let t = theta_raw(r, s);
            let geo = (r * s).sqrt();
            let ari = 0.5 * (r + s);
            assert!(t >= geo * (1.0 - 1e-12), "geometric bound at ({r}, {s})");
            assert!(t <= ari * (1.0 + 1e-12), "arithmetic bound at ({r}, {s})");
            assert!(t >= r.min(s) * (1.0 - 1e-12) && t <= r.max(s) * (1.0 + 1e-12));
            let (d1, d2) = theta_partials_raw(r, s);
            assert!(d1 > 0.0 && d2 > 0.0, "positivity at ({r}, {s})");
            let residual = (r * d1 + s * d2 - t).abs();
            assert!(residual <= 1e-11 * t, "Euler identity at ({r}, {s}): {residual:e}");
        }
    }

    #[test]
    fn deficit_nonnegative_on_random_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
        for _ in 0..100_000 {
            let s = 10f64.powf(rng.gen_range(-4.0..4.0));
            let t = 10f64.powf(rng.gen_range(-4.0..4.0));
            let u = 10f64.powf(rng.gen_range(-4.0..4.0));
            let v = 10f64.powf(rng.gen_range(-4.0..4.0));
            let d = deficit(s, t, u, v).unwrap();
            let scale = theta_raw(s, t).max(theta_raw(u, v)).max(1.0);
            assert!(d >= -1e-12 * scale, "deficit({s},{t},{u},{v}) = {d:e}");
        }
    }

    proptest! {
        #[test]
        fn symmetric(r in 1e-8f64..1e8, s in 1e-8f64..1e8) {
            let a = theta_raw(r, s);
            let b = theta_raw(s, r);
            prop_assert!((a - b).abs() <= 1e-13 * a.max(b));
        }

        #[test]
        fn homogeneous(r in 1e-4f64..1e4, s in 1e-4f64..1e4, lam in 1e-4f64..1e4) {
            let scaled = theta_raw(lam * r, lam * s);
            let direct = lam * theta_raw(r, s);
            prop_assert!((scaled - direct).abs() <= 1e-12 * direct.abs());
        }

        #[test]
        fn monotone_in_each_argument(r in 1e-4f64..1e4, s in 1e-4f64..1e4, bump in 1.0001f64..2.0) {
            prop_assert!(theta_raw(r * bump, s) > theta_raw(r, s));
            prop_assert!(theta_raw(r, s * bump) > theta_raw(r, s));
        }

        #[test]
        fn partials_swap_under_symmetry(r in 1e-4f64..1e4, s in 1e-4f64..1e4) {
            let (d1, d2) = theta_partials_raw(r, s);
            let (e1, e2) = theta_partials_raw(s, r);
            prop_assert!((d1 - e2).abs() <= 1e-12 * d1.max(e2));
            prop_assert!((d2 - e1).abs() <= 1e-12 * d2.max(e1));
        }
    }
}
