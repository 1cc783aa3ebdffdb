//! Error function and its inverse.

use std::f64::consts::{FRAC_2_SQRT_PI, PI};

use crate::error::{domain_err, Result};

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below this magnitude the power series is used, above it the continued fraction.
const SERIES_LIMIT: f64 = 2.5;

/// Beyond this magnitude `erf` is ±1 to double precision.
const SATURATION: f64 = 6.0;

/// Error function, absolute error below 1e-15 on the real line.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let value = if ax < SERIES_LIMIT {
        erf_series(ax)
    } else if ax < SATURATION {
        1.0 - erfc_continued_fraction(ax)
    } else {
        1.0
    };
    value.copysign(x)
}

/// Complementary error function `1 − erf(x)`, accurate in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= SERIES_LIMIT {
        if x > 27.0 {
            0.0
        } else {
            erfc_continued_fraction(x)
        }
    } else {
        1.0 - erf(x)
    }
}

// erf(x) = 2/√π · e^{-x²} · Σ (2x²)ⁿ x / (1·3·…·(2n+1)); all terms positive.
fn erf_series(x: f64) -> f64 {
    let two_x2 = 2.0 * x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    while term > sum * 1e-17 {
        n += 1.0;
        term *= two_x2 / (2.0 * n + 1.0);
        sum += term;
    }
    FRAC_2_SQRT_PI * (-x * x).exp() * sum
}

// erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))), modified Lentz.
fn erfc_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..500 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    FRAC_1_SQRT_PI * (-x * x).exp() / f
}

/// Inverse error function on the open interval (−1, 1).
///
/// A closed-form estimate is polished with Halley steps on [`erf`]; `|y| ≥ 1`
/// is a domain error since `erf⁻¹(±1) = ±∞`.
pub fn erf_inv(y: f64) -> Result<f64> {
    if y.is_nan() || y.abs() >= 1.0 {
        return domain_err(format!("erf_inv requires -1 < y < 1, got {y}"));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let target = y.abs();
    let mut x = initial_estimate(target);
    for _ in 0..8 {
        let residual = if x >= SERIES_LIMIT { (1.0 - target) - erfc(x) } else { erf(x) - target };
        let slope = FRAC_2_SQRT_PI * (-x * x).exp();
        if slope == 0.0 {
            break;
        }
        let ratio = residual / slope;
        let step = ratio / (1.0 + x * ratio);
        x -= step;
        if step.abs() <= 1e-16 * x.abs() {
            break;
        }
    }
    Ok(x.copysign(y))
}

// Winitzki's approximation, relative error around 2e-3.
fn initial_estimate(y: f64) -> f64 {
    const A: f64 = 0.147;
    let ln = (-y).ln_1p() + y.ln_1p();
    let t = 2.0 / (PI * A) + 0.5 * ln;
    ((t * t - ln / A).sqrt() - t).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_is_odd_and_bounded() {
        assert_eq!(erf(0.0), 0.0);
        for i in 0..200 {
            let x = -7.0 + 0.07 * i as f64;
            assert_eq!(erf(-x), -erf(x));
            assert!(erf(x).abs() <= 1.0);
        }
        assert_eq!(erf(40.0), 1.0);
        assert!(erf(f64::NAN).is_nan());
    }

    #[test]
    fn erf_is_continuous_at_branch_switch() {
        let below = erf(SERIES_LIMIT - 1e-12);
        let above = erf(SERIES_LIMIT);
        assert!((above - below).abs() < 1e-14);
    }

    #[test]
    fn erfc_tail() {
        // erfc(5) = 1.5374597944280349e-12
        assert!((erfc(5.0) / 1.537_459_794_428_035e-12 - 1.0).abs() < 1e-13);
        assert_eq!(erfc(30.0), 0.0);
        assert!((erfc(0.5) - (1.0 - erf(0.5))).abs() < 1e-16);
    }

    #[test]
    fn erf_inv_domain() {
        assert!(erf_inv(1.0).is_err());
        assert!(erf_inv(-1.0).is_err());
        assert!(erf_inv(1.5).is_err());
        assert!(erf_inv(f64::NAN).is_err());
        assert_eq!(erf_inv(0.0).unwrap(), 0.0);
    }

    #[test]
    fn erf_inv_near_the_ends() {
        for y in [0.999_999, 0.999_999_999, 1.0 - 1e-14, -0.999_999_9] {
            let x = erf_inv(y).unwrap();
            assert!((erf(x) - y).abs() <= 1e-15, "y = {y}");
        }
    }
}
