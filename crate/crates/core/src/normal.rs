//! Standard normal helpers that stay finite deep in the lower tail.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Below this argument the cdf ratio is taken through `erfcx`.
const TAIL_SWITCH: f64 = -5.0;

pub fn pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

pub fn cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// `ln Φ(t)`, accurate for large negative `t` where `Φ` underflows.
pub fn ln_cdf(t: f64) -> f64 {
    if t > 0.0 {
        (-0.5 * erfc(t / SQRT_2)).ln_1p()
    } else if t > TAIL_SWITCH {
        cdf(t).ln()
    } else {
        (0.5 * erfcx(-t / SQRT_2)).ln() - 0.5 * t * t
    }
}

/// Inverse Mills ratio `φ(t) / Φ(t)`.
pub fn inv_mills(t: f64) -> f64 {
    if t > TAIL_SWITCH {
        pdf(t) / cdf(t)
    } else {
        (2.0 / PI).sqrt() / erfcx(-t / SQRT_2)
    }
}

/// `Φ⁻¹(p)` for `p` in (0, 1).
pub fn quantile(p: f64) -> f64 {
    let guess = -SQRT_2 * erfc_inv(2.0 * p);
    if !guess.is_finite() {
        return guess;
    }
    // One Newton step against the full-precision cdf.
    guess - (cdf(guess) - p) / pdf(guess)
}

/// Scaled complementary error function `exp(x²)·erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    if x < 4.0 {
        return (x * x).exp() * erfc(x);
    }
    // Continued fraction erfc(x) = exp(-x²)/√π · 1/(x + ½/(x + 1/(x + 3/2/(x + …)))),
    // evaluated bottom-up.
    let mut tail = x;
    for k in (1..=160).rev() {
        tail = x + 0.5 * k as f64 / tail;
    }
    FRAC_2_SQRT_PI * 0.5 / tail
}
