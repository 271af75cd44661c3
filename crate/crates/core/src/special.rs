//! Log-gamma and polygamma functions for positive real arguments.
//!
//! Both use upward recurrence into the asymptotic regime (x >= 20 for the
//! polygammas, x >= 10 for log-gamma) followed by a Stirling-type series with
//! Bernoulli-number coefficients.

use std::f64::consts::PI;

/// Even-index Bernoulli numbers B_2, B_4, ..., B_16.
const BERNOULLI_EVEN: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

const LGAMMA_SHIFT: f64 = 10.0;
const POLYGAMMA_SHIFT: f64 = 20.0;

/// Natural log of the gamma function for `x > 0`. Returns NaN otherwise.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return if x == f64::INFINITY { f64::INFINITY } else { f64::NAN };
    }
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < LGAMMA_SHIFT {
        product *= shifted;
        shifted += 1.0;
    }
    let correction = if product == 1.0 { 0.0 } else { product.ln() };
    stirling_ln_gamma(shifted) - correction
}

fn stirling_ln_gamma(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut power = inv;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let two_k = 2.0 * (k as f64 + 1.0);
        series += b / (two_k * (two_k - 1.0)) * power;
        power *= inv2;
    }
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series
}

/// Polygamma function of order `n`: `n = 0` is the digamma function,
/// `n = 1` the trigamma function, and so on. Defined for `x > 0`.
pub fn polygamma(n: u32, x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NAN;
    }
    let n_fact = factorial(n);
    // psi^(n)(x) = psi^(n)(x + 1) - (-1)^n n! / x^(n+1)
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    let mut shifted = x;
    let mut recur = 0.0;
    while shifted < POLYGAMMA_SHIFT {
        recur += 1.0 / shifted.powi(n as i32 + 1);
        shifted += 1.0;
    }
    let tail = sign * n_fact * recur;

    let inv = 1.0 / shifted;
    let asymptotic = if n == 0 {
        let inv2 = inv * inv;
        let mut s = shifted.ln() - 0.5 * inv;
        let mut power = inv2;
        for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
            let two_k = 2.0 * (k as f64 + 1.0);
            s -= b / two_k * power;
            power *= inv2;
        }
        s
    } else {
        // (-1)^(n+1) [ (n-1)!/x^n + n!/(2 x^(n+1)) + sum B_2k (2k+n-1)!/((2k)! x^(2k+n)) ]
        let mut s = factorial(n - 1) * inv.powi(n as i32) + 0.5 * n_fact * inv.powi(n as i32 + 1);
        for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
            let two_k = 2 * (k as u32 + 1);
            let coeff = rising_ratio(two_k, n);
            s += b * coeff * inv.powi((two_k + n) as i32);
        }
        let outer = if n % 2 == 1 { 1.0 } else { -1.0 };
        outer * s
    };
    asymptotic - tail
}

/// Digamma function.
pub fn digamma(x: f64) -> f64 {
    polygamma(0, x)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// (2k + n - 1)! / (2k)!
fn rising_ratio(two_k: u32, n: u32) -> f64 {
    ((two_k + 1)..(two_k + n)).fold(1.0, |acc, k| acc * k as f64)
}
