//! Gamma-function helpers valid on the whole real line.

use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

/// sin(πx) with exact zeros at the integers.
pub fn sin_pi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    (PI * r).sin()
}

/// Returns (ln|Γ(x)|, sign Γ(x)). Poles give (+∞, 0).
pub fn ln_gamma_signed(x: f64) -> (f64, f64) {
    if x > 0.0 {
        return (ln_gamma(x), 1.0);
    }
    if x == x.floor() {
        return (f64::INFINITY, 0.0);
    }
    // Γ(x) = π / (sin(πx) Γ(1−x))
    let s = sin_pi(x);
    (PI.ln() - s.abs().ln() - ln_gamma(1.0 - x), s.signum())
}

/// 1/Γ(x), zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if x > 0.0 && x < 170.0 {
        return 1.0 / gamma(x);
    }
    let (lg, sign) = ln_gamma_signed(x);
    if sign == 0.0 {
        0.0
    } else {
        sign * (-lg).exp()
    }
}

/// Binomial coefficient C(n, k) as a float.
pub fn binom(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_gamma_matches_known_values() {
        assert!((rgamma(1.0) - 1.0).abs() < 1e-15);
        assert!((rgamma(0.5) - 1.0 / PI.sqrt()).abs() < 1e-15);
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-3.0), 0.0);
        // Γ(−0.5) = −2√π
        assert!((rgamma(-0.5) + 1.0 / (2.0 * PI.sqrt())).abs() < 1e-14);
        assert!((rgamma(160.0) * statrs::function::gamma::gamma(160.0) - 1.0).abs() < 1e-12);
        let big = rgamma(171.5);
        assert!(big > 0.0 && (big.ln() + ln_gamma(171.5)).abs() < 1e-9);
    }

    #[test]
    fn binomials() {
        assert_eq!(binom(5, 2), 10.0);
        assert_eq!(binom(10, 0), 1.0);
        assert_eq!(binom(3, 5), 0.0);
    }
}
