//! Digamma and log-gamma, checked wrappers over `statrs`.

use crate::{Error, Result};

/// Digamma function `psi(x) = d/dx ln Gamma(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires a finite x > 0, got {x}")));
    }
    Ok(psi(x))
}

/// Unchecked digamma for hot loops where the argument is positive by construction.
#[inline]
pub(crate) fn psi(x: f64) -> f64 {
    debug_assert!(x > 0.0, "psi({x})");
    statrs::function::gamma::digamma(x)
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma({x})");
    statrs::function::gamma::ln_gamma(x)
}

/// `ln B(a, b) = ln Gamma(a) + ln Gamma(b) - ln Gamma(a + b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Numerically stable `ln(sum(exp(xs)))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
