use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{log_sum_exp, BetaParams, GammaParams, SimplexVector};
use crate::{Error, Result};

/// Log of a Gamma(shape, 1) variate.
///
/// Shapes below one draw from `shape + 1` and scale by `U^(1/shape)` in log
/// space, so tiny shapes (0.1 and below) cannot underflow to an exact zero.
fn ln_standard_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        return ln_standard_gamma(shape + 1.0, rng) + u.ln() / shape;
    }
    let g = Gamma::new(shape, 1.0).expect("shape checked positive by the caller");
    g.sample(rng).ln()
}

pub fn sample_gamma<R: Rng + ?Sized>(p: GammaParams, rng: &mut R) -> f64 {
    let x = (ln_standard_gamma(p.shape, rng) - p.rate.ln()).exp();
    x.clamp(f64::MIN_POSITIVE, f64::MAX)
}

/// Beta variate, strictly inside `(0, 1)`.
pub fn sample_beta<R: Rng + ?Sized>(p: BetaParams, rng: &mut R) -> f64 {
    let lx = ln_standard_gamma(p.first, rng);
    let ly = ln_standard_gamma(p.second, rng);
    // x / (x + y) = 1 / (1 + exp(ly - lx))
    let v = 1.0 / (1.0 + (ly - lx).exp());
    v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

pub fn sample_dirichlet<R: Rng + ?Sized>(params: &[f64], rng: &mut R) -> Result<SimplexVector> {
    if params.is_empty() {
        return Err(Error::InvalidParams("Dirichlet needs at least one parameter".into()));
    }
    if let Some(p) = params.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidParams(format!("Dirichlet parameter {p} must be positive")));
    }
    if params.len() == 1 {
        return Ok(SimplexVector::point(1, 0));
    }
    let logs: Vec<f64> = params.iter().map(|&a| ln_standard_gamma(a, rng)).collect();
    let norm = log_sum_exp(&logs);
    SimplexVector::from_masses(&logs.iter().map(|l| (l - norm).exp()).collect::<Vec<_>>())
}
