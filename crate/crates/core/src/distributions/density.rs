use super::{ln_beta, ln_gamma, psi, BetaParams, GammaParams};
use crate::{Error, Result};

pub fn log_density_beta(x: f64, p: BetaParams) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("Beta density at {x} is outside (0, 1)")));
    }
    Ok((p.first - 1.0) * x.ln() + (p.second - 1.0) * (1.0 - x).ln() - ln_beta(p.first, p.second))
}

pub fn log_density_gamma(x: f64, p: GammaParams) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("Gamma density at {x} is outside (0, inf)")));
    }
    Ok(p.shape * p.rate.ln() - ln_gamma(p.shape) + (p.shape - 1.0) * x.ln() - p.rate * x)
}

pub fn log_density_dirichlet(point: &[f64], params: &[f64]) -> Result<f64> {
    if point.len() != params.len() || params.is_empty() {
        return Err(Error::InvalidParams(format!(
            "Dirichlet point has {} entries for {} parameters",
            point.len(),
            params.len()
        )));
    }
    if params.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::InvalidParams(format!("Dirichlet parameters must be positive: {params:?}")));
    }
    let total: f64 = point.iter().sum();
    if point.iter().any(|x| !(*x > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("{point:?} is not in the open simplex")));
    }
    let norm = ln_gamma(params.iter().sum()) - params.iter().map(|a| ln_gamma(*a)).sum::<f64>();
    Ok(norm + point.iter().zip(params).map(|(x, a)| (a - 1.0) * x.ln()).sum::<f64>())
}

/// `(E[ln x], E[ln(1 - x)])` for `x ~ Beta(p)`.
pub fn beta_expected_ln(p: BetaParams) -> (f64, f64) {
    let total = psi(p.first + p.second);
    (psi(p.first) - total, psi(p.second) - total)
}

/// `(E[x], E[ln x])` for `x ~ Gamma(p)`.
pub fn gamma_expected_ln(p: GammaParams) -> (f64, f64) {
    (p.shape / p.rate, psi(p.shape) - p.rate.ln())
}

/// `E[ln pi_a]` for `pi ~ Dirichlet(params)`.
pub fn dirichlet_expected_ln(params: &[f64]) -> Vec<f64> {
    let total = psi(params.iter().sum());
    params.iter().map(|a| psi(*a) - total).collect()
}

/// `E_q[ln p(x)]` with `x ~ q = Beta(q)` and `p = Beta(prior)`. With `q = prior`
/// this is the negative entropy.
pub fn expected_ln_density_beta(q: BetaParams, prior: BetaParams) -> f64 {
    let (ln_x, ln_1mx) = beta_expected_ln(q);
    (prior.first - 1.0) * ln_x + (prior.second - 1.0) * ln_1mx - ln_beta(prior.first, prior.second)
}

/// `E_q[ln p(x)]` with `x ~ q = Gamma(q)` and `p = Gamma(prior)`.
pub fn expected_ln_density_gamma(q: GammaParams, prior: GammaParams) -> f64 {
    let (mean, ln_mean) = gamma_expected_ln(q);
    prior.shape * prior.rate.ln() - ln_gamma(prior.shape) + (prior.shape - 1.0) * ln_mean - prior.rate * mean
}

/// `E_q[ln p(x)]` with `x ~ Dirichlet(q)` and `p = Dirichlet(prior)`.
pub fn expected_ln_density_dirichlet(q: &[f64], prior: &[f64]) -> f64 {
    let ln_pi = dirichlet_expected_ln(q);
    let norm = ln_gamma(prior.iter().sum()) - prior.iter().map(|a| ln_gamma(*a)).sum::<f64>();
    norm + ln_pi.iter().zip(prior).map(|(l, a)| (a - 1.0) * l).sum::<f64>()
}
