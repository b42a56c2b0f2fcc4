//! Evidence lower bound.
//!
//! `ELBO = E_q[ln r^/K + ln p(a, z | Theta)] + H[q(k, t, z)] + sum_n E_q[ln p(Theta_n, rho_n, alpha_n) - ln q(...)]`.
//! The first two terms come from [`EStep::data_term`]; [`prior_terms`] is the rest.

use super::{EStep, Hyperparams, VariationalState};
use crate::distributions::{
    beta_expected_ln, expected_ln_density_beta, expected_ln_density_dirichlet, expected_ln_density_gamma,
    gamma_expected_ln, BetaParams, GammaParams,
};
use crate::fsc::FscTables;
use crate::{Error, Result};

/// `E_q[ln p(x | 1, s)] - E_q[ln q(x)]` for a `Beta(1, s)` prior whose `s`
/// is itself Gamma distributed with mean `s_mean` and log-mean `s_ln`.
fn stick_term(q: BetaParams, s_mean: f64, s_ln: f64) -> f64 {
    let (_, ln_1mx) = beta_expected_ln(q);
    // ln Beta(x; 1, s) = ln s + (s - 1) ln(1 - x)
    s_ln + (s_mean - 1.0) * ln_1mx - expected_ln_density_beta(q, q)
}

fn gamma_term(q: GammaParams, prior: GammaParams) -> f64 {
    expected_ln_density_gamma(q, prior) - expected_ln_density_gamma(q, q)
}

/// Prior-minus-entropy contribution of one agent's factors.
pub fn prior_terms(state: &VariationalState, hyper: &Hyperparams) -> Result<f64> {
    let z = state.nodes;
    let theta = hyper.theta_for(state.actions)?;
    let rho = GammaParams { shape: state.g, rate: state.h };
    let (rho_mean, rho_ln) = gamma_expected_ln(rho);
    let mut total = gamma_term(rho, GammaParams { shape: hyper.e, rate: hyper.f });
    for i in 0..z {
        total += stick_term(BetaParams { first: state.delta[i], second: state.mu[i] }, rho_mean, rho_ln);
    }
    for row in state.phi.chunks(state.actions) {
        total += expected_ln_density_dirichlet(row, &theta) - expected_ln_density_dirichlet(row, row);
    }
    let alpha_prior = GammaParams { shape: hyper.c, rate: hyper.d };
    for (row, (sig, lam)) in state.sigma.chunks(z).zip(state.lambda.chunks(z)).enumerate() {
        let alpha = GammaParams { shape: state.a[row], rate: state.b[row] };
        let (a_mean, a_ln) = gamma_expected_ln(alpha);
        total += gamma_term(alpha, alpha_prior);
        for (s, l) in sig.iter().zip(lam) {
            total += stick_term(BetaParams { first: *s, second: *l }, a_mean, a_ln);
        }
    }
    Ok(total)
}

/// ELBO of `states` with the node posterior from `estep` and `E ln Theta = ln tables`.
pub fn elbo(states: &[VariationalState], hyper: &Hyperparams, estep: &EStep, tables: &[FscTables]) -> Result<f64> {
    let mut total = estep.data_term(tables);
    for s in states {
        total += prior_terms(s, hyper)?;
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("ELBO evaluated to {total}")));
    }
    Ok(total)
}
