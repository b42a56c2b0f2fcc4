//! Closed-form coordinate updates.
//!
//! ```text
//! phi_ia        = theta_a + N_pi(i, a)
//! sigma_iaoj    = 1 + N_omega(i, a, o, j)
//! lambda_iaoj   = a_iao / b_iao + sum_{j' > j} N_omega(i, a, o, j')
//! delta_i       = 1 + N_0(i)
//! mu_i          = g / h + sum_{m > i} N_0(m)
//! a_iao         = c + |Z|
//! b_iao         = d - sum_j [psi(lambda_iaoj) - psi(sigma_iaoj + lambda_iaoj)]
//! g             = e + |Z|
//! h             = f - sum_i [psi(mu_i) - psi(delta_i + mu_i)]
//! ```

use log::warn;

use super::{Hyperparams, Statistics, VariationalState};
use crate::distributions::psi;
use crate::Result;

/// Gamma rates are kept at or above this value.
pub const RATE_FLOOR: f64 = 1e-6;

fn floor_rate(name: &str, v: f64) -> f64 {
    if v < RATE_FLOOR {
        warn!("{name} = {v} clamped to {RATE_FLOOR}");
        RATE_FLOOR
    } else {
        v
    }
}

/// `q(pi)`.
pub fn update_q_pi(state: &mut VariationalState, stats: &Statistics, hyper: &Hyperparams) -> Result<()> {
    let theta = hyper.theta_for(state.actions)?;
    for (k, (phi, n)) in state.phi.iter_mut().zip(&stats.n_pi).enumerate() {
        *phi = theta[k % state.actions] + n;
    }
    Ok(())
}

/// `q(V)`: omega stick portions. Uses the current `q(alpha)`.
pub fn update_q_v(state: &mut VariationalState, stats: &Statistics) {
    let z = state.nodes;
    for (row, ((sig, lam), n)) in state
        .sigma
        .chunks_mut(z)
        .zip(state.lambda.chunks_mut(z))
        .zip(stats.n_omega.chunks(z))
        .enumerate()
    {
        let alpha_mean = state.a[row] / state.b[row];
        let mut tail = 0.0;
        for j in (0..z).rev() {
            sig[j] = 1.0 + n[j];
            lam[j] = alpha_mean + tail;
            tail += n[j];
        }
    }
}

/// `q(u)`: eta stick portions. Uses the current `q(rho)`.
pub fn update_q_u(state: &mut VariationalState, stats: &Statistics) {
    let rho_mean = state.g / state.h;
    let mut tail = 0.0;
    for i in (0..state.nodes).rev() {
        state.delta[i] = 1.0 + stats.n0[i];
        state.mu[i] = rho_mean + tail;
        tail += stats.n0[i];
    }
}

/// `q(alpha)` for every `(i, a, o)` stick family.
pub fn update_q_alpha(state: &mut VariationalState, hyper: &Hyperparams) {
    let z = state.nodes;
    let shape = hyper.c + z as f64;
    for (row, (sig, lam)) in state.sigma.chunks(z).zip(state.lambda.chunks(z)).enumerate() {
        let s: f64 = sig.iter().zip(lam).map(|(s, l)| psi(*l) - psi(s + l)).sum();
        state.a[row] = shape;
        state.b[row] = floor_rate("b", hyper.d - s);
    }
}

/// `q(rho)`.
pub fn update_q_rho(state: &mut VariationalState, hyper: &Hyperparams) {
    let s: f64 = state.delta.iter().zip(&state.mu).map(|(d, m)| psi(*m) - psi(d + m)).sum();
    state.g = hyper.e + state.nodes as f64;
    state.h = floor_rate("h", hyper.f - s);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(state: &mut VariationalState, stats: &Statistics, hyper: &Hyperparams) {
        update_q_pi(state, stats, hyper).unwrap();
        update_q_v(state, stats);
        update_q_u(state, stats);
        update_q_alpha(state, hyper);
        update_q_rho(state, hyper);
    }

    #[test]
    fn no_data_recovers_prior_terms() {
        let hyper = Hyperparams::default();
        let mut s = VariationalState::prior(3, 2, 2, &hyper);
        let stats = Statistics::zeros(3, 2, 2);
        sweep(&mut s, &stats, &hyper);
        assert!(s.delta.iter().all(|d| *d == 1.0));
        assert!(s.sigma.iter().all(|v| *v == 1.0));
        assert!(s.phi.iter().all(|p| *p == 1.0));
        assert_eq!(s.g, 3.1);
        assert!(s.a.iter().all(|a| *a == 3.1));
    }

    #[test]
    fn hand_evaluated_tails() {
        let hyper = Hyperparams { theta: vec![0.5, 2.0], ..Hyperparams::default() };
        let mut s = VariationalState::prior(3, 2, 1, &hyper);
        let mut stats = Statistics::zeros(3, 2, 1);
        stats.n0 = vec![0.6, 0.3, 0.1];
        stats.n_pi[2] = 1.5; // node 1, action 0
        // row (i=0, a=1, o=0) destinations
        let row = 1;
        stats.n_omega[row * 3..row * 3 + 3].copy_from_slice(&[0.2, 0.5, 0.3]);
        let (g, h) = (s.g, s.h);
        let alpha_mean = s.a[row] / s.b[row];
        sweep(&mut s, &stats, &hyper);
        assert_eq!(s.delta, vec![1.6, 1.3, 1.1]);
        assert!((s.mu[0] - (g / h + 0.4)).abs() < 1e-15);
        assert!((s.mu[1] - (g / h + 0.1)).abs() < 1e-15);
        assert_eq!(s.mu[2], g / h);
        assert_eq!(s.phi, vec![0.5, 2.0, 2.0, 2.0, 0.5, 2.0]);
        assert_eq!(&s.sigma[3..6], &[1.2, 1.5, 1.3]);
        assert!((s.lambda[3] - (alpha_mean + 0.8)).abs() < 1e-15);
        assert!((s.lambda[4] - (alpha_mean + 0.3)).abs() < 1e-15);
        assert_eq!(s.lambda[5], alpha_mean);
        let want_h = hyper.f - (0..3).map(|i| psi(s.mu[i]) - psi(s.delta[i] + s.mu[i])).sum::<f64>();
        assert_eq!(s.h, want_h);
        assert_eq!(s.g, hyper.e + 3.0);
    }

    #[test]
    fn rates_stay_positive() {
        let hyper = Hyperparams { d: 1e-9, f: 1e-9, ..Hyperparams::default() };
        let mut s = VariationalState::prior(2, 1, 1, &hyper);
        let mut stats = Statistics::zeros(2, 1, 1);
        stats.n0 = vec![50.0, 50.0];
        stats.n_omega = vec![10.0, 10.0, 10.0, 10.0];
        sweep(&mut s, &stats, &hyper);
        s.validate().unwrap();
        assert!(s.h > 0.0 && s.b.iter().all(|b| *b > 0.0));
    }
}
