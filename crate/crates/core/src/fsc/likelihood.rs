//! Node-path marginalization over an agent's history.
//!
//! A history is a list of action indices `a_0..a_t` and observation bins
//! where `obs[tau - 1]` is the observation `o_tau` received after `a_{tau-1}`.
//! The forward message is
//!
//! ```text
//! alpha_0(i)   = eta(i) pi(i, a_0)
//! alpha_tau(j) = sum_i alpha_{tau-1}(i) omega(i, a_{tau-1}, o_tau, j) pi(j, a_tau)
//! ```
//!
//! and the backward message for a history ending at `t` is
//!
//! ```text
//! beta_t(i)   = 1
//! beta_tau(i) = sum_j omega(i, a_tau, o_{tau+1}, j) pi(j, a_{tau+1}) beta_{tau+1}(j)
//! ```

use super::FscTables;
use crate::{Error, Result};

/// Forward messages normalized per step, with the log normalizers.
///
/// `log_scale[tau] = ln p(a_tau | a_{0:tau-1}, o_{1:tau})` for proper policies.
#[derive(Debug, Clone)]
pub struct Forward {
    pub alpha: Vec<Vec<f64>>,
    pub log_scale: Vec<f64>,
}

impl Forward {
    /// `ln p(a_{0:t} | o_{1:t})` for every prefix end `t`.
    pub fn prefix_log_likelihoods(&self) -> Vec<f64> {
        self.log_scale
            .iter()
            .scan(0.0, |acc, l| {
                *acc += l;
                Some(*acc)
            })
            .collect()
    }
}

/// Singleton and pairwise node posteriors for one history.
#[derive(Debug, Clone)]
pub struct NodeMarginals {
    /// `singleton[tau][i] = p(z_tau = i | a, o)`.
    pub singleton: Vec<Vec<f64>>,
    /// `pairwise[tau - 1][i * Z + j] = p(z_{tau-1} = i, z_tau = j | a, o)` for `tau >= 1`.
    pub pairwise: Vec<Vec<f64>>,
}

#[inline]
fn step(t: &FscTables, prev: &[f64], a_prev: usize, o: usize, a: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, &p) in prev.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let row = t.omega_row(i, a_prev, o);
        for (j, w) in row.iter().enumerate() {
            out[j] += p * w;
        }
    }
    for (j, v) in out.iter_mut().enumerate() {
        *v *= t.pi(j, a);
    }
}

/// Unscaled forward messages `alpha_0..alpha_t`. Underflows on long histories;
/// use [`forward_scaled`] there.
pub fn forward_messages(t: &FscTables, actions: &[usize], obs: &[usize]) -> Result<Vec<Vec<f64>>> {
    t.check_history(actions, obs)?;
    let mut alpha = vec![(0..t.nodes).map(|i| t.eta[i] * t.pi(i, actions[0])).collect::<Vec<_>>()];
    for tau in 1..actions.len() {
        let mut next = vec![0.0; t.nodes];
        step(t, &alpha[tau - 1], actions[tau - 1], obs[tau - 1], actions[tau], &mut next);
        alpha.push(next);
    }
    Ok(alpha)
}

/// Unscaled backward messages `beta_0..beta_end` for the prefix ending at `end`.
pub fn backward_messages(t: &FscTables, actions: &[usize], obs: &[usize], end: usize) -> Result<Vec<Vec<f64>>> {
    t.check_history(actions, obs)?;
    if end >= actions.len() {
        return Err(Error::Data(format!("prefix end {end} beyond {} actions", actions.len())));
    }
    let mut beta = vec![vec![1.0; t.nodes]; end + 1];
    for tau in (0..end).rev() {
        for i in 0..t.nodes {
            let row = t.omega_row(i, actions[tau], obs[tau]);
            beta[tau][i] = (0..t.nodes).map(|j| row[j] * t.pi(j, actions[tau + 1]) * beta[tau + 1][j]).sum();
        }
    }
    Ok(beta)
}

/// Forward pass with per-step normalization.
pub fn forward_scaled(t: &FscTables, actions: &[usize], obs: &[usize]) -> Result<Forward> {
    t.check_history(actions, obs)?;
    let z = t.nodes;
    let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(actions.len());
    let mut log_scale = Vec::with_capacity(actions.len());
    let mut cur: Vec<f64> = (0..z).map(|i| t.eta[i] * t.pi(i, actions[0])).collect();
    for tau in 0..actions.len() {
        if tau > 0 {
            let mut next = vec![0.0; z];
            step(t, &alpha[tau - 1], actions[tau - 1], obs[tau - 1], actions[tau], &mut next);
            cur = next;
        }
        let c: f64 = cur.iter().sum();
        if c > 0.0 {
            cur.iter_mut().for_each(|v| *v /= c);
        }
        log_scale.push(c.ln());
        alpha.push(std::mem::take(&mut cur));
    }
    Ok(Forward { alpha, log_scale })
}

/// Backward messages for the prefix ending at `end`, scaled by the forward
/// normalizers so that `alpha[tau] * beta[tau]` sums to one.
pub fn backward_scaled(t: &FscTables, actions: &[usize], obs: &[usize], fwd: &Forward, end: usize) -> Vec<Vec<f64>> {
    let z = t.nodes;
    let mut beta = vec![vec![1.0; z]; end + 1];
    for tau in (0..end).rev() {
        let scale = fwd.log_scale[tau + 1].exp();
        let weighted: Vec<f64> = (0..z).map(|j| t.pi(j, actions[tau + 1]) * beta[tau + 1][j] / scale).collect();
        for i in 0..z {
            let row = t.omega_row(i, actions[tau], obs[tau]);
            beta[tau][i] = row.iter().zip(&weighted).map(|(w, b)| w * b).sum();
        }
    }
    beta
}

/// Posterior node marginals from matching forward and backward messages
/// (scaled or unscaled; each marginal is normalized on its own).
pub fn node_marginals(
    t: &FscTables,
    alpha: &[Vec<f64>],
    beta: &[Vec<f64>],
    actions: &[usize],
    obs: &[usize],
) -> NodeMarginals {
    let z = t.nodes;
    let len = beta.len();
    let singleton = (0..len)
        .map(|tau| {
            let raw: Vec<f64> = alpha[tau].iter().zip(&beta[tau]).map(|(a, b)| a * b).collect();
            normalized(raw)
        })
        .collect();
    let pairwise = (1..len)
        .map(|tau| {
            let mut raw = vec![0.0; z * z];
            for i in 0..z {
                let ai = alpha[tau - 1][i];
                if ai == 0.0 {
                    continue;
                }
                let row = t.omega_row(i, actions[tau - 1], obs[tau - 1]);
                for j in 0..z {
                    raw[i * z + j] = ai * row[j] * t.pi(j, actions[tau]) * beta[tau][j];
                }
            }
            normalized(raw)
        })
        .collect();
    NodeMarginals { singleton, pairwise }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter_mut().for_each(|x| *x /= total);
    }
    v
}

/// `p(a_{0:t} | o_{1:t})`: sum of the final unscaled forward message.
pub fn history_likelihood(t: &FscTables, actions: &[usize], obs: &[usize]) -> Result<f64> {
    Ok(forward_messages(t, actions, obs)?.last().map_or(0.0, |a| a.iter().sum()))
}

/// Stepwise conditionals `p(a_tau | a_{0:tau-1}, o_{1:tau})` by belief filtering
/// over nodes. For proper policies their product is [`history_likelihood`].
pub fn action_conditionals(t: &FscTables, actions: &[usize], obs: &[usize]) -> Result<Vec<f64>> {
    t.check_history(actions, obs)?;
    let z = t.nodes;
    let eta_total: f64 = t.eta.iter().sum();
    let mut belief: Vec<f64> = t.eta.iter().map(|e| e / eta_total).collect();
    let mut out = Vec::with_capacity(actions.len());
    for (tau, &a) in actions.iter().enumerate() {
        let p: f64 = (0..z).map(|i| belief[i] * t.pi(i, a)).sum();
        out.push(p);
        if tau + 1 == actions.len() || p == 0.0 {
            continue;
        }
        let mut next = vec![0.0; z];
        for i in 0..z {
            // posterior over the node that emitted a_tau
            let post = belief[i] * t.pi(i, a) / p;
            for (j, w) in t.omega_row(i, a, obs[tau]).iter().enumerate() {
                next[j] += post * w;
            }
        }
        belief = next;
    }
    Ok(out)
}
