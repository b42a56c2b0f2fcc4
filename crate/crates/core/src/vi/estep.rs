//! Importance weights, the empirical value and expected node statistics.
//!
//! For episode `k` and epoch `t` the unnormalized log weight is
//!
//! ```text
//! ln w~_kt = t ln gamma + ln(r_kt - R_min) + sum_n [ln p(a_n,0:t | o, Theta~_n) - ln p(a_n,0:t | o, behavior)]
//! ```
//!
//! `V^ = (1/K) sum_kt w~_kt`, `nu~_kt = w~_kt / V^`, and the joint posterior
//! over `(k, t, z)` puts mass `nu~_kt / K` on `(k, t)`.

use rayon::prelude::*;

use super::Batch;
use crate::distributions::log_sum_exp;
use crate::fsc::{backward_scaled, forward_scaled, node_marginals, Forward, FscTables};
use crate::{Error, Result};

/// Expected sufficient statistics for one agent, weighted by `nu~ / K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistics {
    pub nodes: usize,
    pub actions: usize,
    pub bins: usize,
    /// Mass on `z_0 = i`.
    pub n0: Vec<f64>,
    /// Mass on `z_tau = i, a_tau = a`.
    pub n_pi: Vec<f64>,
    /// Mass on `z_{tau-1} = i, a_{tau-1} = a, o_tau = o, z_tau = j`.
    pub n_omega: Vec<f64>,
}

impl Statistics {
    pub fn zeros(nodes: usize, actions: usize, bins: usize) -> Self {
        Self {
            nodes,
            actions,
            bins,
            n0: vec![0.0; nodes],
            n_pi: vec![0.0; nodes * actions],
            n_omega: vec![0.0; nodes * actions * bins * nodes],
        }
    }

    fn like(t: &FscTables) -> Self {
        Self::zeros(t.nodes, t.actions, t.bins)
    }

    /// Total expected visits per node.
    pub fn occupancy(&self) -> Vec<f64> {
        self.n_pi.chunks(self.actions).map(|r| r.iter().sum()).collect()
    }

    fn add(&mut self, other: &Self) {
        for (x, y) in self.n0.iter_mut().zip(&other.n0) {
            *x += y;
        }
        for (x, y) in self.n_pi.iter_mut().zip(&other.n_pi) {
            *x += y;
        }
        for (x, y) in self.n_omega.iter_mut().zip(&other.n_omega) {
            *x += y;
        }
    }

    /// `sum stats * ln Theta~`: the expected complete-data log-likelihood.
    /// Entries of `t` that underflowed to zero are read as `f64::MIN_POSITIVE`.
    pub fn dot_log(&self, t: &FscTables) -> f64 {
        let term = |n: &[f64], p: &[f64]| -> f64 {
            n.iter().zip(p).filter(|(n, _)| **n != 0.0).map(|(n, p)| n * p.max(f64::MIN_POSITIVE).ln()).sum()
        };
        term(&self.n0, &t.eta) + term(&self.n_pi, &t.pi) + term(&self.n_omega, &t.omega)
    }
}

/// Output of one expectation step.
#[derive(Debug, Clone)]
pub struct EStep {
    pub stats: Vec<Statistics>,
    /// `nu~_kt / K`; sums to one.
    pub weights: Vec<Vec<f64>>,
    /// `ln V^(D; Theta~)`.
    pub log_value: f64,
    /// `sum_kt (nu~_kt / K) * sum_z q(z | k, t)`, rebuilt from the scaled messages.
    pub qz_normalization: f64,
    /// `sum_kt w_kt ln(r^_kt / K)` with `r^` the discounted, shifted, behavior-divided reward.
    pub reward_term: f64,
    /// Entropy of the joint `q(k, t, z)`.
    pub entropy: f64,
}

impl EStep {
    /// `E_q[ln r^/K + sum_n ln p(a, z | Theta)] + H[q]` with `E ln Theta = ln tables`.
    /// Equals `ln V^(tables)` when `tables` are the ones the step ran with.
    pub fn data_term(&self, tables: &[FscTables]) -> f64 {
        self.reward_term + self.entropy + self.stats.iter().zip(tables).map(|(s, t)| s.dot_log(t)).sum::<f64>()
    }
}

/// `nu~` and the discounted behavior-divided rewards.
#[derive(Debug, Clone)]
pub struct ReweightedRewards {
    /// `ln[gamma^t (r_kt - R_min) / prod_n p(a | o, behavior)]`.
    pub log_r_tilde: Vec<Vec<f64>>,
    pub nu_tilde: Vec<Vec<f64>>,
    pub r_min: f64,
    pub r_max: f64,
    pub log_value: f64,
}

impl ReweightedRewards {
    pub fn r_tilde(&self) -> Vec<Vec<f64>> {
        self.log_r_tilde.iter().map(|r| r.iter().map(|x| x.exp()).collect()).collect()
    }

    /// `(1/K) sum_kt nu~_kt`.
    pub fn normalization(&self) -> f64 {
        self.nu_tilde.iter().flatten().sum::<f64>() / self.nu_tilde.len() as f64
    }
}

fn check_tables(batch: &Batch, tables: &[FscTables]) -> Result<()> {
    if tables.len() != batch.agents {
        return Err(Error::Data(format!("{} policies for {} agents", tables.len(), batch.agents)));
    }
    Ok(())
}

fn forwards(batch: &Batch, tables: &[FscTables]) -> Result<Vec<Vec<Forward>>> {
    batch
        .episodes
        .par_iter()
        .map(|ep| ep.agents.iter().zip(tables).map(|(h, t)| forward_scaled(t, &h.actions, &h.obs)).collect())
        .collect()
}

/// `ln r^_kt` for every `(k, t)`, using recorded behavior probabilities or,
/// when given, the likelihood under explicit behavior policies.
fn log_rewards(batch: &Batch, r_min: f64, behavior: Option<&[Vec<Forward>]>) -> Vec<Vec<f64>> {
    batch
        .episodes
        .iter()
        .enumerate()
        .map(|(k, ep)| {
            let behavior_prefix: Option<Vec<Vec<f64>>> =
                behavior.map(|b| b[k].iter().map(|f| f.prefix_log_likelihoods()).collect());
            (0..ep.rewards.len())
                .map(|t| {
                    let ln_b: f64 = match &behavior_prefix {
                        Some(p) => p.iter().map(|l| l[t]).sum(),
                        None => ep.agents.iter().map(|h| h.ln_behavior[t]).sum(),
                    };
                    batch.ln_discount(t) + (ep.rewards[t] - r_min).ln() - ln_b
                })
                .collect()
        })
        .collect()
}

fn log_weights(log_r: &[Vec<f64>], fwd: &[Vec<Forward>]) -> Vec<Vec<f64>> {
    log_r
        .iter()
        .zip(fwd)
        .map(|(lr, fs)| {
            let prefix: Vec<Vec<f64>> = fs.iter().map(|f| f.prefix_log_likelihoods()).collect();
            lr.iter().enumerate().map(|(t, r)| r + prefix.iter().map(|p| p[t]).sum::<f64>()).collect()
        })
        .collect()
}

fn log_mean(log_w: &[Vec<f64>]) -> f64 {
    let flat: Vec<f64> = log_w.iter().flatten().copied().collect();
    log_sum_exp(&flat) - (log_w.len() as f64).ln()
}

/// `ln V^(D; targets)`. Ratios are taken against `behavior` policies when
/// given, otherwise against the probabilities recorded during collection.
pub fn log_empirical_value(
    batch: &Batch,
    r_min: f64,
    targets: &[FscTables],
    behavior: Option<&[FscTables]>,
) -> Result<f64> {
    check_tables(batch, targets)?;
    let fwd = forwards(batch, targets)?;
    let bfwd = match behavior {
        Some(b) => {
            check_tables(batch, b)?;
            Some(forwards(batch, b)?)
        }
        None => None,
    };
    let log_r = log_rewards(batch, r_min, bfwd.as_deref());
    Ok(log_mean(&log_weights(&log_r, &fwd)))
}

/// `V^(D; targets) = (1/K) sum_k sum_t [prod_n p(a|o, target) / prod_n p(a|o, behavior)] gamma^t (r_t - R_min)`.
pub fn empirical_value(batch: &Batch, r_min: f64, targets: &[FscTables], behavior: Option<&[FscTables]>) -> Result<f64> {
    Ok(log_empirical_value(batch, r_min, targets, behavior)?.exp())
}

/// `r~` and `nu~` for the point estimate `tables`.
pub fn reweighted(batch: &Batch, tables: &[FscTables]) -> Result<ReweightedRewards> {
    check_tables(batch, tables)?;
    let fwd = forwards(batch, tables)?;
    let log_r = log_rewards(batch, batch.r_min, None);
    let log_w = log_weights(&log_r, &fwd);
    let log_value = log_mean(&log_w);
    if !log_value.is_finite() {
        return Err(Error::Numeric(format!("empirical value has log {log_value}")));
    }
    let nu_tilde = log_w.iter().map(|r| r.iter().map(|w| (w - log_value).exp()).collect()).collect();
    Ok(ReweightedRewards { log_r_tilde: log_r, nu_tilde, r_min: batch.r_min, r_max: batch.r_max, log_value })
}

struct EpisodeStats {
    stats: Vec<Statistics>,
    qz: f64,
    entropy_z: f64,
}

/// Weights, expected node statistics and entropy under the point estimate `tables`.
pub fn expectation(batch: &Batch, tables: &[FscTables]) -> Result<EStep> {
    check_tables(batch, tables)?;
    let fwd = forwards(batch, tables)?;
    let log_r = log_rewards(batch, batch.r_min, None);
    let log_w = log_weights(&log_r, &fwd);
    let k = batch.len() as f64;
    let log_total = log_sum_exp(&log_w.iter().flatten().copied().collect::<Vec<_>>());
    if !log_total.is_finite() {
        return Err(Error::Numeric(format!("importance weights have log-sum {log_total}")));
    }
    let weights: Vec<Vec<f64>> = log_w.iter().map(|r| r.iter().map(|w| (w - log_total).exp()).collect()).collect();

    let per_episode: Vec<EpisodeStats> = batch
        .episodes
        .par_iter()
        .zip(&fwd)
        .zip(&weights)
        .map(|((ep, fs), ws)| {
            let mut out = EpisodeStats { stats: tables.iter().map(Statistics::like).collect(), qz: 0.0, entropy_z: 0.0 };
            for (t, &w) in ws.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let mut path_mass = 1.0;
                for ((h, f), (tab, st)) in ep.agents.iter().zip(fs).zip(tables.iter().zip(out.stats.iter_mut())) {
                    let beta = backward_scaled(tab, &h.actions, &h.obs, f, t);
                    path_mass *= f.alpha[0].iter().zip(&beta[0]).map(|(a, b)| a * b).sum::<f64>();
                    let m = node_marginals(tab, &f.alpha[..=t], &beta, &h.actions, &h.obs);
                    out.entropy_z += w * accumulate(st, tab, &m, &h.actions, &h.obs, w);
                }
                out.qz += w * path_mass;
            }
            out
        })
        .collect();

    let mut stats: Vec<Statistics> = tables.iter().map(Statistics::like).collect();
    let (mut qz, mut entropy_z) = (0.0, 0.0);
    for e in &per_episode {
        for (s, o) in stats.iter_mut().zip(&e.stats) {
            s.add(o);
        }
        qz += e.qz;
        entropy_z += e.entropy_z;
    }
    let mut reward_term = 0.0;
    let mut entropy_kt = 0.0;
    for (ws, lr) in weights.iter().zip(&log_r) {
        for (w, r) in ws.iter().zip(lr) {
            if *w > 0.0 {
                reward_term += w * (r - k.ln());
                entropy_kt -= w * w.ln();
            }
        }
    }
    Ok(EStep {
        stats,
        weights,
        log_value: log_total - k.ln(),
        qz_normalization: qz,
        reward_term,
        entropy: entropy_kt + entropy_z,
    })
}

/// Adds one history's marginals (weight `w`) to `st`; returns the entropy of
/// the node-path posterior.
fn accumulate(
    st: &mut Statistics,
    tab: &FscTables,
    m: &crate::fsc::NodeMarginals,
    actions: &[usize],
    obs: &[usize],
    w: f64,
) -> f64 {
    let z = tab.nodes;
    let mut entropy = 0.0;
    for (i, g) in m.singleton[0].iter().enumerate() {
        st.n0[i] += w * g;
        if *g > 0.0 {
            entropy -= g * g.ln();
        }
    }
    for (tau, single) in m.singleton.iter().enumerate() {
        let a = actions[tau];
        for (i, g) in single.iter().enumerate() {
            st.n_pi[i * tab.actions + a] += w * g;
        }
    }
    for (p, pair) in m.pairwise.iter().enumerate() {
        let tau = p + 1;
        let prev = &m.singleton[tau - 1];
        for i in 0..z {
            let base = tab.omega_offset(i, actions[tau - 1], obs[tau - 1]);
            for j in 0..z {
                let x = pair[i * z + j];
                st.n_omega[base + j] += w * x;
                if x > 0.0 {
                    entropy -= x * (x / prev[i]).ln();
                }
            }
        }
    }
    entropy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsc::{FscPolicy, ObservationBinning};
    use crate::sim::{AgentTrace, Episode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn episodes(rng: &mut ChaCha8Rng, k: usize, t: usize, agents: usize) -> Vec<Episode> {
        let b = ObservationBinning::new(2).unwrap();
        (0..k)
            .map(|k| {
                let traces = (0..agents)
                    .map(|_| {
                        let obs_us: Vec<u64> = (0..t).map(|_| rng.random_range(1..4)).collect();
                        AgentTrace {
                            actions: (0..t).map(|_| [15, 31][rng.random_range(0..2)]).collect(),
                            obs_bin: obs_us.iter().map(|o| b.bin(*o)).collect(),
                            obs_us,
                            pi_behavior: (0..t).map(|_| rng.random_range(0.2..0.8)).collect(),
                        }
                    })
                    .collect();
                let mut r = 0;
                let rewards = (0..t)
                    .map(|_| {
                        r += rng.random_range(0..3);
                        r
                    })
                    .collect();
                Episode::new(k, traces, rewards).unwrap()
            })
            .collect()
    }

    fn random_tables(rng: &mut ChaCha8Rng, z: usize) -> FscTables {
        let p = FscPolicy::random(vec![15, 31], ObservationBinning::new(2).unwrap(), z, 1.0, rng).unwrap();
        let mut t = p.tables();
        for v in t.eta.iter_mut().chain(t.pi.iter_mut()).chain(t.omega.iter_mut()) {
            *v *= rng.random_range(0.3..1.0);
        }
        t
    }

    fn batch(eps: &[Episode], gamma: f64) -> Batch {
        Batch::new(eps, &[15, 31], ObservationBinning::new(2).unwrap(), gamma).unwrap()
    }

    #[test]
    fn value_hand_sum_with_unit_ratios() {
        // rewards all 1, R_min = 0, gamma = 0.9, three epochs
        let tr = AgentTrace { actions: vec![15; 3], obs_us: vec![1; 3], obs_bin: vec![0; 3], pi_behavior: vec![0.5; 3] };
        let eps = vec![Episode::new(0, vec![tr], vec![1, 1, 1]).unwrap()];
        let b = batch(&eps, 0.9);
        let mut p = FscPolicy::uniform(vec![15, 31], ObservationBinning::new(2).unwrap(), 1).unwrap().tables();
        p.pi = vec![0.5, 0.5];
        let v = empirical_value(&b, 0.0, &[p.clone()], Some(&[p.clone()])).unwrap();
        assert!((v - 2.71).abs() < 1e-12);
        // the recorded behavior probabilities are the same 0.5s
        let v2 = empirical_value(&b, 0.0, &[p], None).unwrap();
        assert!((v2 - 2.71).abs() < 1e-12);
    }

    #[test]
    fn duplicating_episodes_keeps_the_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eps = episodes(&mut rng, 2, 4, 2);
        let tabs = vec![random_tables(&mut rng, 2), random_tables(&mut rng, 3)];
        let b = batch(&eps, 0.9);
        let v1 = empirical_value(&b, b.r_min, &tabs, None).unwrap();
        let doubled: Vec<Episode> = eps.iter().chain(&eps).cloned().collect();
        let v2 = empirical_value(&batch(&doubled, 0.9), b.r_min, &tabs, None).unwrap();
        assert!((v1 - v2).abs() < 1e-12 * v1);
    }

    #[test]
    fn constant_floor_gives_zero_value() {
        let tr = AgentTrace { actions: vec![15; 2], obs_us: vec![1; 2], obs_bin: vec![0; 2], pi_behavior: vec![0.5; 2] };
        let eps = vec![Episode::new(0, vec![tr], vec![4, 4]).unwrap()];
        let b = batch(&eps, 0.9);
        let p = FscPolicy::uniform(vec![15, 31], ObservationBinning::new(2).unwrap(), 1).unwrap().tables();
        assert_eq!(empirical_value(&b, 4.0, &[p], None).unwrap(), 0.0);
        assert!(b.check_reward_range().is_err());
    }

    #[test]
    fn nu_tilde_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = episodes(&mut rng, 3, 5, 2);
        let tabs = vec![random_tables(&mut rng, 2), random_tables(&mut rng, 1)];
        let rw = reweighted(&batch(&eps, 0.9), &tabs).unwrap();
        assert!((rw.normalization() - 1.0).abs() < 1e-12);
        // r = R_min entries carry no weight
        assert_eq!(rw.nu_tilde[0].len(), 5);
        for (lr, nu) in rw.log_r_tilde.iter().flatten().zip(rw.nu_tilde.iter().flatten()) {
            if *lr == f64::NEG_INFINITY {
                assert_eq!(*nu, 0.0);
            }
        }
        let e = expectation(&batch(&eps, 0.9), &tabs).unwrap();
        assert!((e.qz_normalization - 1.0).abs() < 1e-9);
        assert!((e.log_value - rw.log_value).abs() < 1e-12);
    }

    #[test]
    fn single_term_weight_is_k() {
        // one non-zero reward term: nu~ = K for it
        let tr = AgentTrace { actions: vec![15; 2], obs_us: vec![1; 2], obs_bin: vec![0; 2], pi_behavior: vec![0.5; 2] };
        let eps = vec![
            Episode::new(0, vec![tr.clone()], vec![0, 0]).unwrap(),
            Episode::new(1, vec![tr], vec![0, 3]).unwrap(),
        ];
        let p = FscPolicy::uniform(vec![15, 31], ObservationBinning::new(2).unwrap(), 1).unwrap().tables();
        let rw = reweighted(&batch(&eps, 0.9), &[p]).unwrap();
        assert_eq!(rw.nu_tilde[0], vec![0.0, 0.0]);
        assert_eq!(rw.nu_tilde[1][0], 0.0);
        assert!((rw.nu_tilde[1][1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn equal_rewards_follow_discount_pattern() {
        // identical histories, reward jumps to 1 and stays: nu~ proportional to gamma^t
        let tr = AgentTrace { actions: vec![15; 4], obs_us: vec![1; 4], obs_bin: vec![0; 4], pi_behavior: vec![1.0; 4] };
        let eps = vec![Episode::new(0, vec![tr], vec![0, 1, 1, 1]).unwrap()];
        let mut p = FscPolicy::uniform(vec![15, 31], ObservationBinning::new(2).unwrap(), 1).unwrap().tables();
        p.pi = vec![1.0, 0.0];
        let rw = reweighted(&batch(&eps, 0.5), &[p]).unwrap();
        assert!((rw.nu_tilde[0][2] / rw.nu_tilde[0][1] - 0.5).abs() < 1e-12);
        assert!((rw.nu_tilde[0][3] / rw.nu_tilde[0][2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn data_term_matches_log_value_and_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let eps = episodes(&mut rng, 2, 3, 2);
            let b = batch(&eps, 0.8);
            if b.check_reward_range().is_err() {
                continue;
            }
            let tabs = vec![random_tables(&mut rng, 2), random_tables(&mut rng, 2)];
            let e = expectation(&b, &tabs).unwrap();
            assert!((e.data_term(&tabs) - e.log_value).abs() < 1e-10);

            // Jensen: any other tables give a lower bound on their own log value
            let other = vec![random_tables(&mut rng, 2), random_tables(&mut rng, 2)];
            let lv = log_empirical_value(&b, b.r_min, &other, None).unwrap();
            assert!(e.data_term(&other) <= lv + 1e-10);
        }
    }
}
