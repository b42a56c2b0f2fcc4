//! Finite state controllers `<Z, eta, omega, pi>`: representation, sampling,
//! history likelihoods, episode-based initialization, point estimates and pruning.

mod estimate;
mod init;
mod likelihood;
mod prune;

pub use estimate::{point_estimate, stick_expected_ln};
pub use init::{init_from_episodes, init_policies, MERGE_L1};
pub use likelihood::{
    action_conditionals, backward_messages, backward_scaled, forward_messages, forward_scaled, history_likelihood,
    node_marginals, Forward, NodeMarginals,
};
pub use prune::{prune, surviving_nodes, PruneReport, DEFAULT_PRUNE_EPSILON};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_dirichlet, SimplexVector};
use crate::{Error, Result};

/// Quantizes microsecond observations into `floor(log2(us))` bins, with the
/// last bin absorbing everything above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationBinning {
    pub bins: usize,
}

impl Default for ObservationBinning {
    /// 21 bins: the last one starts at 2^20 us (about one second).
    fn default() -> Self {
        Self { bins: 21 }
    }
}

impl ObservationBinning {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidParams("observation binning needs at least one bin".into()));
        }
        Ok(Self { bins })
    }

    pub fn bin(&self, obs_us: u64) -> usize {
        (obs_us.max(1).ilog2() as usize).min(self.bins - 1)
    }
}

/// Dense numeric view of an FSC, shared by proper policies and the
/// sub-probability point estimates. Rows need not sum to one.
///
/// Layouts: `pi[i * A + a]`, `omega[((i * A + a) * O + o) * Z + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FscTables {
    pub nodes: usize,
    pub actions: usize,
    pub bins: usize,
    pub eta: Vec<f64>,
    pub pi: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Exp-digamma point estimate of the policy parameters.
pub type PointEstimate = FscTables;

impl FscTables {
    pub fn pi(&self, node: usize, action: usize) -> f64 {
        self.pi[node * self.actions + action]
    }

    pub fn pi_row(&self, node: usize) -> &[f64] {
        &self.pi[node * self.actions..(node + 1) * self.actions]
    }

    pub fn omega_row(&self, node: usize, action: usize, obs: usize) -> &[f64] {
        let start = self.omega_offset(node, action, obs);
        &self.omega[start..start + self.nodes]
    }

    pub(crate) fn omega_offset(&self, node: usize, action: usize, obs: usize) -> usize {
        ((node * self.actions + action) * self.bins + obs) * self.nodes
    }

    /// Copy with every row of `eta`, `pi` and `omega` rescaled to sum to one.
    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        normalize_rows(&mut out.eta, self.nodes);
        normalize_rows(&mut out.pi, self.actions);
        normalize_rows(&mut out.omega, self.nodes);
        out
    }

    /// Mixes every action row with the uniform distribution: `eps/|A| + (1 - eps) pi`.
    pub fn epsilon_mixed(&self, epsilon: f64) -> Self {
        let mut out = self.clone();
        let floor = epsilon / self.actions as f64;
        for p in &mut out.pi {
            *p = floor + (1.0 - epsilon) * *p;
        }
        out
    }

    fn check_history(&self, actions: &[usize], obs: &[usize]) -> Result<()> {
        if actions.is_empty() {
            return Err(Error::Data("history has no actions".into()));
        }
        if obs.len() + 1 < actions.len() {
            return Err(Error::Data(format!(
                "{} actions need at least {} observations, got {}",
                actions.len(),
                actions.len() - 1,
                obs.len()
            )));
        }
        if let Some(a) = actions.iter().find(|a| **a >= self.actions) {
            return Err(Error::Data(format!("action index {a} out of range ({} actions)", self.actions)));
        }
        if let Some(o) = obs.iter().find(|o| **o >= self.bins) {
            return Err(Error::Data(format!("observation bin {o} out of range ({} bins)", self.bins)));
        }
        Ok(())
    }
}

fn normalize_rows(values: &mut [f64], width: usize) {
    for row in values.chunks_mut(width) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|v| *v /= total);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / width as f64);
        }
    }
}

/// A proper stochastic finite state controller for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDoc", into = "PolicyDoc")]
pub struct FscPolicy {
    action_set: Vec<u32>,
    binning: ObservationBinning,
    eta: SimplexVector,
    pi: Vec<SimplexVector>,
    /// Row `(i * A + a) * O + o`.
    omega: Vec<SimplexVector>,
}

impl FscPolicy {
    pub fn new(
        action_set: Vec<u32>,
        binning: ObservationBinning,
        eta: SimplexVector,
        pi: Vec<SimplexVector>,
        omega: Vec<SimplexVector>,
    ) -> Result<Self> {
        let z = eta.len();
        let (a, o) = (action_set.len(), binning.bins);
        let fail = |m: String| Err(Error::InvalidParams(m));
        if z == 0 {
            return fail("an FSC needs at least one node".into());
        }
        if a == 0 {
            return fail("empty action set".into());
        }
        if pi.len() != z || pi.iter().any(|r| r.len() != a) {
            return fail(format!("pi must have {z} rows of {a} actions"));
        }
        if omega.len() != z * a * o || omega.iter().any(|r| r.len() != z) {
            return fail(format!("omega must have {} rows of {z} nodes", z * a * o));
        }
        Ok(Self { action_set, binning, eta, pi, omega })
    }

    /// Every row uniform.
    pub fn uniform(action_set: Vec<u32>, binning: ObservationBinning, nodes: usize) -> Result<Self> {
        let a = action_set.len();
        if nodes == 0 || a == 0 {
            return Err(Error::InvalidParams("uniform FSC needs nodes and actions".into()));
        }
        let eta = SimplexVector::uniform(nodes);
        let pi = vec![SimplexVector::uniform(a); nodes];
        let omega = vec![SimplexVector::uniform(nodes); nodes * a * binning.bins];
        Self::new(action_set, binning, eta, pi, omega)
    }

    /// Every row drawn from a symmetric Dirichlet with the given concentration.
    pub fn random<R: Rng + ?Sized>(
        action_set: Vec<u32>,
        binning: ObservationBinning,
        nodes: usize,
        concentration: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let a = action_set.len();
        let eta = sample_dirichlet(&vec![concentration; nodes], rng)?;
        let pi = (0..nodes).map(|_| sample_dirichlet(&vec![concentration; a], rng)).collect::<Result<_>>()?;
        let omega = (0..nodes * a * binning.bins)
            .map(|_| sample_dirichlet(&vec![concentration; nodes], rng))
            .collect::<Result<_>>()?;
        Self::new(action_set, binning, eta, pi, omega)
    }

    /// Proper policy from (possibly unnormalized) tables, rows renormalized.
    pub fn from_tables(action_set: Vec<u32>, binning: ObservationBinning, tables: &FscTables) -> Result<Self> {
        if tables.actions != action_set.len() || tables.bins != binning.bins {
            return Err(Error::InvalidParams("table shape does not match action set / binning".into()));
        }
        let t = tables.normalized();
        let eta = SimplexVector::from_masses(&t.eta)?;
        let pi = t.pi.chunks(t.actions).map(SimplexVector::from_masses).collect::<Result<_>>()?;
        let omega = t.omega.chunks(t.nodes).map(SimplexVector::from_masses).collect::<Result<_>>()?;
        Self::new(action_set, binning, eta, pi, omega)
    }

    pub fn node_count(&self) -> usize {
        self.eta.len()
    }

    pub fn action_set(&self) -> &[u32] {
        &self.action_set
    }

    pub fn binning(&self) -> ObservationBinning {
        self.binning
    }

    pub fn eta(&self) -> &SimplexVector {
        &self.eta
    }

    pub fn pi_row(&self, node: usize) -> &SimplexVector {
        &self.pi[node]
    }

    pub fn omega_row(&self, node: usize, action: usize, obs_bin: usize) -> &SimplexVector {
        &self.omega[(node * self.action_set.len() + action) * self.binning.bins + obs_bin]
    }

    pub fn action_index(&self, cw: u32) -> Option<usize> {
        self.action_set.iter().position(|c| *c == cw)
    }

    pub fn tables(&self) -> FscTables {
        FscTables {
            nodes: self.node_count(),
            actions: self.action_set.len(),
            bins: self.binning.bins,
            eta: self.eta.weights().to_vec(),
            pi: self.pi.iter().flat_map(|r| r.weights().iter().copied()).collect(),
            omega: self.omega.iter().flat_map(|r| r.weights().iter().copied()).collect(),
        }
    }

    pub fn initial_node<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.eta.index_for(rng.random())
    }

    /// Index into the action set drawn from `pi(node)`.
    pub fn select_action<R: Rng + ?Sized>(&self, node: usize, rng: &mut R) -> Result<usize> {
        self.check_node(node)?;
        Ok(self.pi[node].index_for(rng.random()))
    }

    /// Successor node after taking `action` (an index) and observing `obs_us`.
    pub fn transition_node<R: Rng + ?Sized>(&self, node: usize, action: usize, obs_us: u64, rng: &mut R) -> Result<usize> {
        self.check_node(node)?;
        if action >= self.action_set.len() {
            return Err(Error::Data(format!("action index {action} out of range")));
        }
        let o = self.binning.bin(obs_us);
        Ok(self.omega_row(node, action, o).index_for(rng.random()))
    }

    fn check_node(&self, node: usize) -> Result<()> {
        if node >= self.node_count() {
            return Err(Error::Data(format!("node {node} out of range ({} nodes)", self.node_count())));
        }
        Ok(())
    }

    /// Policy restricted to `keep` (sorted node indices), rows renormalized.
    pub(crate) fn restricted(&self, keep: &[usize]) -> Result<Self> {
        let (a, o) = (self.action_set.len(), self.binning.bins);
        let pick = |row: &SimplexVector| -> Result<SimplexVector> {
            SimplexVector::from_masses(&keep.iter().map(|j| row.weights()[*j]).collect::<Vec<_>>())
        };
        let eta = pick(&self.eta)?;
        let pi = keep.iter().map(|i| self.pi[*i].clone()).collect();
        let mut omega = Vec::with_capacity(keep.len() * a * o);
        for i in keep {
            for r in 0..a * o {
                omega.push(pick(&self.omega[i * a * o + r])?);
            }
        }
        Self::new(self.action_set.clone(), self.binning, eta, pi, omega)
    }
}

/// On-disk layout: omega as a map keyed by `"node/cw/bin"`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    node_count: usize,
    action_set: Vec<u32>,
    observation_bins: usize,
    eta: SimplexVector,
    pi: Vec<SimplexVector>,
    omega: BTreeMap<String, SimplexVector>,
}

impl From<FscPolicy> for PolicyDoc {
    fn from(p: FscPolicy) -> Self {
        let (a, o) = (p.action_set.len(), p.binning.bins);
        let mut omega = BTreeMap::new();
        for i in 0..p.node_count() {
            for (ai, cw) in p.action_set.iter().enumerate() {
                for ob in 0..o {
                    omega.insert(format!("{i}/{cw}/{ob}"), p.omega[(i * a + ai) * o + ob].clone());
                }
            }
        }
        PolicyDoc {
            node_count: p.node_count(),
            observation_bins: o,
            action_set: p.action_set,
            eta: p.eta,
            pi: p.pi,
            omega,
        }
    }
}

impl TryFrom<PolicyDoc> for FscPolicy {
    type Error = Error;

    fn try_from(mut d: PolicyDoc) -> Result<Self> {
        if d.eta.len() != d.node_count {
            return Err(Error::Data(format!("eta has {} entries for {} nodes", d.eta.len(), d.node_count)));
        }
        let binning = ObservationBinning::new(d.observation_bins)?;
        let mut omega = Vec::with_capacity(d.node_count * d.action_set.len() * d.observation_bins);
        for i in 0..d.node_count {
            for cw in &d.action_set {
                for ob in 0..d.observation_bins {
                    let key = format!("{i}/{cw}/{ob}");
                    omega.push(d.omega.remove(&key).ok_or_else(|| Error::Data(format!("omega row {key} missing")))?);
                }
            }
        }
        if let Some(key) = d.omega.keys().next() {
            return Err(Error::Data(format!("unexpected omega row {key}")));
        }
        FscPolicy::new(d.action_set, binning, d.eta, d.pi, omega)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    const CWS: [u32; 7] = [15, 31, 63, 127, 255, 511, 1023];

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small(eta: Vec<f64>) -> FscPolicy {
        let z = eta.len();
        let b = ObservationBinning::new(2).unwrap();
        let mut p = FscPolicy::uniform(CWS.to_vec(), b, z).unwrap();
        p.eta = SimplexVector::new(eta).unwrap();
        p
    }

    fn chi_square_p(counts: &[usize], probs: &[f64]) -> f64 {
        let n: usize = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(c, p)| (*c as f64 - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
    }

    #[test]
    fn binning_is_logarithmic() {
        let b = ObservationBinning::default();
        assert_eq!(b.bin(0), 0);
        assert_eq!(b.bin(1), 0);
        assert_eq!(b.bin(34), 5);
        assert_eq!(b.bin(63), 5);
        assert_eq!(b.bin(64), 6);
        assert_eq!(b.bin(u64::MAX), 20);
        assert!(ObservationBinning::new(0).is_err());
    }

    #[test]
    fn initial_node_cases() {
        let mut r = rng(1);
        let one = small(vec![1.0]);
        assert!((0..100).all(|_| one.initial_node(&mut r) == 0));
        let degenerate = small(vec![1.0, 0.0]);
        assert!((0..1000).all(|_| degenerate.initial_node(&mut r) == 0));
        let half = small(vec![0.5, 0.5]);
        let n = 100_000;
        let first = (0..n).filter(|_| half.initial_node(&mut r) == 0).count();
        assert!((first as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn select_action_cases() {
        let mut r = rng(2);
        let mut p = small(vec![1.0]);
        p.pi[0] = SimplexVector::point(7, 3);
        assert!((0..100).all(|_| p.select_action(0, &mut r).unwrap() == 3));
        p.pi[0] = SimplexVector::uniform(7);
        let mut counts = [0usize; 7];
        for _ in 0..100_000 {
            counts[p.select_action(0, &mut r).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 1.0 / 7.0).abs() < 0.01);
        }
        assert!(chi_square_p(&counts, &[1.0 / 7.0; 7]) > 0.001);
        assert!(p.select_action(1, &mut r).is_err());
    }

    #[test]
    fn transition_node_cases() {
        let mut r = rng(3);
        let single = small(vec![1.0]);
        assert_eq!(single.transition_node(0, 2, 1234, &mut r).unwrap(), 0);
        let mut p = small(vec![0.2, 0.3, 0.5]);
        // bin 1 absorbs large observations
        let row = (2 * 7 + 4) * 2 + 1;
        p.omega[row] = SimplexVector::point(3, 2);
        assert!((0..100).all(|_| p.transition_node(2, 4, 10_000_000, &mut r).unwrap() == 2));
        let mut counts = [0usize; 3];
        for _ in 0..100_000 {
            counts[p.transition_node(0, 0, 1, &mut r).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 1.0 / 3.0).abs() < 0.01);
        }
        assert!(chi_square_p(&counts, &[1.0 / 3.0; 3]) > 0.001);
        assert!(p.transition_node(0, 7, 1, &mut r).is_err());
    }

    #[test]
    fn skewed_rows_pass_goodness_of_fit() {
        let mut r = rng(4);
        let p = FscPolicy::random(CWS.to_vec(), ObservationBinning::new(3).unwrap(), 3, 1.0, &mut r).unwrap();
        let mut counts = [0usize; 7];
        for _ in 0..100_000 {
            counts[p.select_action(1, &mut r).unwrap()] += 1;
        }
        let probs = p.pi_row(1).weights().to_vec();
        let (c, pr): (Vec<usize>, Vec<f64>) = counts.iter().zip(&probs).filter(|(_, p)| **p > 1e-3).unzip();
        assert!(chi_square_p(&c, &pr) > 0.001);
    }

    #[test]
    fn json_round_trip_uses_keyed_omega() {
        let mut r = rng(5);
        let p = FscPolicy::random(CWS.to_vec(), ObservationBinning::new(2).unwrap(), 2, 0.5, &mut r).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"1/1023/1\""));
        assert!(text.contains("\"node_count\":2"));
        let back: FscPolicy = serde_json::from_str(&text).unwrap();
        assert_eq!(back.node_count(), 2);
        let diff: f64 = back.tables().omega.iter().zip(&p.tables().omega).map(|(x, y)| (x - y).abs()).sum();
        assert!(diff < 1e-12);
        let broken = text.replace("\"1/1023/1\"", "\"9/1023/1\"");
        assert!(serde_json::from_str::<FscPolicy>(&broken).is_err());
    }

    #[test]
    fn tables_normalize_and_mix() {
        let t = FscTables { nodes: 1, actions: 2, bins: 1, eta: vec![0.5], pi: vec![0.2, 0.2], omega: vec![0.25] };
        let n = t.normalized();
        assert_eq!(n.eta, vec![1.0]);
        assert_eq!(n.pi, vec![0.5, 0.5]);
        assert_eq!(n.omega, vec![1.0]);
        let m = FscTables { pi: vec![1.0, 0.0], ..n }.epsilon_mixed(0.5);
        assert_eq!(m.pi, vec![0.75, 0.25]);
    }
}
