//! Behavior-policy rollouts and the JSON-lines episode format.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fsc::{action_conditionals, FscPolicy};
use crate::sim::{AgentTrace, Episode, SimConfig, Simulator, EPISODE_SCHEMA};
use crate::{Error, Result};

/// Linear decay of the exploration rate over learning rounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub iterations: usize,
}

impl EpsilonSchedule {
    /// 0.9 down to 0.5 over 40 rounds.
    pub const A: Self = Self { start: 0.9, end: 0.5, iterations: 40 };
    /// 0.9 down to 0.2 over 40 rounds.
    pub const B: Self = Self { start: 0.9, end: 0.2, iterations: 40 };

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "a" | "A" => Ok(Self::A),
            "b" | "B" => Ok(Self::B),
            other => Err(Error::Config(format!("unknown epsilon schedule {other:?} (expected a or b)"))),
        }
    }

    /// Rate for round `round`; stays at `end` after the last round.
    pub fn at(&self, round: usize) -> f64 {
        if self.iterations == 0 || round >= self.iterations {
            return self.end;
        }
        self.start + (self.end - self.start) * round as f64 / self.iterations as f64
    }
}

/// Per-agent policies explored epsilon-greedily.
#[derive(Debug, Clone)]
pub struct BehaviorPolicy {
    pub policies: Vec<FscPolicy>,
    pub epsilon: f64,
    pub schedule: EpsilonSchedule,
}

impl BehaviorPolicy {
    /// `epsilon` must lie strictly inside (0, 1) so every action keeps support.
    pub fn new(policies: Vec<FscPolicy>, epsilon: f64, schedule: EpsilonSchedule) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParams(format!("epsilon {epsilon} outside (0, 1)")));
        }
        Self::checked(policies, epsilon, schedule)
    }

    /// First learning round of `schedule`.
    pub fn scheduled(policies: Vec<FscPolicy>, schedule: EpsilonSchedule) -> Result<Self> {
        Self::new(policies, schedule.at(0), schedule)
    }

    /// No exploration. Meant for evaluating a learned policy, not for training data.
    pub fn greedy(policies: Vec<FscPolicy>) -> Result<Self> {
        Self::checked(policies, 0.0, EpsilonSchedule { start: 0.0, end: 0.0, iterations: 0 })
    }

    fn checked(policies: Vec<FscPolicy>, epsilon: f64, schedule: EpsilonSchedule) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::InvalidParams("behavior policy has no agents".into()));
        }
        let binning = policies[0].binning();
        if policies.iter().any(|p| p.binning() != binning) {
            return Err(Error::InvalidParams("agents use different observation binnings".into()));
        }
        Ok(Self { policies, epsilon, schedule })
    }

    /// Same policies with the exploration rate of round `round`.
    pub fn for_round(&self, round: usize) -> Result<Self> {
        Self::new(self.policies.clone(), self.schedule.at(round), self.schedule)
    }

    pub fn agents(&self) -> usize {
        self.policies.len()
    }
}

/// Samples an action index for `node`: uniform with probability `epsilon`,
/// otherwise from the policy row. Also returns `epsilon/|A| + (1 - epsilon) pi(a)`.
pub fn behavior_action<R: Rng + ?Sized>(
    policy: &FscPolicy,
    epsilon: f64,
    node: usize,
    rng: &mut R,
) -> Result<(usize, f64)> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if node >= policy.node_count() {
        return Err(Error::Domain(format!("node {node} out of range ({} nodes)", policy.node_count())));
    }
    let n = policy.action_set().len();
    let action = if rng.random::<f64>() < epsilon { rng.random_range(0..n) } else { policy.select_action(node, rng)? };
    let p = epsilon / n as f64 + (1.0 - epsilon) * policy.pi_row(node).weights()[action];
    Ok((action, p))
}

/// Per-agent totals over the recorded decisions of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Bits delivered without collision.
    pub delivered_bits: Vec<u64>,
    /// Clock at the end of the agent's last recorded access.
    pub wall_us: Vec<u64>,
    /// Mean of the per-access throughputs that enter the reward.
    pub access_throughput_mbps: Vec<f64>,
    /// Mean per-access fairness index.
    pub jain: Vec<f64>,
    /// Lost transmission units (sub-frames or packets).
    pub collisions: Vec<u32>,
}

impl EpisodeMetrics {
    /// `delivered_bits / wall_us` per agent.
    pub fn throughput_mbps(&self) -> Vec<f64> {
        self.delivered_bits.iter().zip(&self.wall_us).map(|(b, w)| if *w == 0 { 0.0 } else { *b as f64 / *w as f64 }).collect()
    }
}

fn episode_rngs(seed: u64, k: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut sim = ChaCha8Rng::seed_from_u64(seed);
    sim.set_stream(2 * k as u64);
    let mut agent = ChaCha8Rng::seed_from_u64(seed);
    agent.set_stream(2 * k as u64 + 1);
    (sim, agent)
}

/// Runs one episode until every agent has made `horizon` decisions.
///
/// Agents that finish early keep contending so the channel load stays the same,
/// but only the first `horizon` decisions are recorded. `rewards[t]` is the sum
/// of every agent's local cumulative reward after its decision `t`, rounded.
pub fn rollout(
    config: &SimConfig,
    behavior: &BehaviorPolicy,
    k: usize,
    horizon: usize,
    seed: u64,
) -> Result<(Episode, EpisodeMetrics)> {
    let n = config.agent_count();
    if behavior.agents() != n {
        return Err(Error::InvalidParams(format!("{} policies for {n} agents", behavior.agents())));
    }
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    for p in &behavior.policies {
        if p.action_set() != config.cw_set.as_slice() {
            return Err(Error::InvalidParams(format!(
                "policy actions {:?} differ from the configured windows {:?}",
                p.action_set(),
                config.cw_set
            )));
        }
    }
    let (sim_rng, mut rng) = episode_rngs(seed, k);
    let mut sim = Simulator::with_rng(config.clone(), sim_rng)?;
    let binning = behavior.policies[0].binning();
    let mut nodes: Vec<usize> = behavior.policies.iter().map(|p| p.initial_node(&mut rng)).collect();
    let mut chosen = vec![0usize; n];
    let mut traces: Vec<AgentTrace> = (0..n)
        .map(|_| AgentTrace {
            actions: Vec::with_capacity(horizon),
            obs_us: Vec::with_capacity(horizon),
            obs_bin: Vec::with_capacity(horizon),
            pi_behavior: Vec::with_capacity(horizon),
        })
        .collect();
    let mut locals: Vec<Vec<f64>> = vec![Vec::with_capacity(horizon); n];
    let mut metrics = EpisodeMetrics {
        delivered_bits: vec![0; n],
        wall_us: vec![0; n],
        access_throughput_mbps: vec![0.0; n],
        jain: vec![0.0; n],
        collisions: vec![0; n],
    };

    while traces.iter().any(|t| t.len() < horizon) {
        for agent in sim.pending_agents() {
            let policy = &behavior.policies[agent];
            let (a, _) = behavior_action(policy, behavior.epsilon, nodes[agent], &mut rng)?;
            chosen[agent] = a;
            sim.submit(agent, policy.action_set()[a])?;
        }
        let outcomes = sim.advance()?;
        let now = sim.state().clock_us;
        for out in outcomes {
            let i = out.agent;
            let a = chosen[i];
            nodes[i] = behavior.policies[i].transition_node(nodes[i], a, out.observation_us, &mut rng)?;
            let tr = &mut traces[i];
            if tr.len() == horizon {
                continue;
            }
            tr.actions.push(out.action);
            tr.obs_us.push(out.observation_us);
            tr.obs_bin.push(binning.bin(out.observation_us));
            locals[i].push(out.local_reward);
            metrics.delivered_bits[i] += out.payload_bits;
            metrics.wall_us[i] = now;
            metrics.access_throughput_mbps[i] += out.throughput_mbps;
            metrics.jain[i] += out.jain;
            metrics.collisions[i] += out.units_lost;
        }
    }

    // p(a_t | h_t) under the mixture, filtered over the hidden node
    for (tr, policy) in traces.iter_mut().zip(&behavior.policies) {
        let mixed = policy.tables().epsilon_mixed(behavior.epsilon);
        let acts: Vec<usize> = tr.actions.iter().map(|cw| policy.action_index(*cw).expect("recorded action")).collect();
        tr.pi_behavior = action_conditionals(&mixed, &acts, &tr.obs_bin)?;
    }
    for v in metrics.access_throughput_mbps.iter_mut().chain(metrics.jain.iter_mut()) {
        *v /= horizon as f64;
    }
    let rewards = (0..horizon).map(|t| locals.iter().map(|l| l[t]).sum::<f64>().round() as i64).collect();
    Ok((Episode::new(k, traces, rewards)?, metrics))
}

/// `episodes` rollouts of `horizon` decisions, in parallel. Episode `k` draws
/// from its own generator stream derived from `seed`, so the result does not
/// depend on the thread count.
pub fn collect_with_metrics(
    config: &SimConfig,
    behavior: &BehaviorPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<(Episode, EpisodeMetrics)>> {
    if episodes == 0 {
        return Err(Error::InvalidParams("need at least one episode".into()));
    }
    config.validate()?;
    (0..episodes).into_par_iter().map(|k| rollout(config, behavior, k, horizon, seed)).collect()
}

pub fn collect(
    config: &SimConfig,
    behavior: &BehaviorPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Episode>> {
    Ok(collect_with_metrics(config, behavior, episodes, horizon, seed)?.into_iter().map(|(e, _)| e).collect())
}

pub fn to_jsonl(episodes: &[Episode]) -> Result<String> {
    let mut out = String::new();
    for e in episodes {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save(episodes: &[Episode], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for e in episodes {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn from_jsonl(reader: impl BufRead) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?;
        match value.get("schema").and_then(|s| s.as_u64()) {
            Some(s) if s == EPISODE_SCHEMA as u64 => {}
            Some(s) => return Err(Error::Data(format!("line {}: schema {s}, expected {EPISODE_SCHEMA}", i + 1))),
            None => return Err(Error::Data(format!("line {}: missing schema", i + 1))),
        }
        let ep: Episode = serde_json::from_value(value).map_err(|e| Error::Data(format!("line {}: {e}", i + 1)))?;
        ep.validate(None)?;
        out.push(ep);
    }
    if out.is_empty() {
        return Err(Error::Data("no episodes".into()));
    }
    Ok(out)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<Episode>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    from_jsonl(BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsc::ObservationBinning;

    fn cws() -> Vec<u32> {
        SimConfig::default().cw_set
    }

    fn deterministic(node_action: usize) -> FscPolicy {
        let mut t = FscPolicy::uniform(cws(), ObservationBinning::default(), 1).unwrap().tables();
        t.pi = (0..7).map(|a| if a == node_action { 1.0 } else { 0.0 }).collect();
        FscPolicy::from_tables(cws(), ObservationBinning::default(), &t).unwrap()
    }

    #[test]
    fn mixture_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = deterministic(3);
        for _ in 0..50 {
            let (_, q) = behavior_action(&p, 1.0, 0, &mut rng).unwrap();
            assert!((q - 1.0 / 7.0).abs() < 1e-15);
            assert_eq!(behavior_action(&p, 0.0, 0, &mut rng).unwrap(), (3, 1.0));
        }
        let mut hits = 0;
        for _ in 0..20_000 {
            let (a, q) = behavior_action(&p, 0.5, 0, &mut rng).unwrap();
            if a == 3 {
                hits += 1;
                assert!((q - (0.5 / 7.0 + 0.5)).abs() < 1e-15);
            } else {
                assert!((q - 0.5 / 7.0).abs() < 1e-15);
            }
        }
        // expected 4/7 of draws
        assert!((hits as f64 / 20_000.0 - 4.0 / 7.0).abs() < 0.02);
        assert!(behavior_action(&p, 0.5, 1, &mut rng).is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(EpsilonSchedule::A.at(0), 0.9);
        assert!((EpsilonSchedule::A.at(20) - 0.7).abs() < 1e-15);
        assert_eq!(EpsilonSchedule::B.at(40), 0.2);
        assert_eq!(EpsilonSchedule::B.at(400), 0.2);
        assert!(EpsilonSchedule::preset("c").is_err());
        let p = vec![deterministic(0)];
        assert!(BehaviorPolicy::new(p.clone(), 1.0, EpsilonSchedule::A).is_err());
        assert!(BehaviorPolicy::new(p.clone(), 0.0, EpsilonSchedule::A).is_err());
        let e = BehaviorPolicy::scheduled(p, EpsilonSchedule::B).unwrap().for_round(10).unwrap().epsilon;
        assert!((e - 0.725).abs() < 1e-15);
    }

    fn small_config() -> SimConfig {
        SimConfig { lte_count: 1, wifi_count: 1, ..SimConfig::default() }
    }

    fn behavior(n: usize, eps: f64) -> BehaviorPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = (0..n).map(|_| FscPolicy::random(cws(), ObservationBinning::default(), 2, 1.0, &mut rng).unwrap()).collect();
        BehaviorPolicy::new(p, eps, EpsilonSchedule::A).unwrap()
    }

    #[test]
    fn collected_batch_shape() {
        let b = behavior(2, 0.3);
        let eps = collect(&small_config(), &b, 3, 12, 9).unwrap();
        assert_eq!(eps.len(), 3);
        for (k, e) in eps.iter().enumerate() {
            assert_eq!(e.k, k);
            assert_eq!(e.len(), 12);
            e.validate(Some(&cws())).unwrap();
            assert!(e.rewards.windows(2).all(|w| w[0] <= w[1]));
            for tr in &e.agents {
                assert!(tr.pi_behavior.iter().all(|p| *p >= 0.3 / 7.0 - 1e-15));
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_the_batch() {
        let b = behavior(2, 0.5);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| collect(&small_config(), &b, 4, 8, 3).unwrap());
        let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let c = many.install(|| collect(&small_config(), &b, 4, 8, 3).unwrap());
        assert_eq!(to_jsonl(&a).unwrap(), to_jsonl(&c).unwrap());
        assert_ne!(to_jsonl(&a).unwrap(), to_jsonl(&collect(&small_config(), &b, 4, 8, 4).unwrap()).unwrap());
    }

    #[test]
    fn stored_probability_is_the_filtered_mixture() {
        // with one node the filter is just the row mixture
        let p = deterministic(2);
        let b = BehaviorPolicy::new(vec![p.clone(), p], 0.4, EpsilonSchedule::A).unwrap();
        let e = &collect(&small_config(), &b, 1, 10, 1).unwrap()[0];
        for tr in &e.agents {
            for (cw, q) in tr.actions.iter().zip(&tr.pi_behavior) {
                let want = if *cw == 63 { 0.4 / 7.0 + 0.6 } else { 0.4 / 7.0 };
                assert!((q - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn round_trip_and_errors() {
        let b = behavior(2, 0.5);
        let eps = collect(&small_config(), &b, 2, 5, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        save(&eps, &path).unwrap();
        assert_eq!(load(&path).unwrap(), eps);

        std::fs::write(&path, "").unwrap();
        assert!(load(&path).is_err());
        let bumped = to_jsonl(&eps).unwrap().replace("\"schema\":1", "\"schema\":2");
        assert!(from_jsonl(bumped.as_bytes()).is_err());
        assert!(load(dir.path().join("missing.jsonl")).is_err());
    }

    #[test]
    fn policy_must_match_the_windows() {
        let p = FscPolicy::uniform(vec![15, 31], ObservationBinning::default(), 1).unwrap();
        let b = BehaviorPolicy::new(vec![p.clone(), p], 0.5, EpsilonSchedule::A).unwrap();
        assert!(collect(&small_config(), &b, 1, 3, 0).is_err());
        assert!(collect(&small_config(), &behavior(3, 0.5), 1, 3, 0).is_err());
        assert!(collect(&small_config(), &behavior(2, 0.5), 0, 3, 0).is_err());
    }
}
