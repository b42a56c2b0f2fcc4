//! Builds starting controllers from collected episodes.
//!
//! Each decision epoch is assigned a depth-one context: the start of the
//! episode, or the last `(action, observation bin)` pair. Contexts with nearly
//! identical next-action frequencies share a node, the node count is capped,
//! and every row gets one pseudo-count of smoothing.

use std::collections::BTreeMap;

use super::{FscPolicy, ObservationBinning};
use crate::distributions::SimplexVector;
use crate::sim::Episode;
use crate::{Error, Result};

/// Contexts whose next-action distributions are closer than this (L1) share a node.
pub const MERGE_L1: f64 = 0.1;

/// `None` is the start of an episode.
type Context = Option<(usize, usize)>;

struct Cluster {
    contexts: Vec<Context>,
    action_counts: Vec<f64>,
}

impl Cluster {
    fn count(&self) -> f64 {
        self.action_counts.iter().sum()
    }

    fn distribution(&self) -> Vec<f64> {
        let c = self.count();
        self.action_counts.iter().map(|x| x / c).collect()
    }
}

fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn index_of_action(action_set: &[u32], cw: u32) -> Result<usize> {
    action_set
        .iter()
        .position(|c| *c == cw)
        .ok_or_else(|| Error::Data(format!("action {cw} not in {action_set:?}")))
}

/// Controller for `agent` with at most `max_nodes` nodes.
pub fn init_from_episodes(
    episodes: &[Episode],
    agent: usize,
    action_set: &[u32],
    binning: ObservationBinning,
    max_nodes: usize,
) -> Result<FscPolicy> {
    if episodes.is_empty() {
        return Err(Error::Data("no episodes to initialize from".into()));
    }
    if max_nodes == 0 {
        return Err(Error::InvalidParams("max_nodes must be at least 1".into()));
    }
    let n_actions = action_set.len();
    let n_bins = binning.bins;

    // next-action counts per context
    let mut counts: BTreeMap<Context, Vec<f64>> = BTreeMap::new();
    let mut visits: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut starts = 0.0;
    for ep in episodes {
        let trace = ep
            .agents
            .get(agent)
            .ok_or_else(|| Error::Data(format!("episode {} has no agent {agent}", ep.k)))?;
        let mut ctx: Context = None;
        starts += 1.0;
        for (t, &cw) in trace.actions.iter().enumerate() {
            let a = index_of_action(action_set, cw)?;
            counts.entry(ctx).or_insert_with(|| vec![0.0; n_actions])[a] += 1.0;
            let next = (a, binning.bin(trace.obs_us[t]));
            *visits.entry(next).or_default() += 1.0;
            ctx = Some(next);
        }
    }

    let mut order: Vec<(Context, Vec<f64>)> = counts.into_iter().collect();
    // heaviest first; BTreeMap order breaks ties deterministically
    order.sort_by(|x, y| y.1.iter().sum::<f64>().total_cmp(&x.1.iter().sum::<f64>()));

    let mut clusters: Vec<Cluster> = Vec::new();
    for (ctx, c) in order {
        let total: f64 = c.iter().sum();
        let dist: Vec<f64> = c.iter().map(|x| x / total).collect();
        let nearest = clusters
            .iter()
            .enumerate()
            .map(|(k, cl)| (k, l1(&dist, &cl.distribution())))
            .filter(|(_, d)| *d < MERGE_L1)
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match nearest {
            Some((k, _)) => {
                let cl = &mut clusters[k];
                cl.contexts.push(ctx);
                cl.action_counts.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
            }
            None => clusters.push(Cluster { contexts: vec![ctx], action_counts: c }),
        }
    }

    while clusters.len() > max_nodes {
        let low = (0..clusters.len()).min_by(|&x, &y| clusters[x].count().total_cmp(&clusters[y].count())).unwrap();
        let victim = clusters.remove(low);
        let dist = victim.distribution();
        let target = (0..clusters.len())
            .min_by(|&x, &y| l1(&dist, &clusters[x].distribution()).total_cmp(&l1(&dist, &clusters[y].distribution())))
            .unwrap();
        let cl = &mut clusters[target];
        cl.contexts.extend(victim.contexts);
        cl.action_counts.iter_mut().zip(&victim.action_counts).for_each(|(x, y)| *x += y);
    }
    clusters.sort_by(|x, y| y.count().total_cmp(&x.count()));

    let z = clusters.len();
    let node_of = |ctx: &Context| clusters.iter().position(|cl| cl.contexts.contains(ctx));
    let mut eta = vec![1.0; z];
    eta[node_of(&None).expect("start context is always observed")] += starts;

    let pi = clusters
        .iter()
        .map(|cl| SimplexVector::from_masses(&cl.action_counts.iter().map(|c| c + 1.0).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;

    // the successor context depends only on (a, o), so every source node shares it
    let mut omega = Vec::with_capacity(z * n_actions * n_bins);
    for _ in 0..z {
        for a in 0..n_actions {
            for o in 0..n_bins {
                let mut row = vec![1.0; z];
                if let Some(j) = node_of(&Some((a, o))) {
                    row[j] += visits[&(a, o)];
                }
                omega.push(SimplexVector::from_masses(&row)?);
            }
        }
    }
    FscPolicy::new(action_set.to_vec(), binning, SimplexVector::from_masses(&eta)?, pi, omega)
}

/// One controller per agent.
pub fn init_policies(
    episodes: &[Episode],
    action_set: &[u32],
    binning: ObservationBinning,
    max_nodes: usize,
) -> Result<Vec<FscPolicy>> {
    let agents = episodes.first().map_or(0, |e| e.agents.len());
    (0..agents).map(|n| init_from_episodes(episodes, n, action_set, binning, max_nodes)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::AgentTrace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const CWS: [u32; 7] = [15, 31, 63, 127, 255, 511, 1023];

    fn episode(k: usize, actions: Vec<u32>, obs_us: Vec<u64>) -> Episode {
        let t = actions.len();
        let b = ObservationBinning::default();
        let trace = AgentTrace {
            obs_bin: obs_us.iter().map(|o| b.bin(*o)).collect(),
            actions,
            obs_us,
            pi_behavior: vec![0.5; t],
        };
        Episode::new(k, vec![trace], (0..t as i64).collect()).unwrap()
    }

    #[test]
    fn single_action_data_concentrates_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let eps: Vec<Episode> = (0..5)
            .map(|k| episode(k, vec![15; 30], (0..30).map(|_| rng.random_range(34..5000)).collect()))
            .collect();
        let p = init_from_episodes(&eps, 0, &CWS, ObservationBinning::default(), 10).unwrap();
        for i in 0..p.node_count() {
            let row = p.pi_row(i).weights();
            let best = (0..7).max_by(|&x, &y| row[x].total_cmp(&row[y])).unwrap();
            assert_eq!(CWS[best], 15);
        }
        // identical next-action behaviour everywhere collapses to one node
        assert_eq!(p.node_count(), 1);
    }

    #[test]
    fn adversarial_histories_respect_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps: Vec<Episode> = (0..10)
            .map(|k| {
                episode(
                    k,
                    (0..200).map(|_| CWS[rng.random_range(0..7)]).collect(),
                    (0..200).map(|_| rng.random_range(1..2_000_000)).collect(),
                )
            })
            .collect();
        for cap in [1, 3, 10] {
            let p = init_from_episodes(&eps, 0, &CWS, ObservationBinning::default(), cap).unwrap();
            assert!(p.node_count() <= cap);
            assert!(p.node_count() >= 1);
        }
    }

    #[test]
    fn distinct_contexts_get_distinct_nodes() {
        // after 15 the agent always plays 1023 and vice versa
        let acts: Vec<u32> = (0..40).map(|t| if t % 2 == 0 { 15 } else { 1023 }).collect();
        let eps = vec![episode(0, acts, vec![100; 40])];
        let p = init_from_episodes(&eps, 0, &CWS, ObservationBinning::default(), 10).unwrap();
        assert_eq!(p.node_count(), 2);
        let b = ObservationBinning::default().bin(100);
        // from any node, (15, bin) leads to the node that plays 1023
        let j = p.omega_row(0, 0, b).weights().iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
        let row = p.pi_row(j).weights();
        let best = (0..7).max_by(|&x, &y| row[x].total_cmp(&row[y])).unwrap();
        assert_eq!(CWS[best], 1023);
    }

    #[test]
    fn short_episodes_and_bad_input() {
        let eps = vec![episode(0, vec![31], vec![34])];
        let p = init_from_episodes(&eps, 0, &CWS, ObservationBinning::default(), 10).unwrap();
        assert_eq!(p.node_count(), 1);
        assert!(init_from_episodes(&[], 0, &CWS, ObservationBinning::default(), 10).is_err());
        assert!(init_from_episodes(&eps, 1, &CWS, ObservationBinning::default(), 10).is_err());
        assert!(init_from_episodes(&eps, 0, &CWS, ObservationBinning::default(), 0).is_err());
        assert!(init_from_episodes(&eps, 0, &[15], ObservationBinning::default(), 3).is_err());
    }
}
