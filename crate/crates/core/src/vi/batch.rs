use crate::fsc::ObservationBinning;
use crate::sim::Episode;
use crate::{Error, Result};

/// One agent's history in index form.
#[derive(Debug, Clone)]
pub struct AgentHistory {
    pub actions: Vec<usize>,
    /// `obs[t]` is the bin observed after `actions[t]`.
    pub obs: Vec<usize>,
    /// `sum_{tau <= t} ln p(a_tau | h_tau, behavior)`.
    pub ln_behavior: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PreparedEpisode {
    pub rewards: Vec<f64>,
    pub agents: Vec<AgentHistory>,
}

/// Episodes converted to action indices and observation bins.
#[derive(Debug, Clone)]
pub struct Batch {
    pub episodes: Vec<PreparedEpisode>,
    pub agents: usize,
    pub gamma: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Batch {
    pub fn new(episodes: &[Episode], action_set: &[u32], binning: ObservationBinning, gamma: f64) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Data("empty episode batch".into()));
        }
        let (r_min, r_max) = min_max(episodes);
        let agents = episodes[0].agents.len();
        let mut prepared = Vec::with_capacity(episodes.len());
        for ep in episodes {
            ep.validate(Some(action_set))?;
            if ep.agents.len() != agents {
                return Err(Error::Data(format!("episode {} has {} agents, expected {agents}", ep.k, ep.agents.len())));
            }
            let histories = ep
                .agents
                .iter()
                .map(|tr| AgentHistory {
                    actions: tr.actions.iter().map(|cw| action_set.iter().position(|c| c == cw).unwrap()).collect(),
                    obs: tr.obs_us.iter().map(|o| binning.bin(*o)).collect(),
                    ln_behavior: tr
                        .pi_behavior
                        .iter()
                        .scan(0.0, |acc, p| {
                            *acc += p.ln();
                            Some(*acc)
                        })
                        .collect(),
                })
                .collect();
            prepared.push(PreparedEpisode { rewards: ep.rewards.iter().map(|r| *r as f64).collect(), agents: histories });
        }
        Ok(Self { episodes: prepared, agents, gamma, r_min, r_max })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Fails when every reward is the same.
    pub fn check_reward_range(&self) -> Result<()> {
        if self.r_max > self.r_min {
            Ok(())
        } else {
            Err(Error::Data(format!("every reward equals {}; the value cannot be normalized", self.r_min)))
        }
    }

    /// `ln gamma^t` with `0^0 = 1`.
    pub(crate) fn ln_discount(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            t as f64 * self.gamma.ln()
        }
    }
}

fn min_max(episodes: &[Episode]) -> (f64, f64) {
    episodes
        .iter()
        .flat_map(|e| e.rewards.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(*r as f64), hi.max(*r as f64)))
}

/// `(R_min, R_max)` over every recorded reward; a constant batch is rejected.
pub fn reward_bounds(episodes: &[Episode]) -> Result<(f64, f64)> {
    let (lo, hi) = min_max(episodes);
    if lo > hi {
        return Err(Error::Data("no rewards in the batch".into()));
    }
    if lo == hi {
        return Err(Error::Data(format!("every reward equals {lo}; the value cannot be normalized")));
    }
    Ok((lo, hi))
}
