use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Version tag carried by every serialized episode.
pub const EPISODE_SCHEMA: u32 = 1;

/// One agent's recorded decisions.
///
/// `actions[t]` is the contention window chosen at epoch `t`; `obs_us[t]` is
/// the sensing delay observed after that access, i.e. the observation that
/// precedes decision `t + 1`. `pi_behavior[t]` is the probability the behavior
/// policy gave `actions[t]` given the agent's history up to `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentTrace {
    pub actions: Vec<u32>,
    pub obs_us: Vec<u64>,
    pub obs_bin: Vec<usize>,
    pub pi_behavior: Vec<f64>,
}

impl AgentTrace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// A trajectory `D^k`: joint action/observation histories plus the global
/// cumulative reward at each epoch, rounded to integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Episode {
    pub schema: u32,
    pub k: usize,
    pub agents: Vec<AgentTrace>,
    pub rewards: Vec<i64>,
}

impl Episode {
    pub fn new(k: usize, agents: Vec<AgentTrace>, rewards: Vec<i64>) -> Result<Self> {
        let ep = Self { schema: EPISODE_SCHEMA, k, agents, rewards };
        ep.validate(None)?;
        Ok(ep)
    }

    /// Number of decision epochs `T_k`.
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Checks sequence lengths, the schema tag and, when given, membership of
    /// every action in `cw_set`.
    pub fn validate(&self, cw_set: Option<&[u32]>) -> Result<()> {
        let fail = |m: String| Err(Error::Data(format!("episode {}: {m}", self.k)));
        if self.schema != EPISODE_SCHEMA {
            return fail(format!("schema {} (expected {EPISODE_SCHEMA})", self.schema));
        }
        if self.agents.is_empty() {
            return fail("no agents".into());
        }
        let t = self.rewards.len();
        if t == 0 {
            return fail("no epochs".into());
        }
        for (n, a) in self.agents.iter().enumerate() {
            let lens = [a.actions.len(), a.obs_us.len(), a.obs_bin.len(), a.pi_behavior.len()];
            if lens.iter().any(|l| *l != t) {
                return fail(format!("agent {n} sequence lengths {lens:?} differ from {t} rewards"));
            }
            if let Some(p) = a.pi_behavior.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
                return fail(format!("agent {n} behavior probability {p} outside (0, 1]"));
            }
            if let Some(cw_set) = cw_set {
                if let Some(cw) = a.actions.iter().find(|cw| !cw_set.contains(cw)) {
                    return fail(format!("agent {n} action {cw} not in {cw_set:?}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(t: usize) -> AgentTrace {
        AgentTrace {
            actions: vec![15; t],
            obs_us: vec![34; t],
            obs_bin: vec![5; t],
            pi_behavior: vec![0.5; t],
        }
    }

    #[test]
    fn consistent_lengths_pass() {
        let ep = Episode::new(0, vec![trace(3), trace(3)], vec![0, 1, 2]).unwrap();
        assert_eq!(ep.len(), 3);
        ep.validate(Some(&[15, 31])).unwrap();
        assert!(ep.validate(Some(&[31])).is_err());
    }

    #[test]
    fn inconsistent_lengths_fail() {
        assert!(Episode::new(0, vec![trace(3), trace(2)], vec![0, 1, 2]).is_err());
        assert!(Episode::new(0, vec![trace(0)], vec![]).is_err());
        let mut bad = trace(2);
        bad.pi_behavior[1] = 0.0;
        assert!(Episode::new(0, vec![bad], vec![0, 0]).is_err());
    }
}
