//! Coordinate-ascent variational inference for stick-breaking FSC policies,
//! with the importance-weighted empirical value as likelihood.

mod batch;
mod elbo;
mod estep;
mod learn;
mod state;
mod updates;

pub use batch::{reward_bounds, AgentHistory, Batch, PreparedEpisode};
pub use elbo::{elbo, prior_terms};
pub use estep::{empirical_value, expectation, log_empirical_value, reweighted, EStep, ReweightedRewards, Statistics};
pub use learn::{learn, learn_with, ElboTrace, LearnOptions, LearnOutcome};
pub use state::{VariationalState, INIT_CONCENTRATION};
pub use updates::{update_q_alpha, update_q_pi, update_q_rho, update_q_u, update_q_v, RATE_FLOOR};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Prior hyper-parameters: `alpha ~ Gamma(c, d)` for every omega stick
/// family, `rho ~ Gamma(e, f)` for eta, `pi ~ Dirichlet(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    /// One entry per action; a single entry is broadcast.
    pub theta: Vec<f64>,
    pub gamma: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { c: 0.1, d: 100.0, e: 0.1, f: 100.0, theta: vec![1.0], gamma: 0.9 }
    }
}

impl Hyperparams {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let h: Hyperparams = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c", self.c), ("d", self.d), ("e", self.e), ("f", self.f)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("hyper-parameter {name} = {v} must be positive")));
            }
        }
        if self.theta.is_empty() || self.theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!("theta must be non-empty and positive: {:?}", self.theta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        Ok(())
    }

    /// Dirichlet prior over `actions` actions.
    pub fn theta_for(&self, actions: usize) -> Result<Vec<f64>> {
        match self.theta.len() {
            1 => Ok(vec![self.theta[0]; actions]),
            n if n == actions => Ok(self.theta.clone()),
            n => Err(Error::Config(format!("theta has {n} entries for {actions} actions"))),
        }
    }
}
