use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::{
    elbo, empirical_value, expectation, update_q_alpha, update_q_pi, update_q_rho, update_q_u, update_q_v, Batch,
    EStep, Hyperparams, VariationalState,
};
use crate::fsc::{point_estimate, prune, surviving_nodes, FscPolicy, FscTables, PruneReport, DEFAULT_PRUNE_EPSILON};
use crate::sim::Episode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnOptions {
    pub max_iters: usize,
    /// Stop once `|ELBO_i - ELBO_{i-1}| < tol * |ELBO_{i-1}|`.
    pub tol: f64,
    /// Occupancy fraction below which a node counts as pruned.
    pub prune_epsilon: f64,
    /// Carried into reports; the sweep itself is deterministic.
    pub seed: u64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self { max_iters: 200, tol: 1e-5, prune_epsilon: DEFAULT_PRUNE_EPSILON, seed: 0 }
    }
}

impl LearnOptions {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let o: LearnOptions = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol {} must be positive", self.tol)));
        }
        if !(self.prune_epsilon > 0.0 && self.prune_epsilon < 1.0) {
            return Err(Error::Config(format!("prune_epsilon {} outside (0, 1)", self.prune_epsilon)));
        }
        Ok(())
    }
}

/// Per-iteration history of a run. Every series has one entry per iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTrace {
    pub elbo: Vec<f64>,
    /// `V^(D)` of the row-normalized point estimate.
    pub discounted_value: Vec<f64>,
    /// Nodes per agent holding at least `prune_epsilon` of the occupancy mass.
    pub nodes: Vec<Vec<usize>>,
    pub g: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    /// Total mass of the node posterior used in the iteration.
    pub qz_normalization: Vec<f64>,
}

impl ElboTrace {
    pub fn len(&self) -> usize {
        self.elbo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elbo.is_empty()
    }

    pub fn agents(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }

    /// Columns `iteration, elbo, discounted_value, nodes_agent_1..N, g_1..N, h_1..N`.
    pub fn to_csv(&self) -> String {
        let n = self.agents();
        let mut out = String::from("iteration,elbo,discounted_value");
        for prefix in ["nodes_agent_", "g_", "h_"] {
            for a in 1..=n {
                write!(out, ",{prefix}{a}").unwrap();
            }
        }
        out.push('\n');
        for i in 0..self.len() {
            write!(out, "{},{},{}", i + 1, self.elbo[i], self.discounted_value[i]).unwrap();
            for v in &self.nodes[i] {
                write!(out, ",{v}").unwrap();
            }
            for v in self.g[i].iter().chain(&self.h[i]) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub states: Vec<VariationalState>,
    pub estimates: Vec<FscTables>,
    /// Row-normalized point estimates.
    pub policies: Vec<FscPolicy>,
    /// `policies` with low-occupancy nodes removed.
    pub pruned: Vec<FscPolicy>,
    pub prune_reports: Vec<PruneReport>,
    pub trace: ElboTrace,
    /// ELBO and value of the starting state, before any update.
    pub initial_elbo: f64,
    pub initial_value: f64,
    pub converged: bool,
}

fn sweep(state: &mut VariationalState, stats: &super::Statistics, hyper: &Hyperparams) -> Result<()> {
    update_q_pi(state, stats, hyper)?;
    update_q_v(state, stats);
    update_q_u(state, stats);
    update_q_alpha(state, hyper);
    update_q_rho(state, hyper);
    state.validate()
}

fn normalized_value(batch: &Batch, tables: &[FscTables]) -> Result<f64> {
    let proper: Vec<FscTables> = tables.iter().map(FscTables::normalized).collect();
    empirical_value(batch, batch.r_min, &proper, None)
}

/// Coordinate ascent from `initial` policies until the relative ELBO change
/// drops below `options.tol` or `options.max_iters` sweeps have run.
///
/// Each sweep refreshes `Theta~`, recomputes node marginals and weights, updates
/// `q(pi)`, `q(V)`, `q(u)`, `q(alpha)` and `q(rho)` in that order, and evaluates
/// the ELBO.
pub fn learn(
    episodes: &[Episode],
    initial: &[FscPolicy],
    hyper: &Hyperparams,
    options: &LearnOptions,
) -> Result<LearnOutcome> {
    learn_with(episodes, initial, hyper, options, |_, _, _| {})
}

/// [`learn`] that also hands every iteration's updated states, and the
/// expectation step they were fitted to, to `observe`.
pub fn learn_with(
    episodes: &[Episode],
    initial: &[FscPolicy],
    hyper: &Hyperparams,
    options: &LearnOptions,
    mut observe: impl FnMut(usize, &[VariationalState], &EStep),
) -> Result<LearnOutcome> {
    hyper.validate()?;
    options.validate()?;
    let first = initial.first().ok_or_else(|| Error::Data("no starting policies".into()))?;
    let (action_set, binning) = (first.action_set().to_vec(), first.binning());
    if initial.iter().any(|p| p.action_set() != action_set || p.binning() != binning) {
        return Err(Error::Data("starting policies disagree on actions or observation bins".into()));
    }
    let batch = Batch::new(episodes, &action_set, binning, hyper.gamma)?;
    batch.check_reward_range()?;
    if batch.agents != initial.len() {
        return Err(Error::Data(format!("{} policies for {} agents", initial.len(), batch.agents)));
    }

    let mut states = initial.iter().map(|p| VariationalState::from_policy(p, hyper)).collect::<Result<Vec<_>>>()?;
    let mut tables: Vec<FscTables> = states.iter().map(point_estimate).collect();
    let mut estep = expectation(&batch, &tables)?;
    let initial_elbo = elbo(&states, hyper, &estep, &tables)?;
    let initial_value = normalized_value(&batch, &tables)?;
    info!("initial ELBO {initial_elbo:.6}, value {initial_value:.6}");

    let mut trace = ElboTrace::default();
    let mut previous = initial_elbo;
    let mut converged = false;
    for it in 1..=options.max_iters {
        for (state, stats) in states.iter_mut().zip(&estep.stats) {
            sweep(state, stats, hyper)?;
        }
        observe(it, &states, &estep);
        let next: Vec<FscTables> = states.iter().map(point_estimate).collect();
        let value = elbo(&states, hyper, &estep, &next)?;
        trace.elbo.push(value);
        trace.discounted_value.push(normalized_value(&batch, &next)?);
        trace.qz_normalization.push(estep.qz_normalization);
        trace.nodes.push(
            estep
                .stats
                .iter()
                .map(|s| surviving_nodes(&s.occupancy(), options.prune_epsilon).map(|k| k.len()))
                .collect::<Result<_>>()?,
        );
        trace.g.push(states.iter().map(|s| s.g).collect());
        trace.h.push(states.iter().map(|s| s.h).collect());
        let change = (value - previous).abs() / previous.abs().max(f64::MIN_POSITIVE);
        debug!("iteration {it}: ELBO {value:.8} (relative change {change:.3e})");
        previous = value;
        tables = next;
        if change < options.tol {
            converged = true;
            break;
        }
        estep = expectation(&batch, &tables)?;
    }
    info!("{} after {} iterations, ELBO {previous:.6}", if converged { "converged" } else { "stopped" }, trace.len());

    let policies = tables
        .iter()
        .map(|t| FscPolicy::from_tables(action_set.clone(), binning, t))
        .collect::<Result<Vec<_>>>()?;
    let mut pruned = Vec::with_capacity(policies.len());
    let mut prune_reports = Vec::with_capacity(policies.len());
    for (p, s) in policies.iter().zip(&estep.stats) {
        let (q, r) = prune(p, &s.occupancy(), options.prune_epsilon)?;
        pruned.push(q);
        prune_reports.push(r);
    }
    Ok(LearnOutcome {
        states,
        estimates: tables,
        policies,
        pruned,
        prune_reports,
        trace,
        initial_elbo,
        initial_value,
        converged,
    })
}
