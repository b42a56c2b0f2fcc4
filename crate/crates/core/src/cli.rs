//! The `coexist` command line: `collect`, `learn`, `evaluate` and `report`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 numeric failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fsc::{init_policies, FscPolicy, ObservationBinning, PruneReport};
use crate::sim::SimConfig;
use crate::trajectory::{self, BehaviorPolicy, EpsilonSchedule};
use crate::vi::{self, Batch, Hyperparams, LearnOptions};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Caps the worker pool size when set.
pub const THREADS_ENV: &str = "SPECSHARE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "coexist", version, about = "LTE-LAA / Wi-Fi coexistence: simulate, learn and evaluate FSC policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll out an epsilon-greedy behavior policy and write episodes as JSON lines.
    Collect(CollectArgs),
    /// Fit per-agent controllers to an episode file.
    Learn(LearnArgs),
    /// Off-policy value on recorded episodes plus fresh rollouts for throughput and fairness.
    Evaluate(EvaluateArgs),
    /// Split a learning trace into per-figure CSV files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    /// Simulator configuration (JSON). Defaults to the built-in two-eNB / two-AP scenario.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output episode file.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of episodes K.
    #[arg(long, default_value_t = 10)]
    pub num_episodes: usize,
    /// Decisions per agent T. Defaults to the configured horizon.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Behavior controllers (JSON array, one per agent). Random controllers when omitted.
    #[arg(long)]
    pub policies: Option<PathBuf>,
    /// Nodes per random controller.
    #[arg(long, default_value_t = 3)]
    pub nodes: usize,
    /// Exploration preset: a (0.9 to 0.5) or b (0.9 to 0.2) over 40 rounds.
    #[arg(long, default_value = "a")]
    pub epsilon_schedule: String,
    /// Learning round, selects epsilon from the schedule.
    #[arg(long, default_value_t = 0)]
    pub round: usize,
    /// Also write the behavior controllers here.
    #[arg(long)]
    pub save_policies: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub episodes: PathBuf,
    /// Simulator configuration; only its contention windows are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hyper-parameters (JSON). Defaults to c = e = 0.1, d = f = 100, gamma = 0.9.
    #[arg(long)]
    pub hyper: Option<PathBuf>,
    /// Learner options (JSON); --max-iters and --tol override it.
    #[arg(long)]
    pub options: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Starting controllers. Built from the episodes when omitted.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Node cap for controllers built from the episodes.
    #[arg(long, default_value_t = 10)]
    pub max_nodes: usize,
    #[arg(long, default_value_t = ObservationBinning::default().bins)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Controllers to evaluate (JSON array, one per agent).
    #[arg(long)]
    pub policies: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Episodes for the off-policy value.
    #[arg(long)]
    pub episodes: PathBuf,
    /// Discount factor. Defaults to the configured one.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Evaluate the epsilon-mixed controllers instead, e.g. to score a behavior policy.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Rollouts used for throughput and fairness, with the same epsilon.
    #[arg(long, default_value_t = 20)]
    pub rollouts: usize,
    #[arg(long, default_value_t = 50)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the summary here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `learn`.
    #[arg(long)]
    pub trace_dir: PathBuf,
    /// Defaults to the trace directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer")))?;
    // a second call in the same process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Collect(a) => collect(a),
        Command::Learn(a) => learn(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig> {
    match path {
        Some(p) => SimConfig::from_json_file(p),
        None => Ok(SimConfig::default()),
    }
}

pub fn load_policies(path: &Path) -> Result<Vec<FscPolicy>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let p: Vec<FscPolicy> = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if p.is_empty() {
        return Err(Error::Data(format!("{}: no policies", path.display())));
    }
    Ok(p)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn collect(a: &CollectArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let horizon = a.horizon.unwrap_or(config.horizon);
    let schedule = EpsilonSchedule::preset(&a.epsilon_schedule)?;
    let policies = match &a.policies {
        Some(p) => load_policies(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            (0..config.agent_count())
                .map(|_| FscPolicy::random(config.cw_set.clone(), ObservationBinning::default(), a.nodes, 1.0, &mut rng))
                .collect::<Result<_>>()?
        }
    };
    let behavior = BehaviorPolicy::new(policies, schedule.at(a.round), schedule)?;
    let episodes = trajectory::collect(&config, &behavior, a.num_episodes, horizon, a.seed)?;
    if let Some(p) = &a.save_policies {
        write_json(p, &behavior.policies)?;
    }
    info!("behavior epsilon {}", behavior.epsilon);
    trajectory::save(&episodes, &a.out)?;
    info!("wrote {} episodes of {horizon} decisions to {}", episodes.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct LearnSummary<'a> {
    episodes: usize,
    agents: usize,
    iterations: usize,
    converged: bool,
    initial_elbo: f64,
    final_elbo: f64,
    initial_value: f64,
    final_value: f64,
    options: &'a LearnOptions,
    hyper: &'a Hyperparams,
    prune: &'a [PruneReport],
}

fn learn(a: &LearnArgs) -> Result<()> {
    let episodes = trajectory::load(&a.episodes)?;
    let hyper = match &a.hyper {
        Some(p) => Hyperparams::from_json_file(p)?,
        None => Hyperparams::default(),
    };
    let mut options = match &a.options {
        Some(p) => LearnOptions::from_json_file(p)?,
        None => LearnOptions::default(),
    };
    if let Some(m) = a.max_iters {
        options.max_iters = m;
    }
    if let Some(t) = a.tol {
        options.tol = t;
    }
    if let Some(s) = a.seed {
        options.seed = s;
    }
    let initial = match &a.init {
        Some(p) => load_policies(p)?,
        None => {
            let cw_set = load_config(a.config.as_deref())?.cw_set;
            init_policies(&episodes, &cw_set, ObservationBinning::new(a.bins)?, a.max_nodes)?
        }
    };
    let out = vi::learn(&episodes, &initial, &hyper, &options)?;
    fs::create_dir_all(&a.out)?;
    out.trace.write_csv(a.out.join("trace.csv"))?;
    write_json(&a.out.join("state.json"), &out.states)?;
    write_json(&a.out.join("initial_policies.json"), &initial)?;
    write_json(&a.out.join("policies.json"), &out.policies)?;
    write_json(&a.out.join("pruned_policies.json"), &out.pruned)?;
    let summary = LearnSummary {
        episodes: episodes.len(),
        agents: initial.len(),
        iterations: out.trace.len(),
        converged: out.converged,
        initial_elbo: out.initial_elbo,
        final_elbo: *out.trace.elbo.last().expect("at least one iteration"),
        initial_value: out.initial_value,
        final_value: *out.trace.discounted_value.last().expect("at least one iteration"),
        options: &options,
        hyper: &hyper,
        prune: &out.prune_reports,
    };
    write_json(&a.out.join("summary.json"), &summary)?;
    info!("{} iterations, converged: {}", summary.iterations, summary.converged);
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct AgentSummary {
    pub agent: usize,
    /// Delivered bits over elapsed time, pooled across rollouts.
    pub throughput_mbps: f64,
    /// Mean of the per-access throughputs that enter the reward.
    pub access_throughput_mbps: f64,
    /// Mean per-access fairness index seen by this agent.
    pub jain: f64,
    pub collisions_per_episode: f64,
}

#[derive(Debug, Serialize)]
pub struct EvaluationSummary {
    pub gamma: f64,
    pub epsilon: f64,
    pub episodes: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Importance-weighted discounted value on the recorded episodes.
    pub discounted_value: f64,
    /// Same value with every importance ratio fixed to one.
    pub behavior_value: f64,
    pub rollouts: usize,
    pub horizon: usize,
    pub agents: Vec<AgentSummary>,
    /// Fairness index over the agents' pooled throughputs.
    pub jain_index: f64,
    pub total_throughput_mbps: f64,
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let config = load_config(a.config.as_deref())?;
    let policies = load_policies(&a.policies)?;
    let episodes = trajectory::load(&a.episodes)?;
    let gamma = a.gamma.unwrap_or(config.gamma);
    let summary = evaluation_summary(&config, &policies, &episodes, gamma, a.epsilon, a.rollouts, a.horizon, a.seed)?;
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    match &a.out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluation_summary(
    config: &SimConfig,
    policies: &[FscPolicy],
    episodes: &[crate::sim::Episode],
    gamma: f64,
    epsilon: f64,
    rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvaluationSummary> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma {gamma} outside [0, 1)")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let first = policies.first().ok_or_else(|| Error::Data("no policies".into()))?;
    let batch = Batch::new(episodes, first.action_set(), first.binning(), gamma)?;
    let (r_min, r_max) = vi::reward_bounds(episodes)?;
    let tables: Vec<_> = policies.iter().map(|p| p.tables().epsilon_mixed(epsilon)).collect();
    let discounted_value = vi::empirical_value(&batch, r_min, &tables, None)?;
    let behavior_value = behavior_value(&batch, r_min);

    let actor = if epsilon > 0.0 {
        BehaviorPolicy::new(policies.to_vec(), epsilon, EpsilonSchedule { start: epsilon, end: epsilon, iterations: 0 })?
    } else {
        BehaviorPolicy::greedy(policies.to_vec())?
    };
    let runs = trajectory::collect_with_metrics(config, &actor, rollouts, horizon, seed)?;
    let n = policies.len();
    let k = runs.len() as f64;
    let agents: Vec<AgentSummary> = (0..n)
        .map(|i| AgentSummary {
            agent: i,
            throughput_mbps: runs.iter().map(|(_, m)| m.delivered_bits[i] as f64).sum::<f64>()
                / runs.iter().map(|(_, m)| m.wall_us[i] as f64).sum::<f64>(),
            access_throughput_mbps: runs.iter().map(|(_, m)| m.access_throughput_mbps[i]).sum::<f64>() / k,
            jain: runs.iter().map(|(_, m)| m.jain[i]).sum::<f64>() / k,
            collisions_per_episode: runs.iter().map(|(_, m)| m.collisions[i] as f64).sum::<f64>() / k,
        })
        .collect();
    Ok(EvaluationSummary {
        gamma,
        epsilon,
        episodes: episodes.len(),
        r_min,
        r_max,
        discounted_value,
        behavior_value,
        rollouts,
        horizon,
        jain_index: jain(&agents.iter().map(|a| a.throughput_mbps).collect::<Vec<_>>()),
        total_throughput_mbps: agents.iter().map(|a| a.throughput_mbps).sum(),
        agents,
    })
}

/// `(sum x)^2 / (N sum x^2)`; one for an all-zero allocation.
fn jain(x: &[f64]) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        return 1.0;
    }
    x.iter().sum::<f64>().powi(2) / (x.len() as f64 * sq)
}

/// `(1/K) sum_kt gamma^t (r_kt - R_min)`.
fn behavior_value(batch: &Batch, r_min: f64) -> f64 {
    let total: f64 = batch
        .episodes
        .iter()
        .flat_map(|e| e.rewards.iter().enumerate())
        .map(|(t, r)| batch.gamma.powi(t as i32) * (r - r_min))
        .sum();
    total / batch.len() as f64
}

/// Names of the files written by `report`.
pub const REPORT_FILES: [&str; 4] = ["elbo.csv", "nodes.csv", "value.csv", "hyper_gh.csv"];

fn report(a: &ReportArgs) -> Result<()> {
    let trace = a.trace_dir.join("trace.csv");
    let text = fs::read_to_string(&trace).map_err(|e| Error::Data(format!("{}: {e}", trace.display())))?;
    let out = a.out.clone().unwrap_or_else(|| a.trace_dir.clone());
    fs::create_dir_all(&out)?;
    for (name, body) in REPORT_FILES.iter().zip(split_trace(&text)?) {
        fs::write(out.join(name), body)?;
    }
    Ok(())
}

/// Splits a trace CSV into ELBO, node-count, value and g/h tables, each keyed by iteration.
pub fn split_trace(text: &str) -> Result<[String; 4]> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| Error::Data("empty trace".into()))?.split(',').collect();
    if header.len() < 3 || header[..3] != ["iteration", "elbo", "discounted_value"] {
        return Err(Error::Data(format!("unexpected trace header {header:?}")));
    }
    let pick = |pred: &dyn Fn(&str) -> bool| -> Vec<usize> {
        (0..header.len()).filter(|&i| i == 0 || pred(header[i])).collect()
    };
    let groups = [
        pick(&|h| h == "elbo"),
        pick(&|h| h.starts_with("nodes_agent_")),
        pick(&|h| h == "discounted_value"),
        pick(&|h| h.starts_with("g_") || h.starts_with("h_")),
    ];
    let rows: Vec<Vec<&str>> = lines.filter(|l| !l.is_empty()).map(|l| l.split(',').collect()).collect();
    if let Some(r) = rows.iter().find(|r| r.len() != header.len()) {
        return Err(Error::Data(format!("trace row {r:?} has {} fields, header has {}", r.len(), header.len())));
    }
    Ok(groups.map(|cols| {
        let mut s = cols.iter().map(|&i| header[i]).collect::<Vec<_>>().join(",");
        s.push('\n');
        for r in &rows {
            s.push_str(&cols.iter().map(|&i| r[i]).collect::<Vec<_>>().join(","));
            s.push('\n');
        }
        s
    }))
}
