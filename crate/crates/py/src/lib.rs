//! Python bindings: simulator configuration, FSC policies, episode
//! collection and variational policy learning.

use coexist::fsc::{self, ObservationBinning};
use coexist::sim::{self as csim};
use coexist::trajectory::{self, BehaviorPolicy, EpsilonSchedule};
use coexist::vi::{self, Batch, Hyperparams, LearnOptions};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

create_exception!(coexist_py, NumericError, PyException);

fn err(e: coexist::Error) -> PyErr {
    match e {
        coexist::Error::Numeric(_) => NumericError::new_err(e.to_string()),
        coexist::Error::Io(io) => io.into(),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "SimConfig", from_py_object)]
#[derive(Clone)]
pub struct SimConfig {
    inner: csim::SimConfig,
}

#[pymethods]
impl SimConfig {
    /// Defaults, optionally overridden by a JSON object.
    #[new]
    #[pyo3(signature = (json = None))]
    fn new(json: Option<&str>) -> PyResult<Self> {
        let inner = match json {
            Some(s) => serde_json::from_str(s).map_err(json_err)?,
            None => csim::SimConfig::default(),
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Self { inner: csim::SimConfig::from_json_file(path).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn agent_count(&self) -> usize {
        self.inner.agent_count()
    }

    #[getter]
    fn cw_set(&self) -> Vec<u32> {
        self.inner.cw_set.clone()
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn fair_share_mbps(&self) -> f64 {
        self.inner.fair_share_mbps()
    }

    fn __repr__(&self) -> String {
        format!("SimConfig(lte={}, wifi={})", self.inner.lte_count, self.inner.wifi_count)
    }
}

#[pyclass(name = "FscPolicy", from_py_object)]
#[derive(Clone)]
pub struct FscPolicy {
    inner: fsc::FscPolicy,
}

#[pymethods]
impl FscPolicy {
    #[staticmethod]
    #[pyo3(signature = (cw_set, nodes, concentration = 1.0, seed = 0, bins = 21))]
    fn random(cw_set: Vec<u32>, nodes: usize, concentration: f64, seed: u64, bins: usize) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let binning = ObservationBinning::new(bins).map_err(err)?;
        let inner = fsc::FscPolicy::random(cw_set, binning, nodes, concentration, &mut rng).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(s).map_err(json_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn action_set(&self) -> Vec<u32> {
        self.inner.action_set().to_vec()
    }

    #[getter]
    fn eta(&self) -> Vec<f64> {
        self.inner.eta().weights().to_vec()
    }

    /// Action distribution of one node.
    fn pi(&self, node: usize) -> PyResult<Vec<f64>> {
        if node >= self.inner.node_count() {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(self.inner.pi_row(node).weights().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("FscPolicy(nodes={}, actions={})", self.inner.node_count(), self.inner.action_set().len())
    }
}

#[pyclass(name = "Episode", from_py_object)]
#[derive(Clone)]
pub struct Episode {
    inner: csim::Episode,
}

impl Episode {
    fn trace(&self, agent: usize) -> PyResult<&csim::AgentTrace> {
        self.inner.agents.get(agent).ok_or_else(|| PyValueError::new_err(format!("agent {agent} out of range")))
    }
}

#[pymethods]
impl Episode {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn agents(&self) -> usize {
        self.inner.agents.len()
    }

    #[getter]
    fn rewards(&self) -> Vec<i64> {
        self.inner.rewards.clone()
    }

    fn actions(&self, agent: usize) -> PyResult<Vec<u32>> {
        Ok(self.trace(agent)?.actions.clone())
    }

    fn obs_us(&self, agent: usize) -> PyResult<Vec<u64>> {
        Ok(self.trace(agent)?.obs_us.clone())
    }

    fn pi_behavior(&self, agent: usize) -> PyResult<Vec<f64>> {
        Ok(self.trace(agent)?.pi_behavior.clone())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Episode(k={}, agents={}, T={})", self.inner.k, self.inner.agents.len(), self.inner.len())
    }
}

#[pyclass(name = "LearnResult")]
pub struct LearnResult {
    #[pyo3(get)]
    elbo: Vec<f64>,
    #[pyo3(get)]
    discounted_value: Vec<f64>,
    #[pyo3(get)]
    nodes: Vec<Vec<usize>>,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    initial_elbo: f64,
    trace_csv: String,
    policies: Vec<fsc::FscPolicy>,
    pruned: Vec<fsc::FscPolicy>,
}

fn wrap(p: &[fsc::FscPolicy]) -> Vec<FscPolicy> {
    p.iter().map(|inner| FscPolicy { inner: inner.clone() }).collect()
}

fn unwrap_policies(p: &[FscPolicy]) -> Vec<fsc::FscPolicy> {
    p.iter().map(|x| x.inner.clone()).collect()
}

fn unwrap_episodes(e: &[Episode]) -> Vec<csim::Episode> {
    e.iter().map(|x| x.inner.clone()).collect()
}

#[pymethods]
impl LearnResult {
    #[getter]
    fn policies(&self) -> Vec<FscPolicy> {
        wrap(&self.policies)
    }

    #[getter]
    fn pruned(&self) -> Vec<FscPolicy> {
        wrap(&self.pruned)
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.elbo.len()
    }

    fn trace_csv(&self) -> String {
        self.trace_csv.clone()
    }
}

/// Behavior rollouts with an epsilon-greedy mixture over `policies`.
#[pyfunction]
#[pyo3(signature = (config, policies, epsilon, num_episodes, horizon = None, seed = 0))]
fn collect(
    py: Python<'_>,
    config: &SimConfig,
    policies: Vec<FscPolicy>,
    epsilon: f64,
    num_episodes: usize,
    horizon: Option<usize>,
    seed: u64,
) -> PyResult<Vec<Episode>> {
    let behavior = BehaviorPolicy::new(unwrap_policies(&policies), epsilon, EpsilonSchedule::A).map_err(err)?;
    let horizon = horizon.unwrap_or(config.inner.horizon);
    let cfg = config.inner.clone();
    let eps = py.detach(move || trajectory::collect(&cfg, &behavior, num_episodes, horizon, seed)).map_err(err)?;
    Ok(eps.into_iter().map(|inner| Episode { inner }).collect())
}

#[pyfunction]
fn save_episodes(episodes: Vec<Episode>, path: &str) -> PyResult<()> {
    trajectory::save(&unwrap_episodes(&episodes), path).map_err(err)
}

#[pyfunction]
fn load_episodes(path: &str) -> PyResult<Vec<Episode>> {
    Ok(trajectory::load(path).map_err(err)?.into_iter().map(|inner| Episode { inner }).collect())
}

/// One starting controller per agent, built from the observed histories.
#[pyfunction]
#[pyo3(signature = (episodes, cw_set, max_nodes = 10, bins = 21))]
fn init_policies(episodes: Vec<Episode>, cw_set: Vec<u32>, max_nodes: usize, bins: usize) -> PyResult<Vec<FscPolicy>> {
    let binning = ObservationBinning::new(bins).map_err(err)?;
    let p = fsc::init_policies(&unwrap_episodes(&episodes), &cw_set, binning, max_nodes).map_err(err)?;
    Ok(wrap(&p))
}

#[pyfunction]
#[pyo3(signature = (episodes, initial, hyper_json = None, max_iters = 200, tol = 1e-5, prune_epsilon = 1e-3))]
fn learn(
    py: Python<'_>,
    episodes: Vec<Episode>,
    initial: Vec<FscPolicy>,
    hyper_json: Option<&str>,
    max_iters: usize,
    tol: f64,
    prune_epsilon: f64,
) -> PyResult<LearnResult> {
    let hyper: Hyperparams = match hyper_json {
        Some(s) => serde_json::from_str(s).map_err(json_err)?,
        None => Hyperparams::default(),
    };
    hyper.validate().map_err(err)?;
    let options = LearnOptions { max_iters, tol, prune_epsilon, ..LearnOptions::default() };
    options.validate().map_err(err)?;
    let (eps, init) = (unwrap_episodes(&episodes), unwrap_policies(&initial));
    let out = py.detach(move || vi::learn(&eps, &init, &hyper, &options)).map_err(err)?;
    Ok(LearnResult {
        trace_csv: out.trace.to_csv(),
        elbo: out.trace.elbo,
        discounted_value: out.trace.discounted_value,
        nodes: out.trace.nodes,
        converged: out.converged,
        initial_elbo: out.initial_elbo,
        policies: out.policies,
        pruned: out.pruned,
    })
}

/// Importance-weighted discounted value of `policies` on behavior data.
#[pyfunction]
#[pyo3(signature = (episodes, policies, gamma = 0.9))]
fn empirical_value(episodes: Vec<Episode>, policies: Vec<FscPolicy>, gamma: f64) -> PyResult<f64> {
    let first = policies.first().ok_or_else(|| PyValueError::new_err("no policies"))?;
    let (cws, binning) = (first.inner.action_set().to_vec(), first.inner.binning());
    let batch = Batch::new(&unwrap_episodes(&episodes), &cws, binning, gamma).map_err(err)?;
    let tables: Vec<_> = policies.iter().map(|p| p.inner.tables()).collect();
    vi::empirical_value(&batch, batch.r_min, &tables, None).map_err(err)
}

#[pyfunction]
fn digamma(x: f64) -> PyResult<f64> {
    coexist::distributions::digamma(x).map_err(err)
}

#[pyfunction]
fn ln_gamma(x: f64) -> f64 {
    coexist::distributions::ln_gamma(x)
}

#[pymodule]
fn coexist_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SimConfig>()?;
    m.add_class::<FscPolicy>()?;
    m.add_class::<Episode>()?;
    m.add_class::<LearnResult>()?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add_function(wrap_pyfunction!(collect, m)?)?;
    m.add_function(wrap_pyfunction!(save_episodes, m)?)?;
    m.add_function(wrap_pyfunction!(load_episodes, m)?)?;
    m.add_function(wrap_pyfunction!(init_policies, m)?)?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_value, m)?)?;
    m.add_function(wrap_pyfunction!(digamma, m)?)?;
    m.add_function(wrap_pyfunction!(ln_gamma, m)?)?;
    Ok(())
}
