use serde::{Deserialize, Serialize};

use super::Hyperparams;
use crate::fsc::FscPolicy;
use crate::{Error, Result};

/// Pseudo-count mass given to the starting policy when seeding a state from it.
pub const INIT_CONCENTRATION: f64 = 10.0;

/// Mean-field factors for one agent.
///
/// ```text
/// q(u_i)      = Beta(delta_i, mu_i)          eta sticks
/// q(V_iao,j)  = Beta(sigma, lambda)          omega sticks, layout ((i*A + a)*O + o)*Z + j
/// q(pi_i)     = Dirichlet(phi_i)             layout i*A + a
/// q(rho)      = Gamma(g, h)
/// q(alpha_iao)= Gamma(a, b)                  layout (i*A + a)*O + o
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub nodes: usize,
    pub actions: usize,
    pub bins: usize,
    pub delta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub phi: Vec<f64>,
    pub g: f64,
    pub h: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl VariationalState {
    /// The state the update equations give with no data.
    pub fn prior(nodes: usize, actions: usize, bins: usize, hyper: &Hyperparams) -> Self {
        let z = nodes as f64;
        let (g, h) = (hyper.e + z, hyper.f);
        let (a, b) = (hyper.c + z, hyper.d);
        let theta = hyper.theta_for(actions).unwrap_or_else(|_| vec![hyper.theta[0]; actions]);
        let rows = nodes * actions * bins;
        Self {
            nodes,
            actions,
            bins,
            delta: vec![1.0; nodes],
            mu: vec![g / h; nodes],
            sigma: vec![1.0; rows * nodes],
            lambda: vec![a / b; rows * nodes],
            phi: (0..nodes).flat_map(|_| theta.iter().copied()).collect(),
            g,
            h,
            a: vec![a; rows],
            b: vec![b; rows],
        }
    }

    /// Factors centred on `policy`: each stick portion `V` implied by the
    /// policy's rows becomes `Beta(s V, s (1 - V))` and each action row adds
    /// `s * pi` to `theta`, with `s = INIT_CONCENTRATION`.
    pub fn from_policy(policy: &FscPolicy, hyper: &Hyperparams) -> Result<Self> {
        let t = policy.tables();
        let mut s = Self::prior(t.nodes, t.actions, t.bins, hyper);
        let theta = hyper.theta_for(t.actions)?;
        let (delta, mu) = stick_params(&t.eta);
        s.delta = delta;
        s.mu = mu;
        for (k, row) in t.omega.chunks(t.nodes).enumerate() {
            let (sig, lam) = stick_params(row);
            s.sigma[k * t.nodes..(k + 1) * t.nodes].copy_from_slice(&sig);
            s.lambda[k * t.nodes..(k + 1) * t.nodes].copy_from_slice(&lam);
        }
        for (i, p) in t.pi.iter().enumerate() {
            s.phi[i] = theta[i % t.actions] + INIT_CONCENTRATION * p;
        }
        Ok(s)
    }

    /// Restriction to the nodes in `keep`; `g` and `a` follow the new node count.
    pub fn pruned(&self, keep: &[usize], hyper: &Hyperparams) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|i| *i >= self.nodes) || keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParams(format!("invalid node selection {keep:?}")));
        }
        let (z, ao) = (self.nodes, self.actions * self.bins);
        let nz = keep.len();
        let mut out = Self {
            nodes: nz,
            delta: keep.iter().map(|i| self.delta[*i]).collect(),
            mu: keep.iter().map(|i| self.mu[*i]).collect(),
            phi: keep.iter().flat_map(|i| self.phi[i * self.actions..(i + 1) * self.actions].iter().copied()).collect(),
            g: hyper.e + nz as f64,
            a: Vec::with_capacity(nz * ao),
            b: Vec::with_capacity(nz * ao),
            sigma: Vec::with_capacity(nz * ao * nz),
            lambda: Vec::with_capacity(nz * ao * nz),
            ..self.clone()
        };
        for i in keep {
            for r in 0..ao {
                let row = i * ao + r;
                out.a.push(hyper.c + nz as f64);
                out.b.push(self.b[row]);
                for j in keep {
                    out.sigma.push(self.sigma[row * z + j]);
                    out.lambda.push(self.lambda[row * z + j]);
                }
            }
        }
        Ok(out)
    }

    /// Shapes agree and every parameter is finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        let (z, rows) = (self.nodes, self.nodes * self.actions * self.bins);
        let shapes = [
            (self.delta.len(), z),
            (self.mu.len(), z),
            (self.phi.len(), z * self.actions),
            (self.sigma.len(), rows * z),
            (self.lambda.len(), rows * z),
            (self.a.len(), rows),
            (self.b.len(), rows),
        ];
        if z == 0 || shapes.iter().any(|(got, want)| got != want) {
            return Err(Error::InvalidParams(format!("inconsistent variational shapes {shapes:?}")));
        }
        let all = self
            .delta
            .iter()
            .chain(&self.mu)
            .chain(&self.phi)
            .chain(&self.sigma)
            .chain(&self.lambda)
            .chain(&self.a)
            .chain(&self.b)
            .chain([&self.g, &self.h]);
        for v in all {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::Numeric(format!("variational parameter {v} is not strictly positive")));
            }
        }
        Ok(())
    }
}

/// Beta factors whose means are the stick portions of `weights`.
fn stick_params(weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut remaining = 1.0;
    let mut first = Vec::with_capacity(weights.len());
    let mut second = Vec::with_capacity(weights.len());
    for w in weights {
        let v = if remaining > 0.0 { (w / remaining).clamp(0.01, 0.99) } else { 0.5 };
        remaining -= w;
        first.push(INIT_CONCENTRATION * v);
        second.push(INIT_CONCENTRATION * (1.0 - v));
    }
    (first, second)
}
