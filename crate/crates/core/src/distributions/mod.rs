//! Beta, Gamma and Dirichlet machinery: parameter types, samplers,
//! log-densities, expectations of logs, and the truncated stick-breaking map.

mod density;
mod sampling;
mod special;

pub use density::{
    beta_expected_ln, dirichlet_expected_ln, expected_ln_density_beta, expected_ln_density_dirichlet,
    expected_ln_density_gamma, gamma_expected_ln, log_density_beta, log_density_dirichlet,
    log_density_gamma,
};
pub use sampling::{sample_beta, sample_dirichlet, sample_gamma};
pub(crate) use special::psi;
pub use special::{digamma, ln_beta, ln_gamma, log_sum_exp};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the total mass of a [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParams("simplex vector must be non-empty".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidParams(format!("simplex weight {w} outside [0, 1]")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidParams(format!("simplex weights sum to {total}")));
        }
        Ok(Self(weights))
    }

    /// Normalizes non-negative masses into a simplex. A zero total yields the uniform vector.
    pub fn from_masses(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidParams("simplex vector must be non-empty".into()));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidParams(format!("masses must be finite and non-negative: {masses:?}")));
        }
        let total: f64 = masses.iter().sum();
        if total == 0.0 {
            return Ok(Self::uniform(masses.len()));
        }
        Ok(Self(masses.iter().map(|m| m / total).collect()))
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0);
        Self(vec![1.0 / len as f64; len])
    }

    /// All mass on `index`.
    pub fn point(len: usize, index: usize) -> Self {
        let mut w = vec![0.0; len];
        w[index] = 1.0;
        Self(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse-CDF draw of an index given a uniform variate in `[0, 1)`.
    pub fn index_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, w) in self.0.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        // rounding left u above the accumulated total; pick the last positive weight
        self.0.iter().rposition(|w| *w > 0.0).unwrap_or(self.0.len() - 1)
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        // serialized vectors went through decimal text; re-close the simplex on the way in
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("simplex weights sum to {total}")));
        }
        Self::new(v.into_iter().map(|w| w / total).collect())
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(s: SimplexVector) -> Self {
        s.0
    }
}

/// Parameters `(first, second)` of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub first: f64,
    pub second: f64,
}

impl BetaParams {
    pub fn new(first: f64, second: f64) -> Result<Self> {
        if !(first > 0.0 && second > 0.0 && first.is_finite() && second.is_finite()) {
            return Err(Error::InvalidParams(format!("Beta({first}, {second}) needs positive finite parameters")));
        }
        Ok(Self { first, second })
    }

    pub fn mean(&self) -> f64 {
        self.first / (self.first + self.second)
    }
}

/// Shape/rate parameters of a Gamma distribution (mean `shape / rate`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::InvalidParams(format!("Gamma({shape}, {rate}) needs positive finite parameters")));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Maps stick-breaking portions `V_1..V_m` to the weights
/// `p_i = V_i * prod_{j<i} (1 - V_j)`, followed by the leftover mass
/// `prod_j (1 - V_j)` as entry `m + 1`.
pub fn stick_breaking_weights(portions: &[f64]) -> Result<SimplexVector> {
    if let Some(v) = portions.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
        return Err(Error::InvalidParams(format!("stick portion {v} outside (0, 1)")));
    }
    let mut weights = Vec::with_capacity(portions.len() + 1);
    let mut remaining = 1.0;
    for v in portions {
        weights.push(remaining * v);
        remaining *= 1.0 - v;
    }
    // leftover closes the simplex; compensated sum keeps the closure error at rounding level
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for w in &weights {
        let t = sum + w;
        if sum.abs() >= w.abs() {
            comp += (sum - t) + w;
        } else {
            comp += (w - t) + sum;
        }
        sum = t;
    }
    weights.push((1.0 - (sum + comp)).max(0.0));
    Ok(SimplexVector(weights))
}
