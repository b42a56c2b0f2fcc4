use super::FscPolicy;
use crate::{Error, Result};

/// Nodes holding less than this fraction of the total occupancy mass are dropped.
pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PruneReport {
    pub before: usize,
    pub after: usize,
    /// Surviving original node indices, in order.
    pub kept: Vec<usize>,
}

/// Indices whose occupancy is at least `epsilon` times the total. The
/// heaviest node always survives.
pub fn surviving_nodes(occupancy: &[f64], epsilon: f64) -> Result<Vec<usize>> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("prune epsilon {epsilon} outside (0, 1)")));
    }
    if occupancy.is_empty() || occupancy.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::Data(format!("occupancy masses must be finite and non-negative: {occupancy:?}")));
    }
    let total: f64 = occupancy.iter().sum();
    let keep: Vec<usize> = (0..occupancy.len()).filter(|&i| total > 0.0 && occupancy[i] >= epsilon * total).collect();
    if keep.is_empty() {
        let best = (0..occupancy.len()).fold(0, |b, i| if occupancy[i] > occupancy[b] { i } else { b });
        return Ok(vec![best]);
    }
    Ok(keep)
}

/// Removes low-occupancy nodes and renormalizes the remaining rows.
pub fn prune(policy: &FscPolicy, occupancy: &[f64], epsilon: f64) -> Result<(FscPolicy, PruneReport)> {
    if occupancy.len() != policy.node_count() {
        return Err(Error::Data(format!(
            "{} occupancy masses for {} nodes",
            occupancy.len(),
            policy.node_count()
        )));
    }
    let kept = surviving_nodes(occupancy, epsilon)?;
    let pruned = policy.restricted(&kept)?;
    let report = PruneReport { before: policy.node_count(), after: kept.len(), kept };
    Ok((pruned, report))
}
