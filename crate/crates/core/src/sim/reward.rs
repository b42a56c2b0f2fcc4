//! Throughput, fairness and cumulative reward bookkeeping.

use crate::{Error, Result};

/// Effective throughput in Mbps: delivered bits over the access duration in
/// microseconds (bits per microsecond are megabits per second).
pub fn effective_throughput(payload_bits: u64, duration_us: u64) -> Result<f64> {
    if duration_us == 0 {
        return Err(Error::Domain("throughput over a zero-length duration".into()));
    }
    Ok(payload_bits as f64 / duration_us as f64)
}

/// Jain's index seen by `agent` when its fresh normalized throughput `current`
/// is combined with every other agent's value from its previous access.
///
/// `previous[i]` is agent `i`'s cached value; `previous[agent]` is ignored.
/// An all-zero vector is defined as perfectly fair.
pub fn jain_index(agent: usize, previous: &[f64], current: f64) -> f64 {
    let n = previous.len();
    debug_assert!(agent < n);
    let (mut sum, mut sum_sq) = (current, current * current);
    for (i, x) in previous.iter().enumerate() {
        if i != agent {
            sum += x;
            sum_sq += x * x;
        }
    }
    if sum_sq == 0.0 {
        return 1.0;
    }
    (sum * sum / (n as f64 * sum_sq)).clamp(1.0 / n as f64, 1.0)
}

/// `r_t = r_{t-1} + ln(|J * Th| + 1)`.
pub fn local_reward(previous: f64, throughput: f64, jain: f64) -> f64 {
    previous + (jain * throughput).abs().ln_1p()
}

pub fn global_reward(locals: &[f64]) -> f64 {
    locals.iter().sum()
}
