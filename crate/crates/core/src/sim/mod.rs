//! Listen-before-talk coexistence simulator.

mod config;
mod engine;
mod episode;
mod reward;

pub use config::{AgentKind, SimConfig};
pub use engine::{
    backoff_counter, sense_slot, AgentState, DecisionOutcome, Phase, Simulator, SlotStatus, SpectrumState,
    SLOT_BUSY_LIMIT_US, SUBFRAME_US,
};
pub use episode::{AgentTrace, Episode, EPISODE_SCHEMA};
pub use reward::{effective_throughput, global_reward, jain_index, local_reward};

/// Fresh simulator state for `config`: clock 0, every agent idle.
pub fn reset(config: &SimConfig) -> crate::Result<SpectrumState> {
    Ok(Simulator::new(config.clone())?.state().clone())
}
