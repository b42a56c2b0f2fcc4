//! Decentralized LTE-LAA / Wi-Fi coexistence on a single unlicensed channel.
//!
//! The crate has two halves:
//!
//! - [`sim`]: a microsecond-resolution listen-before-talk simulator producing
//!   per-agent action/observation histories and Jain-weighted cumulative rewards.
//! - [`vi`]: off-policy learning of per-agent finite state controllers
//!   ([`fsc`]) under stick-breaking priors, with the importance-weighted
//!   empirical value acting as likelihood and coordinate-ascent variational
//!   inference doing the optimization.
//!
//! [`trajectory`] glues the two together (epsilon-greedy collection and
//! JSON-lines persistence) and [`cli`] implements the `coexist` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
mod error;
pub mod fsc;
pub mod sim;
pub mod trajectory;
pub mod vi;

pub use error::{Error, Result};
