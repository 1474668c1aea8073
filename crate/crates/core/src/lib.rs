//! Discrete-event simulation of a relay node with two payment channels that
//! rebalances them through submarine swaps.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: balances, fees, transaction relaying, swap lifecycle and the
//!   per-step accounting ledger.
//! - [`estimators`]: running demand statistics and future-balance predictions.
//! - [`policy`]: the rebalancing policies and the learning-agent action
//!   processing.
//! - [`engine`]: the event queue, arrival processes and simulation loop.
//! - [`bridge`]: the line-delimited protocol that lets an external agent
//!   drive the simulation.
//! - [`trace`]: per-step metrics, CSV files and the trace validator.
//! - [`experiment`]: configuration, replications and sweeps.

pub mod bridge;
pub mod engine;
pub mod estimators;
pub mod experiment;
pub mod model;
pub mod policy;
pub mod trace;

pub use model::*;
