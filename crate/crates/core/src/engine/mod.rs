//! Event-driven simulation of the relay node.

pub mod arrivals;
pub mod event;
mod sim;

pub use arrivals::{AmountDist, ArrivalProcess, ArrivalStream, StreamSeeds, Timing};
pub use event::{event_order, Event, EventKind, EventQueue};
pub use sim::{Horizon, SimConfig, SimError, Simulation};
