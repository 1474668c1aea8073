//! Rebalancing policies.
//!
//! A policy sees a [`PolicyContext`] at every control epoch and returns a
//! [`SwapDecision`]. The engine validates the decision and downgrades any
//! side that breaks a constraint to `NoOp` before starting swaps.

mod autoloop;
mod loopmax;
mod rebel;

pub use autoloop::{Autoloop, AutoloopParams};
pub use loopmax::{Loopmax, LoopmaxParams};
pub use rebel::{
    action_bounds, compute_reward, process_raw_action, ActionBounds, RawAction, RawActionError,
    RawActionPolicy, DEFAULT_MIN_SWAP_FRACTION,
};

use crate::estimators::EstimateSnapshot;
use crate::model::{FeeSchedule, NodeState, StepLedger, SwapDecision};
use thiserror::Error;

/// Everything a policy may look at when deciding.
#[derive(Debug, Clone, Copy)]
pub struct PolicyContext<'a> {
    pub step: u64,
    pub now: f64,
    pub state: &'a NodeState,
    pub estimates: &'a EstimateSnapshot,
    pub t_check: f64,
    pub t_conf: f64,
    pub fees: &'a FeeSchedule,
    /// Ledger of the interval that just closed, if any.
    pub last_step: Option<&'a StepLedger>,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("agent error: {0}")]
    Agent(String),

    #[error("replay diverged at step {step}: {reason}")]
    Divergence { step: u64, reason: String },
}

pub trait Policy {
    fn name(&self) -> &str;

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError>;

    /// Called once after the last step closes. `ctx.last_step` holds the
    /// final ledger when at least one step ran.
    fn finish(&mut self, _ctx: &PolicyContext<'_>) -> Result<(), PolicyError> {
        Ok(())
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError> {
        (**self).decide(ctx)
    }

    fn finish(&mut self, ctx: &PolicyContext<'_>) -> Result<(), PolicyError> {
        (**self).finish(ctx)
    }
}

/// Never rebalances.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoRebalancing;

impl Policy for NoRebalancing {
    fn name(&self) -> &str {
        "none"
    }

    fn decide(&mut self, _ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError> {
        Ok(SwapDecision::noop())
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::model::ChannelState;

    pub struct Fixture {
        pub state: NodeState,
        pub estimates: EstimateSnapshot,
        pub fees: FeeSchedule,
        pub t_check: f64,
        pub t_conf: f64,
    }

    impl Fixture {
        pub fn new(local: f64, remote: f64, onchain: f64) -> Self {
            let ch = ChannelState::new(local + remote, local, remote);
            Self {
                state: NodeState::new(ch.clone(), ch, onchain),
                estimates: EstimateSnapshot::default(),
                fees: FeeSchedule::proportional(0.01, 0.005, 2.0),
                t_check: 10.0,
                t_conf: 10.0,
            }
        }

        pub fn ctx(&self) -> PolicyContext<'_> {
            PolicyContext {
                step: 1,
                now: 10.0,
                state: &self.state,
                estimates: &self.estimates,
                t_check: self.t_check,
                t_conf: self.t_conf,
                fees: &self.fees,
                last_step: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::Fixture;
    use super::*;

    #[test]
    fn none_never_swaps() {
        for (local, remote) in [(500.0, 500.0), (0.0, 1000.0), (1000.0, 0.0)] {
            let fx = Fixture::new(local, remote, 1000.0);
            assert_eq!(NoRebalancing.decide(&fx.ctx()).unwrap(), SwapDecision::noop());
        }
    }
}
