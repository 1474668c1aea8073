//! Action processing for a learning agent.
//!
//! The agent outputs one number per channel in `[-1, 1]`: negative values
//! are a fraction of the local balance to swap out, non-negative values a
//! fraction of the largest sensible swap-in. Amounts below a fraction `rho0`
//! of the channel capacity become no-ops so that "do nothing" has positive
//! probability under a continuous policy.

use super::{Policy, PolicyContext, PolicyError};
use crate::model::{PerSide, Side, StepLedger, SwapDecision, SwapRequest};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MIN_SWAP_FRACTION: f64 = 0.2;

/// An agent action before processing, one coordinate per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawAction(PerSide<f64>);

#[derive(Debug, Clone, PartialEq, Error)]
#[error("raw action coordinate {side} = {value} is outside [-1, 1]")]
pub struct RawActionError {
    pub side: Side,
    pub value: f64,
}

impl RawAction {
    pub fn new(l: f64, r: f64) -> Result<Self, RawActionError> {
        for (side, value) in [(Side::L, l), (Side::R, r)] {
            if !(-1.0..=1.0).contains(&value) {
                return Err(RawActionError { side, value });
            }
        }
        Ok(Self(PerSide::new(l, r)))
    }

    pub fn zero() -> Self {
        Self(PerSide::new(0.0, 0.0))
    }

    pub fn get(&self, side: Side) -> f64 {
        self.0[side]
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.0.l, self.0.r]
    }
}

/// Signed swap range per channel: `lower` is minus the largest swap-out,
/// `upper` the largest swap-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Per-channel swap ranges.
///
/// The joint on-chain budget is split by giving each channel the whole
/// on-chain balance; if both channels then swap in and overdraw it, the
/// engine drops one of them. The swap-in cap also respects the predicted
/// neighbor balance at completion time and the channel capacity.
pub fn action_bounds(ctx: &PolicyContext<'_>) -> PerSide<ActionBounds> {
    let affordable = ctx.fees.max_swap_in(ctx.state.onchain);
    PerSide::from_fn(|side| {
        let ch = ctx.state.channel(side);
        ActionBounds {
            lower: -ch.local,
            upper: ctx.estimates.future_remote[side]
                .min(affordable)
                .min(ch.capacity),
        }
    })
}

/// Maps a raw action to swap requests.
///
/// A swap-out must reach `rho0 * capacity` (inclusive) and a swap-in must
/// exceed it (strict). Swap-outs too small to cover their own fee are
/// dropped as well.
pub fn process_raw_action(raw: &RawAction, ctx: &PolicyContext<'_>, rho0: f64) -> SwapDecision {
    let bounds = action_bounds(ctx);
    let min_out = ctx.fees.min_swap_out();
    SwapDecision::from_fn(|side| {
        let r = raw.get(side);
        let capacity = ctx.state.channel(side).capacity;
        let threshold = rho0 * capacity;
        if r < 0.0 {
            let amount = r.abs() * ctx.state.channel(side).local;
            if amount >= threshold && amount >= min_out {
                SwapRequest::Out(amount)
            } else {
                SwapRequest::NoOp
            }
        } else {
            let amount = r * bounds[side].upper;
            if amount > threshold {
                SwapRequest::In(amount)
            } else {
                SwapRequest::NoOp
            }
        }
    })
}

/// Step reward: fortune change less dropped-transaction fees less a
/// penalty for each swap that failed.
pub fn compute_reward(ledger: &StepLedger, penalty: f64) -> f64 {
    ledger.fortune_change() - ledger.lost_fees - penalty * f64::from(ledger.failed_swaps)
}

type ActionFn = dyn FnMut(&PolicyContext<'_>) -> RawAction + Send;

/// Adapts any source of raw actions into a [`Policy`].
pub struct RawActionPolicy {
    source: Box<ActionFn>,
    rho0: f64,
}

impl RawActionPolicy {
    pub fn new(
        rho0: f64,
        source: impl FnMut(&PolicyContext<'_>) -> RawAction + Send + 'static,
    ) -> Self {
        Self {
            source: Box::new(source),
            rho0,
        }
    }

    /// Always sends the same action.
    pub fn constant(action: RawAction, rho0: f64) -> Self {
        Self::new(rho0, move |_| action)
    }
}

impl Policy for RawActionPolicy {
    fn name(&self) -> &str {
        "raw-action"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError> {
        let raw = (self.source)(ctx);
        Ok(process_raw_action(&raw, ctx, self.rho0))
    }
}
