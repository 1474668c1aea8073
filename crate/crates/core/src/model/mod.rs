//! Domain types and accounting for a relay node `N` with one channel to `L`
//! and one channel to `R`.
//!
//! All currency amounts are `f64` dollars and all times are `f64` minutes.
//! Balance naming follows the node's point of view: `local` is what `N`
//! owns in a channel, `remote` is what the neighbor owns.

mod fees;
mod ledger;
mod node;
mod swap;
mod transaction;

pub use fees::{FeeSchedule, PhiInverse};
pub use ledger::{LedgerAccumulator, StepLedger};
pub use node::{ChannelState, NodeState};
pub use swap::{
    Constraint, SwapDecision, SwapKind, SwapOperation, SwapRequest, SwapStatus, Violation,
};
pub use transaction::{Direction, Transaction, TxOutcome};

use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Relative tolerance used when comparing accumulated currency amounts.
pub const REL_TOLERANCE: f64 = 1e-9;

/// One of the node's two neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    L,
    R,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::L, Side::R];

    pub fn other(self) -> Side {
        match self {
            Side::L => Side::R,
            Side::R => Side::L,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::L => "L",
            Side::R => "R",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A value for each side, indexable by [`Side`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerSide<T> {
    pub l: T,
    pub r: T,
}

impl<T> PerSide<T> {
    pub fn new(l: T, r: T) -> Self {
        Self { l, r }
    }

    pub fn from_fn(mut f: impl FnMut(Side) -> T) -> Self {
        Self {
            l: f(Side::L),
            r: f(Side::R),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Side, &T) -> U) -> PerSide<U> {
        PerSide {
            l: f(Side::L, &self.l),
            r: f(Side::R, &self.r),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Side, &T)> {
        [(Side::L, &self.l), (Side::R, &self.r)].into_iter()
    }
}

impl<T> Index<Side> for PerSide<T> {
    type Output = T;

    fn index(&self, side: Side) -> &T {
        match side {
            Side::L => &self.l,
            Side::R => &self.r,
        }
    }
}

impl<T> IndexMut<Side> for PerSide<T> {
    fn index_mut(&mut self, side: Side) -> &mut T {
        match side {
            Side::L => &mut self.l,
            Side::R => &mut self.r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("amount must be finite and non-negative, got {0}")]
    InvalidAmount(f64),

    #[error("swap amount must be positive, got {0}")]
    NonPositiveSwap(f64),

    #[error("channel {0} already has a pending swap")]
    ChannelBusy(Side),

    #[error("insufficient funds for {kind:?} on {side}: required {required}, available {available}")]
    InsufficientFunds {
        side: Side,
        kind: SwapKind,
        required: f64,
        available: f64,
    },

    #[error("swap-out of {0} does not cover its own fee")]
    SwapOutBelowMinimum(f64),

    #[error("no pending swap on channel {0}")]
    NoPendingSwap(Side),

    #[error("swap on {side} completes at {expected}, not {now}")]
    CompletionTimeMismatch { side: Side, expected: f64, now: f64 },

    #[error("step accounting identity violated: fortune change {fortune_change} + losses {losses} != arriving fees {arriving} (residual {residual})")]
    LedgerIdentity {
        fortune_change: f64,
        losses: f64,
        arriving: f64,
        residual: f64,
    },
}

pub(crate) fn check_amount(amount: f64) -> Result<f64, ModelError> {
    if amount.is_finite() && amount >= 0.0 {
        Ok(amount)
    } else {
        Err(ModelError::InvalidAmount(amount))
    }
}

/// `a <= b` allowing for rounding relative to the magnitude of the operands.
pub(crate) fn le_tol(a: f64, b: f64) -> bool {
    a <= b + REL_TOLERANCE * 1e-3 * a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_side_indexing() {
        let mut p = PerSide::new(1, 2);
        assert_eq!(p[Side::L], 1);
        p[Side::R] = 5;
        assert_eq!(p.r, 5);
        assert_eq!(Side::L.other(), Side::R);
        let doubled = p.map(|_, v| v * 2);
        assert_eq!(doubled, PerSide::new(2, 10));
    }
}
