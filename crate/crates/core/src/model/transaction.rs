use super::{FeeSchedule, NodeState, Side};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    LtoR,
    RtoL,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::LtoR, Direction::RtoL];

    /// The neighbor the payment enters from.
    pub fn source(self) -> Side {
        match self {
            Direction::LtoR => Side::L,
            Direction::RtoL => Side::R,
        }
    }

    pub fn sink(self) -> Side {
        self.source().other()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::LtoR => "L->R",
            Direction::RtoL => "R->L",
        }
    }
}

/// A payment arriving at the relay node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub direction: Direction,
    pub amount: f64,
    pub arrival_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxOutcome {
    pub success: bool,
    pub relay_fee_earned: f64,
    pub lost_fee: f64,
}

impl NodeState {
    /// Relays `tx` if both hops have enough balance, all or nothing.
    ///
    /// A payment of `a` from the source needs `a` on the source's side of
    /// the incoming channel and `a - f(a)` on `N`'s side of the outgoing
    /// channel. Bounds are inclusive. A payment whose fee exceeds the amount
    /// cannot be forwarded and fails.
    pub fn process_transaction(&mut self, tx: &Transaction, fees: &FeeSchedule) -> TxOutcome {
        debug_assert!(tx.amount > 0.0);
        let fee = fees.relay_fee_unchecked(tx.amount);
        let forwarded = tx.amount - fee;
        let src = tx.direction.source();
        let dst = tx.direction.sink();

        let feasible = forwarded >= 0.0
            && tx.amount <= self.channels[src].remote
            && forwarded <= self.channels[dst].local;
        if !feasible {
            return TxOutcome {
                success: false,
                relay_fee_earned: 0.0,
                lost_fee: fee,
            };
        }

        let incoming = &mut self.channels[src];
        incoming.remote -= tx.amount;
        incoming.local += tx.amount;
        let outgoing = &mut self.channels[dst];
        outgoing.local -= forwarded;
        outgoing.remote += forwarded;
        TxOutcome {
            success: true,
            relay_fee_earned: fee,
            lost_fee: 0.0,
        }
    }
}
