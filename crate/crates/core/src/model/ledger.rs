use super::{ModelError, SwapOperation, SwapStatus, TxOutcome, REL_TOLERANCE};
use serde::{Deserialize, Serialize};

/// Accounting for one control interval `(t_i, t_{i+1}]`.
///
/// `fortune_change()` is the fortune increase `D` and `losses()` is the fee
/// cost `L`. Their sum is the relay fee on everything that arrived, whatever
/// the node did.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepLedger {
    pub relay_fees_earned: f64,
    pub lost_fees: f64,
    pub swap_fees_paid: f64,
    pub failed_swaps: u32,
    pub fortune_before: f64,
    pub fortune_after: f64,
    pub total_arriving_fees: f64,
}

impl StepLedger {
    pub fn fortune_change(&self) -> f64 {
        self.fortune_after - self.fortune_before
    }

    pub fn losses(&self) -> f64 {
        self.lost_fees + self.swap_fees_paid
    }

    /// `D + L - arriving fees`; zero up to rounding.
    pub fn identity_residual(&self) -> f64 {
        self.fortune_change() + self.losses() - self.total_arriving_fees
    }

    /// Scale against which the identity residual is judged.
    pub fn identity_scale(&self) -> f64 {
        self.fortune_before
            .abs()
            .max(self.fortune_after.abs())
            .max(self.total_arriving_fees.abs())
            .max(1.0)
    }

    pub fn check_identity(&self) -> Result<(), ModelError> {
        let residual = self.identity_residual();
        if residual.abs() <= REL_TOLERANCE * self.identity_scale() {
            Ok(())
        } else {
            Err(ModelError::LedgerIdentity {
                fortune_change: self.fortune_change(),
                losses: self.losses(),
                arriving: self.total_arriving_fees,
                residual,
            })
        }
    }
}

/// Running totals for the interval currently open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerAccumulator {
    ledger: StepLedger,
}

impl LedgerAccumulator {
    pub fn open(fortune_before: f64) -> Self {
        Self {
            ledger: StepLedger {
                fortune_before,
                ..StepLedger::default()
            },
        }
    }

    pub fn record_transaction(&mut self, outcome: &TxOutcome) {
        self.ledger.relay_fees_earned += outcome.relay_fee_earned;
        self.ledger.lost_fees += outcome.lost_fee;
        self.ledger.total_arriving_fees += outcome.relay_fee_earned + outcome.lost_fee;
    }

    /// Books a resolved swap. Fees are paid only by swaps that went through;
    /// a refunded swap-in costs nothing but counts as a failure.
    pub fn record_swap(&mut self, op: &SwapOperation) {
        match op.status {
            SwapStatus::Succeeded => self.ledger.swap_fees_paid += op.fee,
            SwapStatus::FailedRefunded => self.ledger.failed_swaps += 1,
            SwapStatus::Pending => {}
        }
    }

    pub fn current(&self) -> &StepLedger {
        &self.ledger
    }

    /// Closes the interval and checks the accounting identity.
    pub fn close(self, fortune_after: f64) -> Result<StepLedger, ModelError> {
        let ledger = StepLedger {
            fortune_after,
            ..self.ledger
        };
        ledger.check_identity()?;
        Ok(ledger)
    }
}
