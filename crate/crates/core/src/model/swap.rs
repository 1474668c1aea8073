use super::{le_tol, FeeSchedule, ModelError, NodeState, PerSide, Side, REL_TOLERANCE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SwapKind {
    /// On-chain funds become local channel balance.
    SwapIn,
    /// Local channel balance is moved on-chain.
    SwapOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwapStatus {
    Pending,
    Succeeded,
    FailedRefunded,
}

/// An in-flight or resolved swap on one channel.
///
/// `amount` is what moves inside the channel. For a swap-in that equals the
/// net amount bought; for a swap-out it already includes the fee, so the
/// net amount arriving on-chain is `phi_inverse(amount)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOperation {
    pub kind: SwapKind,
    pub side: Side,
    pub amount: f64,
    pub net_amount: f64,
    pub fee: f64,
    /// On-chain funds held while a swap-in is pending (`amount + fee`).
    pub escrow: f64,
    pub start_time: f64,
    pub complete_time: f64,
    pub status: SwapStatus,
}

/// What to do on one channel at a control epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum SwapRequest {
    #[default]
    NoOp,
    In(f64),
    Out(f64),
}

impl SwapRequest {
    /// Zero-amount requests collapse to `NoOp`.
    pub fn normalized(self) -> Self {
        match self {
            SwapRequest::In(a) | SwapRequest::Out(a) if a == 0.0 => SwapRequest::NoOp,
            other => other,
        }
    }

    pub fn amount(self) -> f64 {
        match self {
            SwapRequest::NoOp => 0.0,
            SwapRequest::In(a) | SwapRequest::Out(a) => a,
        }
    }

    pub fn kind(self) -> Option<SwapKind> {
        match self {
            SwapRequest::NoOp => None,
            SwapRequest::In(_) => Some(SwapKind::SwapIn),
            SwapRequest::Out(_) => Some(SwapKind::SwapOut),
        }
    }

    pub fn is_noop(self) -> bool {
        matches!(self.normalized(), SwapRequest::NoOp)
    }

    /// Signed form: positive for swap-in, negative for swap-out.
    pub fn signed(self) -> f64 {
        match self {
            SwapRequest::NoOp => 0.0,
            SwapRequest::In(a) => a,
            SwapRequest::Out(a) => -a,
        }
    }
}

/// One request per channel. A channel can never ask for a swap-in and a
/// swap-out at once because each side holds a single [`SwapRequest`].
pub type SwapDecision = PerSide<SwapRequest>;

impl SwapDecision {
    pub fn noop() -> Self {
        PerSide::new(SwapRequest::NoOp, SwapRequest::NoOp)
    }
}

/// Rebalancing constraints a decision can break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// Amounts must be finite and non-negative.
    NonNegative,
    /// A swap-out must be large enough to pay its own fee.
    MinSwapOut,
    /// A swap-out cannot exceed the local balance.
    SwapOutBalance,
    /// Swap-ins plus fees must fit in the on-chain balance.
    OnchainBudget,
    /// The channel already has a pending swap.
    ChannelBusy,
}

impl Constraint {
    pub fn as_str(self) -> &'static str {
        match self {
            Constraint::NonNegative => "non_negative",
            Constraint::MinSwapOut => "min_swap_out",
            Constraint::SwapOutBalance => "swap_out_balance",
            Constraint::OnchainBudget => "onchain_budget",
            Constraint::ChannelBusy => "channel_busy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub side: Side,
    pub constraint: Constraint,
}

fn side_violation(
    state: &NodeState,
    side: Side,
    request: SwapRequest,
    fees: &FeeSchedule,
) -> Option<Constraint> {
    let amount = request.amount();
    if !(amount.is_finite() && amount >= 0.0) {
        return Some(Constraint::NonNegative);
    }
    let request = request.normalized();
    if request.is_noop() {
        return None;
    }
    let channel = state.channel(side);
    if channel.is_busy() {
        return Some(Constraint::ChannelBusy);
    }
    match request {
        SwapRequest::Out(a) => {
            if a < fees.min_swap_out() * (1.0 - REL_TOLERANCE * 1e-3) {
                Some(Constraint::MinSwapOut)
            } else if !le_tol(a, channel.local) {
                Some(Constraint::SwapOutBalance)
            } else {
                None
            }
        }
        SwapRequest::In(a) => {
            if !le_tol(fees.phi_unchecked(a), state.onchain) {
                Some(Constraint::OnchainBudget)
            } else {
                None
            }
        }
        SwapRequest::NoOp => None,
    }
}

impl NodeState {
    /// Checks a decision against every rebalancing constraint.
    ///
    /// Returns the normalized decision when it is admissible, otherwise the
    /// list of broken constraints. When each swap-in fits the on-chain
    /// balance alone but not together, the violation is charged to `R`.
    pub fn validate_swap_decision(
        &self,
        decision: &SwapDecision,
        fees: &FeeSchedule,
    ) -> Result<SwapDecision, Vec<Violation>> {
        let (admitted, violations) = self.admissible_decision(decision, fees);
        if violations.is_empty() {
            Ok(admitted)
        } else {
            Err(violations)
        }
    }

    /// Like [`validate_swap_decision`](Self::validate_swap_decision) but
    /// downgrades each offending side to `NoOp` instead of failing.
    pub fn admissible_decision(
        &self,
        decision: &SwapDecision,
        fees: &FeeSchedule,
    ) -> (SwapDecision, Vec<Violation>) {
        let mut out = SwapDecision::noop();
        let mut violations = Vec::new();
        for side in Side::BOTH {
            match side_violation(self, side, decision[side], fees) {
                Some(constraint) => violations.push(Violation { side, constraint }),
                None => out[side] = decision[side].normalized(),
            }
        }
        if let (SwapRequest::In(l), SwapRequest::In(r)) = (out.l, out.r) {
            let total = fees.phi_unchecked(l) + fees.phi_unchecked(r);
            if !le_tol(total, self.onchain) {
                violations.push(Violation {
                    side: Side::R,
                    constraint: Constraint::OnchainBudget,
                });
                out.r = SwapRequest::NoOp;
            }
        }
        (out, violations)
    }

    /// Locks funds for a swap and marks it pending on `side`.
    ///
    /// A swap-in moves `amount + fee` from the on-chain balance into escrow.
    /// A swap-out takes `amount` out of the local balance and holds it in the
    /// channel until completion. Fails without touching the state when the
    /// funds are not there or the channel is busy.
    pub fn begin_swap(
        &mut self,
        side: Side,
        kind: SwapKind,
        amount: f64,
        now: f64,
        fees: &FeeSchedule,
        t_conf: f64,
    ) -> Result<SwapOperation, ModelError> {
        if !(amount.is_finite() && amount > 0.0) {
            return Err(ModelError::NonPositiveSwap(amount));
        }
        if self.channels[side].is_busy() {
            return Err(ModelError::ChannelBusy(side));
        }
        let op = match kind {
            SwapKind::SwapIn => {
                let cost = fees.phi_unchecked(amount);
                if !le_tol(cost, self.onchain) {
                    return Err(ModelError::InsufficientFunds {
                        side,
                        kind,
                        required: cost,
                        available: self.onchain,
                    });
                }
                let escrow = cost.min(self.onchain);
                self.onchain -= escrow;
                self.onchain_locked += escrow;
                SwapOperation {
                    kind,
                    side,
                    amount,
                    net_amount: amount,
                    fee: escrow - amount,
                    escrow,
                    start_time: now,
                    complete_time: now + t_conf,
                    status: SwapStatus::Pending,
                }
            }
            SwapKind::SwapOut => {
                if amount < fees.min_swap_out() * (1.0 - REL_TOLERANCE * 1e-3) {
                    return Err(ModelError::SwapOutBelowMinimum(amount));
                }
                let local = self.channels[side].local;
                if !le_tol(amount, local) {
                    return Err(ModelError::InsufficientFunds {
                        side,
                        kind,
                        required: amount,
                        available: local,
                    });
                }
                let amount = amount.min(local);
                let net = fees.phi_inverse_unchecked(amount).net;
                self.channels[side].local -= amount;
                SwapOperation {
                    kind,
                    side,
                    amount,
                    net_amount: net,
                    fee: amount - net,
                    escrow: 0.0,
                    start_time: now,
                    complete_time: now + t_conf,
                    status: SwapStatus::Pending,
                }
            }
        };
        self.channels[side].pending = Some(op.clone());
        Ok(op)
    }

    /// Resolves the pending swap on `side` at time `now`.
    ///
    /// A swap-in succeeds if the neighbor can forward `amount` at this moment;
    /// otherwise the escrow, fee included, returns on-chain. A swap-out always
    /// succeeds: the net amount lands on-chain and the locked funds move to
    /// the remote side.
    pub fn complete_swap(&mut self, side: Side, now: f64) -> Result<SwapOperation, ModelError> {
        let Some(op) = self.channels[side].pending.as_ref() else {
            return Err(ModelError::NoPendingSwap(side));
        };
        let tol = REL_TOLERANCE * op.complete_time.abs().max(1.0);
        if (now - op.complete_time).abs() > tol {
            return Err(ModelError::CompletionTimeMismatch {
                side,
                expected: op.complete_time,
                now,
            });
        }
        let mut op = self.channels[side].pending.take().expect("checked above");
        match op.kind {
            SwapKind::SwapIn => {
                let channel = &mut self.channels[side];
                if channel.remote >= op.amount {
                    channel.remote -= op.amount;
                    channel.local += op.amount;
                    op.status = SwapStatus::Succeeded;
                } else {
                    self.onchain += op.escrow;
                    op.status = SwapStatus::FailedRefunded;
                }
                self.onchain_locked = self.pending_escrow();
            }
            SwapKind::SwapOut => {
                self.channels[side].remote += op.amount;
                self.onchain += op.net_amount;
                op.status = SwapStatus::Succeeded;
            }
        }
        Ok(op)
    }

    fn pending_escrow(&self) -> f64 {
        Side::BOTH
            .iter()
            .filter_map(|&s| self.channels[s].pending.as_ref())
            .filter(|op| op.kind == SwapKind::SwapIn)
            .map(|op| op.escrow)
            .sum()
    }
}
