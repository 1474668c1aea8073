use super::{PerSide, Side, SwapKind, SwapOperation, REL_TOLERANCE};
use serde::{Deserialize, Serialize};

/// One payment channel between `N` and a neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub capacity: f64,
    /// `N`'s own balance in the channel.
    pub local: f64,
    /// The neighbor's balance in the channel.
    pub remote: f64,
    pub pending: Option<SwapOperation>,
}

impl ChannelState {
    pub fn new(capacity: f64, local: f64, remote: f64) -> Self {
        Self {
            capacity,
            local,
            remote,
            pending: None,
        }
    }

    /// Capacity split evenly between the two ends.
    pub fn balanced(capacity: f64) -> Self {
        Self::new(capacity, capacity / 2.0, capacity / 2.0)
    }

    /// Amount held out of both balances by a pending swap-out.
    pub fn locked(&self) -> f64 {
        match &self.pending {
            Some(op) if op.kind == SwapKind::SwapOut => op.amount,
            _ => 0.0,
        }
    }

    pub fn is_busy(&self) -> bool {
        self.pending.is_some()
    }

    /// Residual of `local + remote + locked - capacity`.
    pub fn conservation_residual(&self) -> f64 {
        self.local + self.remote + self.locked() - self.capacity
    }
}

/// The relay node: its two channels and its on-chain funds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub channels: PerSide<ChannelState>,
    pub onchain: f64,
    /// On-chain funds escrowed by pending swap-ins.
    pub onchain_locked: f64,
}

impl NodeState {
    pub fn new(left: ChannelState, right: ChannelState, onchain: f64) -> Self {
        Self {
            channels: PerSide::new(left, right),
            onchain,
            onchain_locked: 0.0,
        }
    }

    pub fn channel(&self, side: Side) -> &ChannelState {
        &self.channels[side]
    }

    pub fn channel_mut(&mut self, side: Side) -> &mut ChannelState {
        &mut self.channels[side]
    }

    /// Everything `N` owns: local balances, on-chain funds, and funds
    /// escrowed by pending swaps.
    pub fn fortune(&self) -> f64 {
        let channels: f64 = Side::BOTH
            .iter()
            .map(|&s| self.channels[s].local + self.channels[s].locked())
            .sum();
        channels + self.onchain + self.onchain_locked
    }

    /// Lists every broken state invariant. Empty when the state is sound.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (side, ch) in self.channels.iter() {
            if ch.local < 0.0 || !ch.local.is_finite() {
                out.push(format!("channel {side}: local balance {} < 0", ch.local));
            }
            if ch.remote < 0.0 || !ch.remote.is_finite() {
                out.push(format!("channel {side}: remote balance {} < 0", ch.remote));
            }
            let residual = ch.conservation_residual();
            if residual.abs() > REL_TOLERANCE * ch.capacity.max(1.0) {
                out.push(format!(
                    "channel {side}: local {} + remote {} + locked {} != capacity {} (residual {residual:e})",
                    ch.local,
                    ch.remote,
                    ch.locked(),
                    ch.capacity
                ));
            }
            if let Some(op) = &ch.pending {
                if op.side != side {
                    out.push(format!("channel {side}: pending swap tagged for {}", op.side));
                }
            }
        }
        if self.onchain < 0.0 || !self.onchain.is_finite() {
            out.push(format!("on-chain balance {} < 0", self.onchain));
        }
        if self.onchain_locked < 0.0 || !self.onchain_locked.is_finite() {
            out.push(format!("on-chain escrow {} < 0", self.onchain_locked));
        }
        let escrow: f64 = self
            .channels
            .iter()
            .filter_map(|(_, ch)| ch.pending.as_ref())
            .filter(|op| op.kind == SwapKind::SwapIn)
            .map(|op| op.escrow)
            .sum();
        if (escrow - self.onchain_locked).abs() > REL_TOLERANCE * escrow.max(1.0) {
            out.push(format!(
                "on-chain escrow {} does not match pending swap-ins {escrow}",
                self.onchain_locked
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fortune_counts_local_and_onchain_only() {
        let state = NodeState::new(
            ChannelState::new(1000.0, 300.0, 700.0),
            ChannelState::new(500.0, 100.0, 400.0),
            250.0,
        );
        assert_eq!(state.fortune(), 650.0);
        assert!(state.invariant_violations().is_empty());
    }

    #[test]
    fn detects_broken_capacity() {
        let state = NodeState::new(
            ChannelState::new(1000.0, 300.0, 600.0),
            ChannelState::balanced(500.0),
            0.0,
        );
        let v = state.invariant_violations();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("channel L"));
    }
}
