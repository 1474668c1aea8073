//! Empirical demand statistics.
//!
//! The node tracks, per direction, how much value arrived, how much of it
//! would reach the far side after the relay fee, and how much actually went
//! through. Dividing by elapsed time gives rates; the rates feed the
//! net-drift and future-balance predictions used by the policies.
//!
//! Every arrival is recorded, including payments dropped for lack of
//! balance anywhere along the two hops. All rates are zero at time zero.

use crate::model::{Direction, FeeSchedule, NodeState, PerSide, Side, Transaction};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowTotals {
    /// Total arriving amount.
    pub arrived: f64,
    /// Arriving amount net of the relay fee.
    pub arrived_after_fee: f64,
    /// Amount that was relayed successfully.
    pub succeeded: f64,
}

impl FlowTotals {
    fn add(&mut self, other: &FlowTotals) {
        self.arrived += other.arrived;
        self.arrived_after_fee += other.arrived_after_fee;
        self.succeeded += other.succeeded;
    }

    fn sub(&mut self, other: &FlowTotals) {
        self.arrived -= other.arrived;
        self.arrived_after_fee -= other.arrived_after_fee;
        self.succeeded -= other.succeeded;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct WindowEntry {
    time: f64,
    direction: Direction,
    flow: FlowTotals,
}

/// Cumulative per-direction flow totals, optionally restricted to a
/// trailing time window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemandEstimates {
    l_to_r: FlowTotals,
    r_to_l: FlowTotals,
    window: Option<f64>,
    recent: VecDeque<WindowEntry>,
}

/// Rates computed at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimateSnapshot {
    /// Net drift of each neighbor's balance, currency/minute. The drift of
    /// `N`'s local balance in the same channel is its negation.
    pub remote_drift: PerSide<f64>,
    /// Successful L->R volume per minute.
    pub success_l_to_r: f64,
    /// Successful R->L volume per minute.
    pub success_r_to_l: f64,
    /// Predicted neighbor balances one confirmation time ahead.
    pub future_remote: PerSide<f64>,
}

impl EstimateSnapshot {
    /// Net drift of `N`'s local balance in the channel with `side`.
    pub fn local_drift(&self, side: Side) -> f64 {
        -self.remote_drift[side]
    }
}

impl DemandEstimates {
    pub fn new() -> Self {
        Self::default()
    }

    /// Restricts the statistics to the last `minutes` of history.
    pub fn with_window(minutes: f64) -> Self {
        Self {
            window: Some(minutes),
            ..Self::default()
        }
    }

    pub fn window(&self) -> Option<f64> {
        self.window
    }

    pub fn totals(&self, direction: Direction) -> &FlowTotals {
        match direction {
            Direction::LtoR => &self.l_to_r,
            Direction::RtoL => &self.r_to_l,
        }
    }

    fn totals_mut(&mut self, direction: Direction) -> &mut FlowTotals {
        match direction {
            Direction::LtoR => &mut self.l_to_r,
            Direction::RtoL => &mut self.r_to_l,
        }
    }

    pub fn record_arrival(&mut self, tx: &Transaction, success: bool, fees: &FeeSchedule) {
        let flow = FlowTotals {
            arrived: tx.amount,
            arrived_after_fee: tx.amount - fees.relay_fee_unchecked(tx.amount),
            succeeded: if success { tx.amount } else { 0.0 },
        };
        self.totals_mut(tx.direction).add(&flow);
        if self.window.is_some() {
            self.recent.push_back(WindowEntry {
                time: tx.arrival_time,
                direction: tx.direction,
                flow,
            });
        }
    }

    /// Drops history older than the window. No-op for full-history mode.
    pub fn advance(&mut self, now: f64) {
        let Some(window) = self.window else { return };
        while let Some(front) = self.recent.front() {
            if front.time >= now - window {
                break;
            }
            let entry = self.recent.pop_front().expect("front exists");
            self.totals_mut(entry.direction).sub(&entry.flow);
        }
    }

    fn span(&self, now: f64) -> f64 {
        match self.window {
            Some(w) => now.min(w),
            None => now,
        }
    }

    /// Net drift of the neighbors' balances `(L, R)` in currency/minute.
    ///
    /// `L`'s balance gains what arrives from `R` after fees and loses what
    /// `L` sends; symmetrically for `R`.
    pub fn net_demand(&self, now: f64) -> PerSide<f64> {
        let span = self.span(now);
        if span <= 0.0 {
            return PerSide::new(0.0, 0.0);
        }
        PerSide::new(
            (self.r_to_l.arrived_after_fee - self.l_to_r.arrived) / span,
            (self.l_to_r.arrived_after_fee - self.r_to_l.arrived) / span,
        )
    }

    /// Successful volume per minute `(L->R, R->L)`.
    pub fn success_rates(&self, now: f64) -> (f64, f64) {
        let span = self.span(now);
        if span <= 0.0 {
            return (0.0, 0.0);
        }
        (self.l_to_r.succeeded / span, self.r_to_l.succeeded / span)
    }

    pub fn snapshot(&self, state: &NodeState, now: f64, t_conf: f64, fees: &FeeSchedule) -> EstimateSnapshot {
        let (s_lr, s_rl) = self.success_rates(now);
        EstimateSnapshot {
            remote_drift: self.net_demand(now),
            success_l_to_r: s_lr,
            success_r_to_l: s_rl,
            future_remote: future_balance_refined(state, s_lr, s_rl, t_conf, fees),
        }
    }
}

/// Remote balance after `t_conf` minutes of linear drift, clamped to
/// `[0, capacity]`.
pub fn future_balance_simple(remote: f64, remote_drift: f64, capacity: f64, t_conf: f64) -> f64 {
    (remote + remote_drift * t_conf).min(capacity).max(0.0)
}

/// Time a flow at `rate` can run before it exhausts either balance, capped
/// at `horizon`. A zero rate contributes nothing.
fn flow_duration(rate: f64, horizon: f64, first: f64, second: f64) -> f64 {
    if rate <= 0.0 {
        return 0.0;
    }
    horizon.min(first / rate).min(second / rate)
}

/// Predicted neighbor balances `(b_LN, b_RN)` after `t_conf` minutes.
///
/// Each direction's successful rate keeps flowing for the whole confirmation
/// time or until one of the two balances on its path runs out, whichever
/// comes first. Inflows arrive net of the proportional relay fee.
pub fn future_balance_refined(
    state: &NodeState,
    success_l_to_r: f64,
    success_r_to_l: f64,
    t_conf: f64,
    fees: &FeeSchedule,
) -> PerSide<f64> {
    let l = state.channel(Side::L);
    let r = state.channel(Side::R);
    let (b_ln, b_nl, b_nr, b_rn) = (l.remote, l.local, r.local, r.remote);
    let lr_time = flow_duration(success_l_to_r, t_conf, b_ln, b_nr);
    let rl_time = flow_duration(success_r_to_l, t_conf, b_rn, b_nl);
    let keep = 1.0 - fees.prop;

    let future_ln = b_ln - success_l_to_r * lr_time + keep * success_r_to_l * rl_time;
    let future_rn = b_rn - success_r_to_l * rl_time + keep * success_l_to_r * lr_time;
    PerSide::new(
        future_ln.min(l.capacity).max(0.0),
        future_rn.min(r.capacity).max(0.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelState;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fees(prop: f64) -> FeeSchedule {
        FeeSchedule::proportional(prop, 0.005, 2.0)
    }

    fn tx(direction: Direction, amount: f64, t: f64) -> Transaction {
        Transaction {
            direction,
            amount,
            arrival_time: t,
        }
    }

    #[test]
    fn accumulation() {
        let mut est = DemandEstimates::new();
        est.record_arrival(&tx(Direction::LtoR, 100.0, 1.0), true, &fees(0.01));
        assert_eq!(est.totals(Direction::LtoR).arrived, 100.0);
        assert_eq!(est.totals(Direction::LtoR).succeeded, 100.0);
        est.record_arrival(&tx(Direction::LtoR, 40.0, 2.0), false, &fees(0.01));
        assert_eq!(est.totals(Direction::LtoR).arrived, 140.0);
        assert_eq!(est.totals(Direction::LtoR).succeeded, 100.0);

        let mut two = DemandEstimates::new();
        two.record_arrival(&tx(Direction::RtoL, 30.0, 1.0), true, &fees(0.0));
        two.record_arrival(&tx(Direction::RtoL, 70.0, 1.5), true, &fees(0.0));
        assert_eq!(two.totals(Direction::RtoL).arrived, 100.0);
    }

    #[test]
    fn net_demand_examples() {
        let mut est = DemandEstimates::new();
        est.record_arrival(&tx(Direction::LtoR, 100.0, 1.0), true, &fees(0.01));
        let d = est.net_demand(100.0);
        assert_relative_eq!(d.l, -1.0, max_relative = 1e-12);
        assert_relative_eq!(d.r, 0.99, max_relative = 1e-12);

        assert_eq!(DemandEstimates::new().net_demand(50.0), PerSide::new(0.0, 0.0));
        assert_eq!(est.net_demand(0.0), PerSide::new(0.0, 0.0));

        let mut sym = DemandEstimates::new();
        sym.record_arrival(&tx(Direction::LtoR, 100.0, 1.0), true, &fees(0.0));
        sym.record_arrival(&tx(Direction::RtoL, 100.0, 2.0), true, &fees(0.0));
        assert_eq!(sym.net_demand(10.0), PerSide::new(0.0, 0.0));
    }

    #[test]
    fn simple_future_balance_examples() {
        assert_eq!(future_balance_simple(100.0, -5.0, 1000.0, 10.0), 50.0);
        assert_eq!(future_balance_simple(100.0, -20.0, 1000.0, 10.0), 0.0);
        assert_eq!(future_balance_simple(100.0, 0.0, 1000.0, 10.0), 100.0);
        assert_eq!(future_balance_simple(900.0, 50.0, 1000.0, 10.0), 1000.0);
    }

    #[test]
    fn success_rate_examples() {
        let mut est = DemandEstimates::new();
        est.record_arrival(&tx(Direction::LtoR, 200.0, 1.0), true, &fees(0.01));
        est.record_arrival(&tx(Direction::LtoR, 300.0, 2.0), true, &fees(0.01));
        assert_eq!(est.success_rates(100.0), (5.0, 0.0));
        assert_eq!(DemandEstimates::new().success_rates(10.0), (0.0, 0.0));

        let mut dropped = DemandEstimates::new();
        dropped.record_arrival(&tx(Direction::RtoL, 50.0, 1.0), false, &fees(0.01));
        assert_eq!(dropped.success_rates(10.0), (0.0, 0.0));
    }

    fn state(b_ln: f64, b_nl: f64, b_nr: f64, b_rn: f64) -> NodeState {
        NodeState::new(
            ChannelState::new(b_ln + b_nl, b_nl, b_ln),
            ChannelState::new(b_nr + b_rn, b_nr, b_rn),
            0.0,
        )
    }

    #[test]
    fn refined_future_balance_drains_until_depletion() {
        let s = state(100.0, 900.0, 200.0, 800.0);
        let b = future_balance_refined(&s, 10.0, 0.0, 10.0, &fees(0.01));
        assert_eq!(b.l, 0.0);
        // R side receives the L->R flow net of the fee for the full 10 min
        assert_relative_eq!(b.r, 800.0 + 0.99 * 100.0, max_relative = 1e-12);
    }

    #[test]
    fn refined_future_balance_with_zero_rates_is_current() {
        let s = state(100.0, 900.0, 200.0, 800.0);
        let b = future_balance_refined(&s, 0.0, 0.0, 10.0, &fees(0.01));
        assert_eq!(b, PerSide::new(100.0, 800.0));
    }

    #[test]
    fn sliding_window_forgets_old_arrivals() {
        let mut est = DemandEstimates::with_window(10.0);
        est.record_arrival(&tx(Direction::LtoR, 100.0, 1.0), true, &fees(0.0));
        est.record_arrival(&tx(Direction::LtoR, 50.0, 15.0), true, &fees(0.0));
        est.advance(20.0);
        assert_eq!(est.totals(Direction::LtoR).arrived, 50.0);
        assert_eq!(est.success_rates(20.0).0, 5.0);
        // before the window fills, the divisor is elapsed time
        let mut early = DemandEstimates::with_window(10.0);
        early.record_arrival(&tx(Direction::LtoR, 20.0, 1.0), true, &fees(0.0));
        early.advance(4.0);
        assert_eq!(early.success_rates(4.0).0, 5.0);
    }

    fn arb_state() -> impl Strategy<Value = NodeState> {
        (1.0f64..2000.0, 0.0f64..1.0, 1.0f64..2000.0, 0.0f64..1.0).prop_map(|(cl, fl, cr, fr)| {
            NodeState::new(
                ChannelState::new(cl, cl * fl, cl * (1.0 - fl)),
                ChannelState::new(cr, cr * fr, cr * (1.0 - fr)),
                0.0,
            )
        })
    }

    proptest! {
        #[test]
        fn net_demand_antisymmetry(a in 0.0f64..1e4, b in 0.0f64..1e4, now in 0.1f64..1e4) {
            let mut est = DemandEstimates::new();
            est.record_arrival(&tx(Direction::LtoR, a.max(1e-3), 0.0), true, &fees(0.01));
            est.record_arrival(&tx(Direction::RtoL, b.max(1e-3), 0.0), false, &fees(0.01));
            let snap = EstimateSnapshot { remote_drift: est.net_demand(now), ..Default::default() };
            for side in Side::BOTH {
                prop_assert_eq!(snap.remote_drift[side] + snap.local_drift(side), 0.0);
            }
        }

        #[test]
        fn equal_zero_fee_flows_cancel(amounts in prop::collection::vec(0.01f64..100.0, 1..20), now in 0.1f64..100.0) {
            let mut est = DemandEstimates::new();
            for a in &amounts {
                est.record_arrival(&tx(Direction::LtoR, *a, 0.0), true, &fees(0.0));
                est.record_arrival(&tx(Direction::RtoL, *a, 0.0), false, &fees(0.0));
            }
            prop_assert_eq!(est.net_demand(now), PerSide::new(0.0, 0.0));
        }

        #[test]
        fn future_balances_stay_in_range(
            s in arb_state(),
            s_lr in 0.0f64..500.0,
            s_rl in 0.0f64..500.0,
            t in 0.0f64..60.0,
            drift in -500.0f64..500.0,
        ) {
            let b = future_balance_refined(&s, s_lr, s_rl, t, &fees(0.01));
            for side in Side::BOTH {
                prop_assert!(b[side] >= 0.0 && b[side] <= s.channel(side).capacity);
                let simple = future_balance_simple(s.channel(side).remote, drift, s.channel(side).capacity, t);
                prop_assert!(simple >= 0.0 && simple <= s.channel(side).capacity);
            }
        }

        #[test]
        fn future_balances_monotone_in_remote(
            s in arb_state(),
            extra in 0.0f64..500.0,
            s_lr in 0.0f64..100.0,
            s_rl in 0.0f64..100.0,
            drift in -50.0f64..50.0,
        ) {
            for side in Side::BOTH {
                let mut more = s.clone();
                more.channel_mut(side).remote += extra;
                more.channel_mut(side).capacity += extra;
                let before = future_balance_refined(&s, s_lr, s_rl, 10.0, &fees(0.01))[side];
                let after = future_balance_refined(&more, s_lr, s_rl, 10.0, &fees(0.01))[side];
                prop_assert!(after >= before - 1e-9 * before.max(1.0));
                let ch = s.channel(side);
                let simple_before = future_balance_simple(ch.remote, drift, ch.capacity, 10.0);
                let simple_after = future_balance_simple(ch.remote + extra, drift, ch.capacity, 10.0);
                prop_assert!(simple_after >= simple_before);
            }
        }
    }
}
