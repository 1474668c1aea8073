use crate::engine::{
    AmountDist, ArrivalProcess, EventKind, Horizon, SimConfig, SimError, Simulation, Timing,
};
use crate::model::{ChannelState, FeeSchedule, NodeState, Side};
use crate::policy::NoRebalancing;
use crate::trace::MetricsTrace;
use serde::{Deserialize, Serialize};

/// Deterministic demand that can wedge a node without rebalancing:
/// equal-size payments alternating L->R and R->L, one per minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub fee_prop: f64,
    pub capacity: f64,
    /// Opening balance at both ends of both channels.
    pub balance: f64,
    pub amount: f64,
    pub transactions: u64,
    /// Send every payment L->R instead of alternating.
    pub one_directional: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            fee_prop: 0.5,
            capacity: 40.0,
            balance: 20.0,
            amount: 20.0,
            transactions: 20,
            one_directional: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    /// Success flag per transaction, in arrival order.
    pub outcomes: Vec<bool>,
    /// 1-based index of the first transaction after which nothing succeeds,
    /// or `None` when the last transaction succeeded.
    pub stuck_from: Option<u64>,
    pub trace: MetricsTrace,
}

impl ScenarioReport {
    pub fn successes(&self) -> usize {
        self.outcomes.iter().filter(|&&ok| ok).count()
    }
}

impl ScenarioParams {
    pub fn sim_config(&self) -> SimConfig {
        let channel = || ChannelState::new(self.capacity, self.balance, self.balance);
        let amount = AmountDist::Fixed {
            amount: self.amount,
        };
        let (n_lr, n_rl, interval) = if self.one_directional {
            (self.transactions, 0, 1.0)
        } else {
            (self.transactions.div_ceil(2), self.transactions / 2, 2.0)
        };
        SimConfig {
            initial: NodeState::new(channel(), channel(), 4.0 * self.capacity),
            fees: FeeSchedule::proportional(self.fee_prop, 0.005, 2.0),
            t_check: 10.0,
            t_conf: 10.0,
            horizon: Horizon::Drain,
            l_to_r: ArrivalProcess {
                timing: Timing::Periodic {
                    interval,
                    offset: 1.0,
                },
                amount,
                count_limit: Some(n_lr),
            },
            r_to_l: ArrivalProcess {
                timing: Timing::Periodic {
                    interval: 2.0,
                    offset: 2.0,
                },
                amount,
                count_limit: Some(n_rl),
            },
            estimator_window: None,
            reward_penalty: 0.0,
        }
    }
}

/// Runs the scenario without rebalancing and records which payments went
/// through.
pub fn scenario_appendix_a(params: &ScenarioParams) -> Result<ScenarioReport, SimError> {
    let sim = Simulation::new(params.sim_config(), 0)?;
    let mut outcomes = Vec::new();
    let mut last_local = params.balance;
    let trace = sim.run_with_observer(&mut NoRebalancing, |event, state| {
        if let EventKind::TxArrival(_) = event.kind {
            let local = state.channel(Side::L).local;
            outcomes.push(local != last_local);
            last_local = local;
        }
    })?;
    let stuck_from = match outcomes.iter().rposition(|&ok| ok) {
        Some(last) if last + 1 == outcomes.len() => None,
        Some(last) => Some(last as u64 + 2),
        None if outcomes.is_empty() => None,
        None => Some(1),
    };
    Ok(ScenarioReport {
        outcomes,
        stuck_from,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_successes_then_stuck() {
        let report = scenario_appendix_a(&ScenarioParams::default()).unwrap();
        assert_eq!(report.outcomes.len(), 20);
        assert_eq!(&report.outcomes[..4], &[true, true, false, false]);
        assert_eq!(report.successes(), 2);
        assert_eq!(report.stuck_from, Some(3));
        let last = report.trace.records.last().unwrap();
        // by hand: L: 30 local / 10 remote, R: 30 local / 10 remote
        assert_eq!((last.local_l, last.remote_l), (30.0, 10.0));
        assert_eq!((last.local_r, last.remote_r), (30.0, 10.0));
    }

    #[test]
    fn zero_fee_never_sticks() {
        let report = scenario_appendix_a(&ScenarioParams {
            fee_prop: 0.0,
            transactions: 10_000,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(report.successes(), 10_000);
        assert_eq!(report.stuck_from, None);
    }

    #[test]
    fn one_directional_depletes_the_source() {
        for (balance, expected) in [(100.0, 5), (20.0, 1), (59.0, 2)] {
            let report = scenario_appendix_a(&ScenarioParams {
                fee_prop: 0.5,
                capacity: 2.0 * balance,
                balance,
                transactions: 30,
                one_directional: true,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(report.successes(), expected, "balance {balance}");
            assert_eq!(report.stuck_from, Some(expected as u64 + 1));
        }
    }
}
