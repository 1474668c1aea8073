use super::arrivals::{ArrivalProcess, ArrivalStream, StreamSeeds};
use super::event::{Event, EventKind, EventQueue};
use crate::estimators::{DemandEstimates, EstimateSnapshot};
use crate::model::{
    Direction, FeeSchedule, LedgerAccumulator, ModelError, NodeState, PerSide, Side, StepLedger,
    SwapKind, SwapOperation, SwapRequest, SwapStatus,
};
use crate::policy::{compute_reward, Policy, PolicyContext, PolicyError};
use crate::trace::{MetricsTrace, StepRecord, SwapOutcome};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// When a run stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Horizon {
    /// Stop at a fixed simulated time. Control epochs fire strictly before it.
    Time { minutes: f64 },
    /// Run until every arrival process is exhausted and every pending swap
    /// has resolved. Requires count limits on all active processes.
    Drain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub initial: NodeState,
    pub fees: FeeSchedule,
    pub t_check: f64,
    pub t_conf: f64,
    pub horizon: Horizon,
    pub l_to_r: ArrivalProcess,
    pub r_to_l: ArrivalProcess,
    /// Trailing window for demand estimates; full history when absent.
    pub estimator_window: Option<f64>,
    /// Charged per failed swap in the reward column.
    pub reward_penalty: f64,
}

impl SimConfig {
    /// Every configuration problem, prefixed by the offending field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, problem) in self.fees.problems() {
            out.push(format!("fees.{name}: {problem}"));
        }
        if !(self.t_conf > 0.0 && self.t_conf.is_finite()) {
            out.push(format!("t_conf: must be > 0, got {}", self.t_conf));
        }
        if !(self.t_check >= self.t_conf && self.t_check.is_finite()) {
            out.push(format!(
                "t_check: must be >= t_conf ({}), got {}",
                self.t_conf, self.t_check
            ));
        }
        match self.horizon {
            Horizon::Time { minutes } if !(minutes >= 0.0 && minutes.is_finite()) => {
                out.push(format!("horizon.minutes: must be >= 0, got {minutes}"));
            }
            Horizon::Drain => {
                for (name, p) in [("l_to_r", &self.l_to_r), ("r_to_l", &self.r_to_l)] {
                    if p.timing.is_active() && p.count_limit.is_none() {
                        out.push(format!(
                            "{name}.count_limit: required when the horizon drains arrivals"
                        ));
                    }
                }
            }
            Horizon::Time { .. } => {}
        }
        for (name, p) in [("l_to_r", &self.l_to_r), ("r_to_l", &self.r_to_l)] {
            for problem in p.problems() {
                out.push(format!("{name}: {problem}"));
            }
        }
        if let Some(w) = self.estimator_window {
            if !(w > 0.0 && w.is_finite()) {
                out.push(format!("estimator_window: must be > 0, got {w}"));
            }
        }
        if !(self.reward_penalty >= 0.0 && self.reward_penalty.is_finite()) {
            out.push(format!("reward_penalty: must be >= 0, got {}", self.reward_penalty));
        }
        if self.initial.onchain_locked != 0.0
            || self.initial.channels.iter().any(|(_, ch)| ch.is_busy())
        {
            out.push("initial: must not hold pending swaps".to_string());
        }
        for v in self.initial.invariant_violations() {
            out.push(format!("initial: {v}"));
        }
        if !(self.initial.onchain >= 0.0 && self.initial.onchain.is_finite()) {
            out.push(format!("initial.onchain: must be >= 0, got {}", self.initial.onchain));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),

    #[error("state invariant broken at t={time} after {event}: {}\nstate: {state}", violations.join("; "))]
    Invariant {
        time: f64,
        event: String,
        violations: Vec<String>,
        state: String,
    },

    #[error("model error at t={time}: {source}")]
    Model {
        time: f64,
        #[source]
        source: ModelError,
    },

    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// A validated configuration bound to its random streams.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    seeds: StreamSeeds,
}

impl Simulation {
    pub fn new(config: SimConfig, seed: u64) -> Result<Self, SimError> {
        Self::with_seeds(config, StreamSeeds::from_master(seed))
    }

    pub fn with_seeds(config: SimConfig, seeds: StreamSeeds) -> Result<Self, SimError> {
        let problems = config.problems();
        if !problems.is_empty() {
            return Err(SimError::InvalidConfig(problems));
        }
        Ok(Self { config, seeds })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn seeds(&self) -> &StreamSeeds {
        &self.seeds
    }

    pub fn run<P: Policy + ?Sized>(&self, policy: &mut P) -> Result<MetricsTrace, SimError> {
        self.run_with_observer(policy, |_, _| {})
    }

    /// Runs to the horizon, calling `observer` after every processed event.
    pub fn run_with_observer<P, F>(&self, policy: &mut P, observer: F) -> Result<MetricsTrace, SimError>
    where
        P: Policy + ?Sized,
        F: FnMut(&Event, &NodeState),
    {
        Run::new(&self.config, &self.seeds).execute(policy, observer)
    }
}

/// What happened on one channel during the open step.
#[derive(Debug, Clone, Copy, Default)]
struct SideActivity {
    requested: f64,
    applied: f64,
    outcome: SwapOutcome,
}

struct OpenStep {
    index: u64,
    t_start: f64,
    estimates: EstimateSnapshot,
    sides: PerSide<SideActivity>,
    tx_arrived: u64,
    tx_succeeded: u64,
}

impl OpenStep {
    fn new(index: u64, t_start: f64, estimates: EstimateSnapshot) -> Self {
        Self {
            index,
            t_start,
            estimates,
            sides: PerSide::default(),
            tx_arrived: 0,
            tx_succeeded: 0,
        }
    }
}

struct Run<'a> {
    config: &'a SimConfig,
    state: NodeState,
    queue: EventQueue,
    streams: [ArrivalStream; 2],
    queued_arrivals: usize,
    estimates: DemandEstimates,
    ledger: LedgerAccumulator,
    step: Option<OpenStep>,
    last_ledger: Option<StepLedger>,
    records: Vec<StepRecord>,
    cumulative: (f64, f64, f64),
    clock: f64,
}

impl<'a> Run<'a> {
    fn new(config: &'a SimConfig, seeds: &StreamSeeds) -> Self {
        let state = config.initial.clone();
        let ledger = LedgerAccumulator::open(state.fortune());
        let estimates = match config.estimator_window {
            Some(w) => DemandEstimates::with_window(w),
            None => DemandEstimates::new(),
        };
        Self {
            config,
            state,
            queue: EventQueue::new(),
            streams: [
                ArrivalStream::new(Direction::LtoR, config.l_to_r, seeds),
                ArrivalStream::new(Direction::RtoL, config.r_to_l, seeds),
            ],
            queued_arrivals: 0,
            estimates,
            ledger,
            step: None,
            last_ledger: None,
            records: Vec::new(),
            cumulative: (0.0, 0.0, 0.0),
            clock: 0.0,
        }
    }

    fn stream_mut(&mut self, direction: Direction) -> &mut ArrivalStream {
        match direction {
            Direction::LtoR => &mut self.streams[0],
            Direction::RtoL => &mut self.streams[1],
        }
    }

    fn schedule_arrival(&mut self, direction: Direction, after: f64) {
        if let Some(tx) = self.stream_mut(direction).next_after(after) {
            self.queue.schedule(tx.arrival_time, EventKind::TxArrival(tx));
            self.queued_arrivals += 1;
        }
    }

    fn schedule_epoch(&mut self, index: u64) {
        let time = index as f64 * self.config.t_check;
        let fires = match self.config.horizon {
            Horizon::Time { minutes } => time < minutes,
            Horizon::Drain => true,
        };
        if fires {
            self.queue.schedule(time, EventKind::ControlEpoch(index));
        }
    }

    fn past_horizon(&self, time: f64) -> bool {
        match self.config.horizon {
            Horizon::Time { minutes } => time > minutes,
            Horizon::Drain => false,
        }
    }

    fn execute<P, F>(mut self, policy: &mut P, mut observer: F) -> Result<MetricsTrace, SimError>
    where
        P: Policy + ?Sized,
        F: FnMut(&Event, &NodeState),
    {
        let initial_fortune = self.state.fortune();
        for direction in Direction::BOTH {
            self.schedule_arrival(direction, 0.0);
        }
        self.schedule_epoch(0);

        while let Some(next) = self.queue.peek() {
            if self.past_horizon(next.time) {
                break;
            }
            let event = self.queue.pop().expect("peeked");
            self.clock = event.time;
            match &event.kind {
                EventKind::TxArrival(tx) => {
                    let tx = *tx;
                    self.queued_arrivals -= 1;
                    self.handle_arrival(&tx);
                    self.schedule_arrival(tx.direction, tx.arrival_time);
                }
                EventKind::SwapCompletion(side) => self.handle_completion(*side)?,
                EventKind::ControlEpoch(index) => self.handle_epoch(*index, policy)?,
            }
            let violations = self.state.invariant_violations();
            if !violations.is_empty() {
                return Err(SimError::Invariant {
                    time: event.time,
                    event: format!("{:?}", event.kind),
                    violations,
                    state: format!("{:?}", self.state),
                });
            }
            observer(&event, &self.state);
        }

        let end = match self.config.horizon {
            Horizon::Time { minutes } => minutes,
            Horizon::Drain => self.clock,
        };
        if self.step.is_some() {
            self.close_step(end)?;
        }
        let snapshot = self.snapshot(end);
        let ctx = PolicyContext {
            step: self.records.len() as u64,
            now: end,
            state: &self.state,
            estimates: &snapshot,
            t_check: self.config.t_check,
            t_conf: self.config.t_conf,
            fees: &self.config.fees,
            last_step: self.last_ledger.as_ref(),
        };
        policy.finish(&ctx)?;
        Ok(MetricsTrace {
            initial_fortune,
            records: self.records,
        })
    }

    fn snapshot(&mut self, now: f64) -> EstimateSnapshot {
        self.estimates.advance(now);
        self.estimates
            .snapshot(&self.state, now, self.config.t_conf, &self.config.fees)
    }

    fn handle_arrival(&mut self, tx: &crate::model::Transaction) {
        let outcome = self.state.process_transaction(tx, &self.config.fees);
        self.estimates
            .record_arrival(tx, outcome.success, &self.config.fees);
        self.ledger.record_transaction(&outcome);
        if let Some(step) = self.step.as_mut() {
            step.tx_arrived += 1;
            step.tx_succeeded += u64::from(outcome.success);
        }
    }

    fn handle_completion(&mut self, side: Side) -> Result<(), SimError> {
        let time = self.clock;
        let op = self
            .state
            .complete_swap(side, time)
            .map_err(|source| SimError::Model { time, source })?;
        self.ledger.record_swap(&op);
        if let Some(step) = self.step.as_mut() {
            step.sides[side].outcome = match op.status {
                SwapStatus::Succeeded => SwapOutcome::Succeeded,
                SwapStatus::FailedRefunded => SwapOutcome::Refunded,
                SwapStatus::Pending => SwapOutcome::Pending,
            };
        }
        Ok(())
    }

    fn handle_epoch<P: Policy + ?Sized>(&mut self, index: u64, policy: &mut P) -> Result<(), SimError> {
        let now = self.clock;
        if self.config.horizon == Horizon::Drain && self.queued_arrivals == 0 {
            // nothing left to serve; let pending swaps land and stop
            return Ok(());
        }
        if self.step.is_some() {
            self.close_step(now)?;
        }
        let snapshot = self.snapshot(now);
        let decision = {
            let ctx = PolicyContext {
                step: index,
                now,
                state: &self.state,
                estimates: &snapshot,
                t_check: self.config.t_check,
                t_conf: self.config.t_conf,
                fees: &self.config.fees,
                last_step: self.last_ledger.as_ref(),
            };
            policy.decide(&ctx)?
        };
        let mut open = OpenStep::new(index, now, snapshot);
        let (admitted, _violations) = self.state.admissible_decision(&decision, &self.config.fees);
        for side in Side::BOTH {
            open.sides[side].requested = recorded_amount(decision[side]);
            let request = admitted[side];
            let Some(kind) = request.kind() else { continue };
            let op = self.begin(side, kind, request.amount(), now)?;
            open.sides[side].applied = match op.kind {
                SwapKind::SwapIn => op.amount,
                SwapKind::SwapOut => -op.amount,
            };
            open.sides[side].outcome = SwapOutcome::Pending;
            self.queue
                .schedule(op.complete_time, EventKind::SwapCompletion(side));
        }
        self.step = Some(open);
        self.schedule_epoch(index + 1);
        Ok(())
    }

    fn begin(&mut self, side: Side, kind: SwapKind, amount: f64, now: f64) -> Result<SwapOperation, SimError> {
        self.state
            .begin_swap(side, kind, amount, now, &self.config.fees, self.config.t_conf)
            .map_err(|source| SimError::Model { time: now, source })
    }

    fn close_step(&mut self, t_end: f64) -> Result<(), SimError> {
        let fortune = self.state.fortune();
        let fresh = LedgerAccumulator::open(fortune);
        let ledger = std::mem::replace(&mut self.ledger, fresh)
            .close(fortune)
            .map_err(|source| SimError::Model { time: t_end, source })?;
        let step = self.step.take().expect("an open step");
        self.cumulative.0 += ledger.relay_fees_earned;
        self.cumulative.1 += ledger.lost_fees;
        self.cumulative.2 += ledger.swap_fees_paid;
        let s = &self.state;
        let (l, r) = (s.channel(Side::L), s.channel(Side::R));
        self.records.push(StepRecord {
            step: step.index,
            t_start: step.t_start,
            t_end,
            capacity_l: l.capacity,
            capacity_r: r.capacity,
            local_l: l.local,
            remote_l: l.remote,
            local_r: r.local,
            remote_r: r.remote,
            locked_l: l.locked(),
            locked_r: r.locked(),
            onchain: s.onchain,
            onchain_locked: s.onchain_locked,
            fortune_before: ledger.fortune_before,
            fortune,
            relay_fees: ledger.relay_fees_earned,
            lost_fees: ledger.lost_fees,
            swap_fees: ledger.swap_fees_paid,
            arriving_fees: ledger.total_arriving_fees,
            cum_relay_fees: self.cumulative.0,
            cum_lost_fees: self.cumulative.1,
            cum_swap_fees: self.cumulative.2,
            tx_arrived: step.tx_arrived,
            tx_succeeded: step.tx_succeeded,
            request_l: step.sides.l.requested,
            request_r: step.sides.r.requested,
            swap_l: step.sides.l.applied,
            swap_r: step.sides.r.applied,
            outcome_l: step.sides.l.outcome,
            outcome_r: step.sides.r.outcome,
            failed_swaps: ledger.failed_swaps,
            remote_drift_l: step.estimates.remote_drift.l,
            remote_drift_r: step.estimates.remote_drift.r,
            success_l_to_r: step.estimates.success_l_to_r,
            success_r_to_l: step.estimates.success_r_to_l,
            future_remote_l: step.estimates.future_remote.l,
            future_remote_r: step.estimates.future_remote.r,
            reward: compute_reward(&ledger, self.config.reward_penalty),
        });
        self.last_ledger = Some(ledger);
        Ok(())
    }
}

/// Signed request amount; malformed requests are recorded as zero.
fn recorded_amount(request: SwapRequest) -> f64 {
    let value = request.signed();
    if value.is_finite() {
        value
    } else {
        0.0
    }
}
