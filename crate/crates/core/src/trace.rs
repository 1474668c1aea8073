//! Per-step metrics and their CSV form.
//!
//! One row per control step `(t_start, t_end]`. Balances are taken at
//! `t_end`; the estimator columns are the snapshot the policy saw at
//! `t_start`. Swap amounts are signed, positive for swap-in. Columns appear
//! in the field order of [`StepRecord`].

use crate::model::REL_TOLERANCE;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// How the swap started on a channel in this step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapOutcome {
    #[default]
    None,
    Succeeded,
    Refunded,
    /// Still unresolved when the run ended.
    Pending,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub t_start: f64,
    pub t_end: f64,
    pub capacity_l: f64,
    pub capacity_r: f64,
    pub local_l: f64,
    pub remote_l: f64,
    pub local_r: f64,
    pub remote_r: f64,
    pub locked_l: f64,
    pub locked_r: f64,
    pub onchain: f64,
    pub onchain_locked: f64,
    pub fortune_before: f64,
    pub fortune: f64,
    pub relay_fees: f64,
    pub lost_fees: f64,
    pub swap_fees: f64,
    pub arriving_fees: f64,
    pub cum_relay_fees: f64,
    pub cum_lost_fees: f64,
    pub cum_swap_fees: f64,
    pub tx_arrived: u64,
    pub tx_succeeded: u64,
    pub request_l: f64,
    pub request_r: f64,
    pub swap_l: f64,
    pub swap_r: f64,
    pub outcome_l: SwapOutcome,
    pub outcome_r: SwapOutcome,
    pub failed_swaps: u32,
    pub remote_drift_l: f64,
    pub remote_drift_r: f64,
    pub success_l_to_r: f64,
    pub success_r_to_l: f64,
    pub future_remote_l: f64,
    pub future_remote_r: f64,
    pub reward: f64,
}

impl StepRecord {
    pub fn fortune_change(&self) -> f64 {
        self.fortune - self.fortune_before
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The full output of one simulation run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTrace {
    pub initial_fortune: f64,
    pub records: Vec<StepRecord>,
}

impl MetricsTrace {
    pub fn final_fortune(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_fortune, |r| r.fortune)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TraceError> {
        write_records(&self.records, writer)
    }

    pub fn to_csv_string(&self) -> Result<String, TraceError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

pub fn write_records<W: Write>(records: &[StepRecord], writer: W) -> Result<(), TraceError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(writer);
    if records.is_empty() {
        w.write_record(column_names())?;
    }
    for record in records {
        w.serialize(record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(reader: R) -> Result<Vec<StepRecord>, TraceError> {
    let mut r = csv::Reader::from_reader(reader);
    let records = r.deserialize().collect::<Result<Vec<StepRecord>, _>>()?;
    Ok(records)
}

/// Header row, in column order.
pub fn column_names() -> Vec<&'static str> {
    vec![
        "step",
        "t_start",
        "t_end",
        "capacity_l",
        "capacity_r",
        "local_l",
        "remote_l",
        "local_r",
        "remote_r",
        "locked_l",
        "locked_r",
        "onchain",
        "onchain_locked",
        "fortune_before",
        "fortune",
        "relay_fees",
        "lost_fees",
        "swap_fees",
        "arriving_fees",
        "cum_relay_fees",
        "cum_lost_fees",
        "cum_swap_fees",
        "tx_arrived",
        "tx_succeeded",
        "request_l",
        "request_r",
        "swap_l",
        "swap_r",
        "outcome_l",
        "outcome_r",
        "failed_swaps",
        "remote_drift_l",
        "remote_drift_r",
        "success_l_to_r",
        "success_r_to_l",
        "future_remote_l",
        "future_remote_r",
        "reward",
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceProblem {
    pub row: usize,
    pub step: u64,
    pub message: String,
}

impl std::fmt::Display for TraceProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {} (step {}): {}", self.row, self.step, self.message)
    }
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= REL_TOLERANCE * scale.abs().max(1.0)
}

/// Checks every row for balance conservation, fortune bookkeeping, the
/// per-step accounting identity and monotone cumulative columns.
pub fn validate_records(records: &[StepRecord]) -> Vec<TraceProblem> {
    let mut problems = Vec::new();
    let mut prev: Option<&StepRecord> = None;
    for (row, rec) in records.iter().enumerate() {
        let mut flag = |message: String| {
            problems.push(TraceProblem {
                row,
                step: rec.step,
                message,
            })
        };

        for (name, cap, local, remote, locked) in [
            ("L", rec.capacity_l, rec.local_l, rec.remote_l, rec.locked_l),
            ("R", rec.capacity_r, rec.local_r, rec.remote_r, rec.locked_r),
        ] {
            if !close(local + remote + locked, cap, cap) {
                flag(format!(
                    "channel {name}: local {local} + remote {remote} + locked {locked} != capacity {cap}"
                ));
            }
            if local < 0.0 || remote < 0.0 || locked < 0.0 {
                flag(format!("channel {name}: negative balance"));
            }
        }

        let recomputed =
            rec.local_l + rec.local_r + rec.locked_l + rec.locked_r + rec.onchain + rec.onchain_locked;
        if !close(recomputed, rec.fortune, rec.fortune) {
            flag(format!(
                "fortune {} does not match balances summing to {recomputed}",
                rec.fortune
            ));
        }

        let scale = rec
            .fortune
            .abs()
            .max(rec.fortune_before.abs())
            .max(rec.arriving_fees.abs());
        let residual = rec.fortune_change() + rec.lost_fees + rec.swap_fees - rec.arriving_fees;
        if !close(residual, 0.0, scale) {
            flag(format!("accounting identity residual {residual}"));
        }
        if !close(rec.relay_fees + rec.lost_fees, rec.arriving_fees, rec.arriving_fees) {
            flag("relay fees + lost fees != arriving fees".to_string());
        }

        let (prev_relay, prev_lost, prev_swap) =
            prev.map_or((0.0, 0.0, 0.0), |p| (p.cum_relay_fees, p.cum_lost_fees, p.cum_swap_fees));
        for (name, before, step_value, now) in [
            ("relay", prev_relay, rec.relay_fees, rec.cum_relay_fees),
            ("lost", prev_lost, rec.lost_fees, rec.cum_lost_fees),
            ("swap", prev_swap, rec.swap_fees, rec.cum_swap_fees),
        ] {
            if now < before {
                flag(format!("cumulative {name} fees decreased from {before} to {now}"));
            }
            if !close(before + step_value, now, now) {
                flag(format!(
                    "cumulative {name} fees {now} != previous {before} + step {step_value}"
                ));
            }
        }

        if rec.tx_succeeded > rec.tx_arrived {
            flag("more successful transactions than arrivals".to_string());
        }
        if rec.t_end < rec.t_start {
            flag(format!("step ends at {} before it starts at {}", rec.t_end, rec.t_start));
        }
        if let Some(p) = prev {
            if rec.step != p.step + 1 {
                flag(format!("step index jumps from {} to {}", p.step, rec.step));
            }
            if rec.t_start != p.t_end {
                flag(format!("starts at {} but previous step ended at {}", rec.t_start, p.t_end));
            }
            if !close(rec.fortune_before, p.fortune, p.fortune) {
                flag(format!(
                    "fortune_before {} != previous fortune {}",
                    rec.fortune_before, p.fortune
                ));
            }
        }
        prev = Some(rec);
    }
    problems
}
