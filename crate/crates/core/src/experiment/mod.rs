//! Experiment configuration, replications, sweeps and fixed scenarios.

mod config;
mod scenario;

pub use config::{
    load_config, parse_config, AgentConfig, ChannelsConfig, ConfigError, DemandConfig,
    EstimatorConfig, ExperimentConfig, PolicyConfig, PolicyName, SweepConfig, TimingConfig,
};
pub use scenario::{scenario_appendix_a, ScenarioParams, ScenarioReport};

use crate::engine::{SimError, Simulation};
use crate::model::FeeSchedule;
use crate::policy::{Autoloop, Loopmax, NoRebalancing, Policy};
use crate::trace::{MetricsTrace, TraceError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("seed {seed}: {source}")]
    Sim {
        seed: u64,
        #[source]
        source: SimError,
    },

    #[error("the agent policy needs a connected agent; use serve-agent")]
    NeedsAgent,

    #[error("{path}: {reason}")]
    BadParameter { path: String, reason: String },

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Trace(#[from] TraceError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Builds the in-process policy named by the config.
pub fn build_policy(config: &ExperimentConfig) -> Result<Box<dyn Policy + Send>, ExperimentError> {
    Ok(match config.policy.name {
        PolicyName::None => Box::new(NoRebalancing),
        PolicyName::Autoloop => Box::new(Autoloop::new(config.policy.autoloop)),
        PolicyName::Loopmax => Box::new(Loopmax::new(config.policy.loopmax)),
        PolicyName::Agent => return Err(ExperimentError::NeedsAgent),
    })
}

/// Runs one seed of an experiment.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<MetricsTrace, ExperimentError> {
    let mut policy = build_policy(config)?;
    let sim = Simulation::new(config.sim_config(), seed)
        .map_err(|source| ExperimentError::Sim { seed, source })?;
    sim.run(&mut policy)
        .map_err(|source| ExperimentError::Sim { seed, source })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FortuneStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl FortuneStats {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = (values.iter().sum::<f64>() / values.len() as f64).clamp(min, max);
        Some(Self { mean, min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: usize,
    pub final_fortune: f64,
    pub cum_relay_fees: f64,
    pub cum_lost_fees: f64,
    pub cum_swap_fees: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub policy: PolicyName,
    pub initial_fortune: f64,
    pub final_fortune: FortuneStats,
    pub runs: Vec<SeedSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub traces: Vec<(u64, MetricsTrace)>,
    pub summary: Summary,
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

/// Runs every seed in parallel. With `out_dir`, writes one CSV per seed
/// and `summary.json` there.
pub fn run_experiment(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentResult, ExperimentError> {
    config.validate()?;
    build_policy(config)?;
    let traces = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed).map(|t| (seed, t)))
        .collect::<Result<Vec<_>, _>>()?;
    let runs: Vec<SeedSummary> = traces
        .iter()
        .map(|(seed, trace)| {
            let last = trace.records.last();
            SeedSummary {
                seed: *seed,
                steps: trace.len(),
                final_fortune: trace.final_fortune(),
                cum_relay_fees: last.map_or(0.0, |r| r.cum_relay_fees),
                cum_lost_fees: last.map_or(0.0, |r| r.cum_lost_fees),
                cum_swap_fees: last.map_or(0.0, |r| r.cum_swap_fees),
            }
        })
        .collect();
    let finals: Vec<f64> = runs.iter().map(|r| r.final_fortune).collect();
    let summary = Summary {
        policy: config.policy.name,
        initial_fortune: config.channels.node_state().fortune(),
        final_fortune: FortuneStats::of(&finals).expect("at least one seed"),
        runs,
    };
    if let Some(dir) = out_dir {
        write_outputs(dir, &traces, &summary)?;
    }
    Ok(ExperimentResult { traces, summary })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_outputs(dir: &Path, traces: &[(u64, MetricsTrace)], summary: &Summary) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (seed, trace) in traces {
        let path = dir.join(trace_file_name(*seed));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        trace.write_csv(std::io::BufWriter::new(file))?;
    }
    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(())
}

/// One point of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Returns a copy of `config` with the dotted `path` set to `value`.
/// Integer fields take integral values only.
pub fn with_parameter(config: &ExperimentConfig, path: &str, value: f64) -> Result<ExperimentConfig, ExperimentError> {
    let bad = |reason: String| ExperimentError::BadParameter {
        path: path.to_string(),
        reason,
    };
    let mut root = toml::Value::try_from(config).map_err(|e| bad(e.to_string()))?;
    let mut slot = &mut root;
    for key in path.split('.') {
        slot = slot
            .as_table_mut()
            .and_then(|t| t.get_mut(key))
            .ok_or_else(|| bad(format!("no field {key:?} in config")))?;
    }
    *slot = match slot {
        toml::Value::Float(_) => toml::Value::Float(value),
        toml::Value::Integer(_) if value.fract() == 0.0 && value.abs() < 9.0e15 => {
            toml::Value::Integer(value as i64)
        }
        toml::Value::Integer(_) => return Err(bad(format!("integer field cannot take {value}"))),
        _ => return Err(bad("not a numeric field".to_string())),
    };
    let updated: ExperimentConfig = root.try_into().map_err(|e: toml::de::Error| bad(e.to_string()))?;
    updated.validate()?;
    Ok(updated)
}

/// Runs the experiment once per value of the dotted parameter `path`.
/// With `out_dir`, each point writes into its own subdirectory and the
/// table goes to `sweep.csv`.
pub fn sweep(
    config: &ExperimentConfig,
    path: &str,
    values: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let configs = values
        .iter()
        .map(|&v| with_parameter(config, path, v))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::with_capacity(values.len());
    for (&value, cfg) in values.iter().zip(&configs) {
        let dir = out_dir.map(|d| d.join(format!("{path}={value}")));
        let result = run_experiment(cfg, dir.as_deref())?;
        let s = result.summary.final_fortune;
        rows.push(SweepRow {
            value,
            mean: s.mean,
            min: s.min,
            max: s.max,
        });
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("sweep.csv");
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = csv::Writer::from_writer(file);
        if rows.is_empty() {
            w.write_record(["value", "mean", "min", "max"])
                .map_err(TraceError::from)?;
        }
        for row in &rows {
            w.serialize(row).map_err(TraceError::from)?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(rows)
}

/// Smallest swap sizes that can pay for themselves through relay fees.
/// `None` means no swap size can.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub swap_in: Option<f64>,
    pub swap_out: Option<f64>,
}

/// A swap of net size `r` can only pay off if relaying `r` earns more than
/// the swap costs. For a swap-in that needs `prop * r > F * r + M`; for a
/// swap-out, whose locked amount is `r (1 + F) + M`, it needs
/// `prop * r (1 + F) > F * r + M`.
pub fn profitability_thresholds(fees: &FeeSchedule) -> Thresholds {
    let (prop, f, m) = (fees.prop, fees.swap_prop, fees.miner);
    let swap_in = (prop > f).then(|| m / (prop - f));
    let swap_out = (prop > f / (1.0 + f)).then(|| m / (prop * (1.0 + f) - f));
    Thresholds { swap_in, swap_out }
}
