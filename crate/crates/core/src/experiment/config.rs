use crate::bridge::BridgeOptions;
use crate::engine::{ArrivalProcess, Horizon, SimConfig};
use crate::model::{ChannelState, FeeSchedule, NodeState};
use crate::policy::{AutoloopParams, LoopmaxParams, DEFAULT_MIN_SWAP_FRACTION};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

/// Channel capacities and opening balances. Balances left out are filled in
/// so each channel starts split evenly, or from the other end's balance
/// when only one is given. The on-chain balance defaults to twice the total
/// capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsConfig {
    pub capacity_l: f64,
    pub capacity_r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remote_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onchain: Option<f64>,
}

fn fill(capacity: f64, local: Option<f64>, remote: Option<f64>) -> (f64, f64) {
    match (local, remote) {
        (Some(l), Some(r)) => (l, r),
        (Some(l), None) => (l, capacity - l),
        (None, Some(r)) => (capacity - r, r),
        (None, None) => (capacity / 2.0, capacity / 2.0),
    }
}

impl ChannelsConfig {
    pub fn node_state(&self) -> NodeState {
        let (ll, rl) = fill(self.capacity_l, self.local_l, self.remote_l);
        let (lr, rr) = fill(self.capacity_r, self.local_r, self.remote_r);
        NodeState::new(
            ChannelState::new(self.capacity_l, ll, rl),
            ChannelState::new(self.capacity_r, lr, rr),
            self.onchain
                .unwrap_or(2.0 * (self.capacity_l + self.capacity_r)),
        )
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, cap, local, remote) in [
            ("l", self.capacity_l, self.local_l, self.remote_l),
            ("r", self.capacity_r, self.local_r, self.remote_r),
        ] {
            if !(cap > 0.0 && cap.is_finite()) {
                out.push(format!("channels.capacity_{name}: must be > 0, got {cap}"));
                continue;
            }
            let (l, r) = fill(cap, local, remote);
            if !(l >= 0.0 && r >= 0.0) {
                out.push(format!(
                    "channels.local_{name}/remote_{name}: balances must be >= 0, got {l} and {r}"
                ));
            }
            if (l + r - cap).abs() > 1e-9 * cap {
                out.push(format!(
                    "channels.local_{name} + channels.remote_{name}: {l} + {r} does not sum to capacity {cap}"
                ));
            }
        }
        if let Some(b) = self.onchain {
            if !(b >= 0.0 && b.is_finite()) {
                out.push(format!("channels.onchain: must be >= 0, got {b}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub t_check: f64,
    pub t_conf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    pub l_to_r: ArrivalProcess,
    pub r_to_l: ArrivalProcess,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Trailing window in minutes; full history when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    None,
    Autoloop,
    Loopmax,
    /// Decisions come from an external agent over the bridge.
    Agent,
}

impl PolicyName {
    pub const ALL: [PolicyName; 4] = [
        PolicyName::None,
        PolicyName::Autoloop,
        PolicyName::Loopmax,
        PolicyName::Agent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::None => "none",
            PolicyName::Autoloop => "autoloop",
            PolicyName::Loopmax => "loopmax",
            PolicyName::Agent => "agent",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<_> = PolicyName::ALL.iter().map(|p| p.as_str()).collect();
                format!("unknown policy {s:?}; expected one of {}", known.join(", "))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: PolicyName,
    #[serde(default)]
    pub autoloop: AutoloopParams,
    #[serde(default)]
    pub loopmax: LoopmaxParams,
}

/// Settings for agent-driven runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Deducted from the reward for each failed swap.
    pub reward_penalty: f64,
    pub onchain_norm: f64,
    pub min_swap_fraction: f64,
    pub act_timeout_secs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode_epochs: Option<u64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let bridge = BridgeOptions::default();
        Self {
            reward_penalty: 0.0,
            onchain_norm: bridge.onchain_norm,
            min_swap_fraction: DEFAULT_MIN_SWAP_FRACTION,
            act_timeout_secs: bridge.act_timeout_secs,
            episode_epochs: None,
        }
    }
}

impl AgentConfig {
    pub fn bridge_options(&self) -> BridgeOptions {
        BridgeOptions {
            onchain_norm: self.onchain_norm,
            min_swap_fraction: self.min_swap_fraction,
            act_timeout_secs: self.act_timeout_secs,
            episode_epochs: self.episode_epochs,
        }
    }
}

/// Default parameter grid for the `sweep` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted config path, such as `fees.prop`.
    pub param: String,
    pub values: Vec<f64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A complete experiment description, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub channels: ChannelsConfig,
    pub fees: FeeSchedule,
    pub timing: TimingConfig,
    pub horizon: Horizon,
    pub demand: DemandConfig,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// Field paths of the simulation config inside the experiment file.
const FIELD_PATHS: [(&str, &str); 7] = [
    ("l_to_r", "demand.l_to_r"),
    ("r_to_l", "demand.r_to_l"),
    ("t_check", "timing.t_check"),
    ("t_conf", "timing.t_conf"),
    ("estimator_window", "estimator.window"),
    ("reward_penalty", "agent.reward_penalty"),
    ("initial", "channels"),
];

impl ExperimentConfig {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            initial: self.channels.node_state(),
            fees: self.fees,
            t_check: self.timing.t_check,
            t_conf: self.timing.t_conf,
            horizon: self.horizon,
            l_to_r: self.demand.l_to_r,
            r_to_l: self.demand.r_to_l,
            estimator_window: self.estimator.window,
            reward_penalty: self.agent.reward_penalty,
        }
    }

    /// Every problem with the config, each prefixed by its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.channels.problems();
        if out.is_empty() {
            for problem in self.sim_config().problems() {
                let renamed = FIELD_PATHS
                    .iter()
                    .find_map(|(from, to)| problem.strip_prefix(from).map(|rest| format!("{to}{rest}")))
                    .unwrap_or(problem);
                if !out.contains(&renamed) {
                    out.push(renamed);
                }
            }
        }
        for p in self.policy.autoloop.problems() {
            out.push(format!("policy.autoloop: {p}"));
        }
        for p in self.policy.loopmax.problems() {
            out.push(format!("policy.loopmax: {p}"));
        }
        for p in self.agent.bridge_options().problems() {
            out.push(format!("agent.{p}"));
        }
        if self.seeds.is_empty() {
            out.push("seeds: at least one seed is required".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs serialize to TOML")
    }
}

/// Parses and validates a config from TOML text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text)?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
