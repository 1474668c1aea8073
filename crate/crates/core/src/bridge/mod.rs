//! Drives the simulation from an external agent process.
//!
//! The agent sees a seven-value observation at every control epoch and
//! answers with a raw action in `[-1, 1]^2`, which is mapped to swaps by
//! [`process_raw_action`]. The reward for the step that just closed travels
//! with the next observation. Every answered observation is logged so the
//! episode can be replayed without the agent.

mod protocol;
mod transport;

pub use protocol::{Message, ObsInfo, PROTOCOL_VERSION};
pub use transport::{LineDirection, LineTransport, Transport};

use crate::engine::{Horizon, SimConfig, SimError, Simulation};
use crate::estimators::EstimateSnapshot;
use crate::model::{NodeState, Side, SwapDecision};
use crate::policy::{
    compute_reward, process_raw_action, Policy, PolicyContext, PolicyError, RawAction,
    DEFAULT_MIN_SWAP_FRACTION,
};
use crate::trace::MetricsTrace;
use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

pub const DEFAULT_ONCHAIN_NORM: f64 = 60.0;
pub const DEFAULT_ACT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed message {line:?}: {source}")]
    Malformed {
        line: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("no message within {0:?}")]
    Timeout(Duration),

    #[error("peer closed the connection")]
    Closed,

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("peer reported an error: {0}")]
    Remote(String),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("action log: {0}")]
    Log(#[from] serde_json::Error),
}

/// Normalized state seen by the agent, every coordinate in `[0, 1]`:
/// the `L` neighbor's balance, `N`'s balance toward `L`, `N`'s balance
/// toward `R`, the `R` neighbor's balance, the on-chain balance over its
/// normalization constant, and the predicted `L` and `R` neighbor balances.
pub type Observation = [f64; 7];

pub fn encode_observation(state: &NodeState, estimates: &EstimateSnapshot, onchain_norm: f64) -> Observation {
    let l = state.channel(Side::L);
    let r = state.channel(Side::R);
    let unit = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    [
        unit(l.remote / l.capacity),
        unit(l.local / l.capacity),
        unit(r.local / r.capacity),
        unit(r.remote / r.capacity),
        unit(state.onchain / onchain_norm),
        unit(estimates.future_remote.l / l.capacity),
        unit(estimates.future_remote.r / r.capacity),
    ]
}

/// Bridge settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeOptions {
    pub onchain_norm: f64,
    pub min_swap_fraction: f64,
    pub act_timeout_secs: f64,
    /// Length of each episode in control epochs; the configured horizon
    /// when absent.
    pub episode_epochs: Option<u64>,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            onchain_norm: DEFAULT_ONCHAIN_NORM,
            min_swap_fraction: DEFAULT_MIN_SWAP_FRACTION,
            act_timeout_secs: DEFAULT_ACT_TIMEOUT.as_secs_f64(),
            episode_epochs: None,
        }
    }
}

impl BridgeOptions {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.onchain_norm > 0.0 && self.onchain_norm.is_finite()) {
            out.push(format!("onchain_norm: must be > 0, got {}", self.onchain_norm));
        }
        if !(0.0..=1.0).contains(&self.min_swap_fraction) {
            out.push(format!(
                "min_swap_fraction: must lie in [0, 1], got {}",
                self.min_swap_fraction
            ));
        }
        if !(self.act_timeout_secs > 0.0 && self.act_timeout_secs.is_finite()) {
            out.push(format!("act_timeout_secs: must be > 0, got {}", self.act_timeout_secs));
        }
        out
    }

    pub fn act_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.act_timeout_secs)
    }

    /// The simulation config for one episode.
    pub fn episode_config(&self, config: &SimConfig) -> SimConfig {
        let mut config = config.clone();
        if let Some(n) = self.episode_epochs {
            config.horizon = Horizon::Time {
                minutes: n as f64 * config.t_check,
            };
        }
        config
    }
}

/// One answered observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionLogEntry {
    pub step: u64,
    pub observation: Observation,
    pub action: [f64; 2],
}

/// The raw actions of one episode, enough to replay it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionLog {
    pub seed: u64,
    pub entries: Vec<ActionLogEntry>,
}

impl ActionLog {
    pub fn to_json(&self) -> Result<String, BridgeError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, BridgeError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A [`Policy`] whose decisions come from the agent at the other end of a
/// transport.
pub struct AgentPolicy<'t, T: Transport> {
    transport: &'t mut T,
    options: BridgeOptions,
    penalty: f64,
    log: ActionLog,
}

impl<'t, T: Transport> AgentPolicy<'t, T> {
    pub fn new(transport: &'t mut T, options: BridgeOptions, penalty: f64, seed: u64) -> Self {
        Self {
            transport,
            options,
            penalty,
            log: ActionLog {
                seed,
                entries: Vec::new(),
            },
        }
    }

    pub fn into_log(self) -> ActionLog {
        self.log
    }

    fn observe(&mut self, ctx: &PolicyContext<'_>, done: bool) -> Result<Observation, PolicyError> {
        let o = encode_observation(ctx.state, ctx.estimates, self.options.onchain_norm);
        let (r, info) = match ctx.last_step {
            Some(ledger) => (
                compute_reward(ledger, self.penalty),
                ObsInfo {
                    failed_swaps: ledger.failed_swaps,
                    lost_fees: ledger.lost_fees,
                    fortune: ctx.state.fortune(),
                },
            ),
            None => (
                0.0,
                ObsInfo {
                    fortune: ctx.state.fortune(),
                    ..ObsInfo::default()
                },
            ),
        };
        let msg = Message::Obs {
            step: ctx.step,
            o,
            r,
            done,
            info,
        };
        self.transport.send(&msg).map_err(agent_error)?;
        Ok(o)
    }

    fn abort(&mut self, message: String) -> PolicyError {
        let _ = self.transport.send(&Message::Error {
            message: message.clone(),
        });
        PolicyError::Agent(message)
    }
}

fn agent_error(e: BridgeError) -> PolicyError {
    PolicyError::Agent(e.to_string())
}

impl<T: Transport> Policy for AgentPolicy<'_, T> {
    fn name(&self) -> &str {
        "agent"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError> {
        let observation = self.observe(ctx, false)?;
        let reply = match self.transport.recv(self.options.act_timeout()) {
            Ok(msg) => msg,
            Err(e @ BridgeError::Malformed { .. }) => return Err(self.abort(e.to_string())),
            Err(e) => return Err(agent_error(e)),
        };
        let a = match reply {
            Message::Act { a } => a,
            Message::Error { message } => {
                return Err(PolicyError::Agent(format!("agent reported: {message}")))
            }
            other => {
                return Err(self.abort(format!("expected act at step {}, got {}", ctx.step, other.kind())))
            }
        };
        let raw = match RawAction::new(a[0], a[1]) {
            Ok(raw) => raw,
            Err(e) => return Err(self.abort(e.to_string())),
        };
        self.log.entries.push(ActionLogEntry {
            step: ctx.step,
            observation,
            action: a,
        });
        Ok(process_raw_action(&raw, ctx, self.options.min_swap_fraction))
    }

    fn finish(&mut self, ctx: &PolicyContext<'_>) -> Result<(), PolicyError> {
        self.observe(ctx, true).map(|_| ())
    }
}

/// Result of one served episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub seed: u64,
    pub trace: MetricsTrace,
    pub log: ActionLog,
}

/// Runs a protocol session: greets the agent and serves one episode per
/// `reset` until the agent says `bye`.
pub fn serve<T: Transport>(
    transport: &mut T,
    config: &SimConfig,
    options: &BridgeOptions,
) -> Result<Vec<Episode>, BridgeError> {
    let problems = options.problems();
    if !problems.is_empty() {
        return Err(BridgeError::Sim(SimError::InvalidConfig(problems)));
    }
    let config = options.episode_config(config);
    transport.send(&Message::Hello {
        version: PROTOCOL_VERSION,
        config: serde_json::to_value(&config)?,
    })?;
    let mut episodes = Vec::new();
    loop {
        match transport.recv(options.act_timeout())? {
            Message::Reset { seed } => {
                let sim = Simulation::new(config.clone(), seed)?;
                let mut agent = AgentPolicy::new(transport, *options, config.reward_penalty, seed);
                let trace = sim.run(&mut agent)?;
                episodes.push(Episode {
                    seed,
                    trace,
                    log: agent.into_log(),
                });
            }
            Message::Bye {} => return Ok(episodes),
            Message::Error { message } => return Err(BridgeError::Remote(message)),
            other => {
                let message = format!("expected reset or bye, got {}", other.kind());
                let _ = transport.send(&Message::Error {
                    message: message.clone(),
                });
                return Err(BridgeError::Protocol(message));
            }
        }
    }
}

/// Agent side of the protocol: plays one episode per seed, answering every
/// observation with `act(step, observation)`, then says `bye`. Returns the
/// rewards received in each episode.
pub fn run_agent<T: Transport>(
    transport: &mut T,
    seeds: &[u64],
    timeout: Duration,
    mut act: impl FnMut(u64, &Observation) -> [f64; 2],
) -> Result<Vec<Vec<f64>>, BridgeError> {
    match transport.recv(timeout)? {
        Message::Hello { version, .. } if version == PROTOCOL_VERSION => {}
        Message::Hello { version, .. } => {
            return Err(BridgeError::Protocol(format!("unsupported protocol version {version}")))
        }
        other => return Err(BridgeError::Protocol(format!("expected hello, got {}", other.kind()))),
    }
    let mut rewards = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        transport.send(&Message::Reset { seed })?;
        let mut episode = Vec::new();
        loop {
            match transport.recv(timeout)? {
                Message::Obs { step, o, r, done, .. } => {
                    if step > 0 || done {
                        episode.push(r);
                    }
                    if done {
                        break;
                    }
                    transport.send(&Message::Act { a: act(step, &o) })?;
                }
                Message::Error { message } => return Err(BridgeError::Remote(message)),
                other => {
                    return Err(BridgeError::Protocol(format!("expected obs, got {}", other.kind())))
                }
            }
        }
        rewards.push(episode);
    }
    transport.send(&Message::Bye {})?;
    Ok(rewards)
}

/// Replays a logged episode, checking each observation against the log.
pub struct ReplayPolicy {
    log: ActionLog,
    cursor: usize,
    options: BridgeOptions,
}

impl ReplayPolicy {
    pub fn new(log: ActionLog, options: BridgeOptions) -> Self {
        Self {
            log,
            cursor: 0,
            options,
        }
    }
}

impl Policy for ReplayPolicy {
    fn name(&self) -> &str {
        "replay"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError> {
        let diverged = |reason: String| PolicyError::Divergence {
            step: ctx.step,
            reason,
        };
        let Some(entry) = self.log.entries.get(self.cursor) else {
            return Err(diverged(format!(
                "log ends after {} actions",
                self.log.entries.len()
            )));
        };
        if entry.step != ctx.step {
            return Err(diverged(format!("log entry is for step {}", entry.step)));
        }
        let observation = encode_observation(ctx.state, ctx.estimates, self.options.onchain_norm);
        if observation != entry.observation {
            return Err(diverged(format!(
                "observation {observation:?} differs from logged {:?}",
                entry.observation
            )));
        }
        let raw = RawAction::new(entry.action[0], entry.action[1])
            .map_err(|e| diverged(e.to_string()))?;
        self.cursor += 1;
        Ok(process_raw_action(&raw, ctx, self.options.min_swap_fraction))
    }

    fn finish(&mut self, ctx: &PolicyContext<'_>) -> Result<(), PolicyError> {
        if self.cursor < self.log.entries.len() {
            return Err(PolicyError::Divergence {
                step: ctx.step,
                reason: format!(
                    "run ended with {} logged actions unused",
                    self.log.entries.len() - self.cursor
                ),
            });
        }
        Ok(())
    }
}

/// Re-runs a logged episode without the agent.
pub fn replay_policy(log: &ActionLog, config: &SimConfig, options: &BridgeOptions) -> Result<MetricsTrace, SimError> {
    let config = options.episode_config(config);
    let sim = Simulation::new(config, log.seed)?;
    sim.run(&mut ReplayPolicy::new(log.clone(), *options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{AmountDist, ArrivalProcess};
    use crate::model::{ChannelState, FeeSchedule};
    use crate::policy::NoRebalancing;
    use proptest::prelude::*;
    use std::thread;

    fn config() -> SimConfig {
        let amount = AmountDist::Gaussian {
            mean: 25.0,
            std: 20.0,
        };
        SimConfig {
            initial: NodeState::new(
                ChannelState::balanced(1000.0),
                ChannelState::balanced(1000.0),
                4000.0,
            ),
            fees: FeeSchedule::proportional(0.01, 0.005, 2.0),
            t_check: 10.0,
            t_conf: 10.0,
            horizon: Horizon::Drain,
            l_to_r: ArrivalProcess::poisson(10.0, amount, Some(800)),
            r_to_l: ArrivalProcess::poisson(2.5, amount, Some(200)),
            estimator_window: None,
            reward_penalty: 10.0,
        }
    }

    /// Connects a server transport to an agent running on its own thread.
    fn with_agent<R: Send + 'static>(
        agent: impl FnOnce(LineTransport) -> R + Send + 'static,
    ) -> (LineTransport, thread::JoinHandle<R>) {
        let (to_agent_r, to_agent_w) = std::io::pipe().unwrap();
        let (to_server_r, to_server_w) = std::io::pipe().unwrap();
        let server = LineTransport::new(to_server_r, to_agent_w).record_transcript();
        let handle = thread::spawn(move || agent(LineTransport::new(to_agent_r, to_server_w)));
        (server, handle)
    }

    fn wait() -> Duration {
        Duration::from_secs(30)
    }

    #[test]
    fn observation_examples() {
        let state = NodeState::new(
            ChannelState::new(1000.0, 800.0, 200.0),
            ChannelState::balanced(1000.0),
            30.0,
        );
        let est = EstimateSnapshot::default();
        let o = encode_observation(&state, &est, 60.0);
        assert_eq!(o[0], 0.2);
        assert_eq!(o[1], 0.8);
        assert_eq!(&o[2..5], &[0.5, 0.5, 0.5]);
        let rich = NodeState { onchain: 600.0, ..state };
        assert_eq!(encode_observation(&rich, &est, 60.0)[4], 1.0);
    }

    proptest! {
        #[test]
        fn observation_stays_in_unit_cube(
            cap_l in 1.0f64..1e5, cap_r in 1.0f64..1e5,
            fl in 0.0f64..=1.0, fr in 0.0f64..=1.0,
            onchain in 0.0f64..1e6,
            fut_l in -1e5f64..1e6, fut_r in -1e5f64..1e6,
        ) {
            let state = NodeState::new(
                ChannelState::new(cap_l, cap_l * fl, cap_l - cap_l * fl),
                ChannelState::new(cap_r, cap_r * fr, cap_r - cap_r * fr),
                onchain,
            );
            let est = EstimateSnapshot {
                future_remote: crate::model::PerSide::new(fut_l, fut_r),
                ..Default::default()
            };
            for x in encode_observation(&state, &est, 60.0) {
                prop_assert!((0.0..=1.0).contains(&x));
            }
        }
    }

    #[test]
    fn zero_action_agent_matches_no_rebalancing() {
        let (mut server, agent) =
            with_agent(|mut t| run_agent(&mut t, &[4], wait(), |_, _| [0.0, 0.0]).unwrap());
        let episodes = serve(&mut server, &config(), &BridgeOptions::default()).unwrap();
        agent.join().unwrap();
        let baseline = Simulation::new(config(), 4).unwrap().run(&mut NoRebalancing).unwrap();
        assert_eq!(episodes.len(), 1);
        assert_eq!(episodes[0].trace, baseline);
    }

    #[test]
    fn alternation_and_reward_telescoping() {
        let (mut server, agent) = with_agent(|mut t| {
            run_agent(&mut t, &[1, 1], wait(), |_, o| {
                // swap in on whichever side runs low, out when it runs high
                let pick = |x: f64| if x < 0.3 { 0.8 } else if x > 0.7 { -0.5 } else { 0.0 };
                [pick(o[1]), pick(o[2])]
            })
            .unwrap()
        });
        let episodes = serve(&mut server, &config(), &BridgeOptions::default()).unwrap();
        let rewards = agent.join().unwrap();

        assert_eq!(rewards[0], rewards[1], "same seed and actions give same rewards");
        assert_eq!(episodes[0].trace, episodes[1].trace);

        let trace = &episodes[0].trace;
        assert!(trace.records.iter().any(|r| r.swap_l != 0.0 || r.swap_r != 0.0));
        let total_reward: f64 = rewards[0].iter().sum();
        let penalties: f64 = trace.records.iter().map(|r| 10.0 * f64::from(r.failed_swaps)).sum();
        let lost: f64 = trace.records.iter().map(|r| r.lost_fees).sum();
        let change = trace.final_fortune() - trace.initial_fortune;
        assert!((total_reward + penalties + lost - change).abs() <= 1e-6 * change.abs().max(1.0));

        let mut last_sent_obs = false;
        for (direction, line) in server.transcript() {
            let msg = Message::from_line(line).unwrap();
            match (direction, &msg) {
                (LineDirection::Sent, Message::Obs { done, .. }) => {
                    assert!(!last_sent_obs, "two observations without an action");
                    last_sent_obs = !done;
                }
                (LineDirection::Received, Message::Act { .. }) => last_sent_obs = false,
                _ => {}
            }
        }
    }

    #[test]
    fn out_of_range_action_aborts_with_error() {
        let (mut server, agent) = with_agent(|mut t| run_agent(&mut t, &[2], wait(), |_, _| [1.5, 0.0]));
        let err = serve(&mut server, &config(), &BridgeOptions::default()).unwrap_err();
        assert!(matches!(err, BridgeError::Sim(SimError::Policy(PolicyError::Agent(_)))), "{err}");
        let agent_result = agent.join().unwrap();
        assert!(matches!(agent_result, Err(BridgeError::Remote(_))));
    }

    #[test]
    fn malformed_action_line_aborts() {
        use std::io::{BufRead, BufReader, Write};
        let (to_agent_r, to_agent_w) = std::io::pipe().unwrap();
        let (to_server_r, mut to_server_w) = std::io::pipe().unwrap();
        let mut server = LineTransport::new(to_server_r, to_agent_w);
        let agent = thread::spawn(move || {
            let mut lines = BufReader::new(to_agent_r).lines();
            lines.next();
            writeln!(to_server_w, r#"{{"type":"reset","seed":0}}"#).unwrap();
            lines.next();
            writeln!(to_server_w, r#"{{"type":"act","a":[0.1]}}"#).unwrap();
            lines.next().unwrap().unwrap()
        });
        let err = serve(&mut server, &config(), &BridgeOptions::default()).unwrap_err();
        assert!(matches!(err, BridgeError::Sim(SimError::Policy(PolicyError::Agent(_)))), "{err}");
        let reply = Message::from_line(&agent.join().unwrap()).unwrap();
        assert!(matches!(reply, Message::Error { .. }));
    }

    #[test]
    fn unexpected_message_instead_of_action_aborts() {
        let (mut server, agent) = with_agent(|mut t| {
            let _ = t.recv(wait());
            t.send(&Message::Reset { seed: 0 }).unwrap();
            let _ = t.recv(wait());
            t.send(&Message::Reset { seed: 1 }).unwrap();
            t.recv(wait())
        });
        let err = serve(&mut server, &config(), &BridgeOptions::default()).unwrap_err();
        assert!(err.to_string().contains("expected act"), "{err}");
        assert!(matches!(agent.join().unwrap(), Ok(Message::Error { .. })));
    }

    #[test]
    fn replay_reproduces_the_episode() {
        let (mut server, agent) = with_agent(|mut t| {
            run_agent(&mut t, &[6], wait(), |step, _| {
                let x = ((step * 37) % 21) as f64 / 10.0 - 1.0;
                [x, -x]
            })
            .unwrap()
        });
        let episodes = serve(&mut server, &config(), &BridgeOptions::default()).unwrap();
        agent.join().unwrap();
        let ep = &episodes[0];
        let log = ActionLog::from_json(&ep.log.to_json().unwrap()).unwrap();
        let replayed = replay_policy(&log, &config(), &BridgeOptions::default()).unwrap();
        assert_eq!(
            replayed.to_csv_string().unwrap(),
            ep.trace.to_csv_string().unwrap()
        );

        let mut truncated = log.clone();
        truncated.entries.truncate(5);
        match replay_policy(&truncated, &config(), &BridgeOptions::default()) {
            Err(SimError::Policy(PolicyError::Divergence { step, .. })) => assert_eq!(step, 5),
            other => panic!("expected divergence, got {other:?}"),
        }

        let wrong_seed = ActionLog { seed: 7, ..log };
        assert!(matches!(
            replay_policy(&wrong_seed, &config(), &BridgeOptions::default()),
            Err(SimError::Policy(PolicyError::Divergence { .. }))
        ));
    }

    #[test]
    fn empty_log_on_zero_epoch_horizon() {
        let config = SimConfig {
            horizon: Horizon::Time { minutes: 0.0 },
            ..config()
        };
        let trace = replay_policy(&ActionLog::default(), &config, &BridgeOptions::default()).unwrap();
        assert!(trace.is_empty());
    }

    #[test]
    fn fixed_length_episodes() {
        let options = BridgeOptions {
            episode_epochs: Some(12),
            ..BridgeOptions::default()
        };
        let (mut server, agent) =
            with_agent(|mut t| run_agent(&mut t, &[3], wait(), |_, _| [0.0, 0.0]).unwrap());
        let episodes = serve(&mut server, &config(), &options).unwrap();
        let rewards = agent.join().unwrap();
        assert_eq!(episodes[0].trace.len(), 12);
        assert_eq!(episodes[0].log.entries.len(), 12);
        assert_eq!(rewards[0].len(), 12);
    }
}
