use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

/// Extra per-step figures sent alongside each observation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObsInfo {
    pub failed_swaps: u32,
    pub lost_fees: f64,
    pub fortune: f64,
}

/// One line of the wire protocol.
///
/// The server sends `hello`, then for every `reset` from the agent runs an
/// episode: `obs` (server) and `act` (agent) alternate until an `obs` with
/// `done = true`. The agent ends the session with `bye`. Either end may send
/// `error` before hanging up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Message {
    Hello {
        version: u32,
        #[serde(default)]
        config: serde_json::Value,
    },
    Reset {
        seed: u64,
    },
    Obs {
        step: u64,
        o: [f64; 7],
        r: f64,
        done: bool,
        info: ObsInfo,
    },
    Act {
        a: [f64; 2],
    },
    Bye {},
    Error {
        message: String,
    },
}

impl Message {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("protocol messages always serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line.trim_end_matches(['\r', '\n']))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Reset { .. } => "reset",
            Message::Obs { .. } => "obs",
            Message::Act { .. } => "act",
            Message::Bye {} => "bye",
            Message::Error { .. } => "error",
        }
    }
}
