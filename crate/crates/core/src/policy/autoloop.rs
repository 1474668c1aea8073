use super::{Policy, PolicyContext, PolicyError};
use crate::model::{Side, SwapDecision, SwapRequest};
use serde::{Deserialize, Serialize};

/// Liquidity band as fractions of channel capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoloopParams {
    pub low: f64,
    pub high: f64,
}

impl Default for AutoloopParams {
    fn default() -> Self {
        Self {
            low: 0.3,
            high: 0.7,
        }
    }
}

impl AutoloopParams {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.low) || !(0.0..=1.0).contains(&self.high) {
            out.push(format!(
                "thresholds must lie in [0, 1], got low={} high={}",
                self.low, self.high
            ));
        }
        if self.low.partial_cmp(&self.high) != Some(std::cmp::Ordering::Less) {
            out.push(format!("low ({}) must be < high ({})", self.low, self.high));
        }
        out
    }
}

/// Threshold policy: refill to the band midpoint when the local balance
/// leaves `[low, high] * capacity`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Autoloop {
    pub params: AutoloopParams,
}

impl Autoloop {
    pub fn new(params: AutoloopParams) -> Self {
        Self { params }
    }

    pub fn request(&self, capacity: f64, local: f64) -> SwapRequest {
        let midpoint = capacity * (self.params.low + self.params.high) / 2.0;
        if local < self.params.low * capacity {
            SwapRequest::In(midpoint - local)
        } else if local > self.params.high * capacity {
            SwapRequest::Out(local - midpoint)
        } else {
            SwapRequest::NoOp
        }
    }
}

impl Policy for Autoloop {
    fn name(&self) -> &str {
        "autoloop"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError> {
        Ok(SwapDecision::from_fn(|side: Side| {
            let ch = ctx.state.channel(side);
            self.request(ch.capacity, ch.local)
        }))
    }
}
