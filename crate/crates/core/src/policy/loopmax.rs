use super::{Policy, PolicyContext, PolicyError};
use crate::model::{Side, SwapDecision, SwapRequest};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopmaxParams {
    /// Minutes of estimated net traffic to leave untouched on the side a
    /// swap draws from.
    pub safety_margin_minutes: f64,
}

impl Default for LoopmaxParams {
    fn default() -> Self {
        Self {
            safety_margin_minutes: 2.0,
        }
    }
}

impl LoopmaxParams {
    pub fn problems(&self) -> Vec<String> {
        if self.safety_margin_minutes.is_finite() && self.safety_margin_minutes >= 0.0 {
            Vec::new()
        } else {
            vec![format!(
                "safety_margin_minutes must be >= 0, got {}",
                self.safety_margin_minutes
            )]
        }
    }
}

/// Demand-aware policy that waits as long as it safely can and then swaps
/// the largest feasible amount.
///
/// For each channel it estimates how long until `N`'s local balance runs
/// dry (or the neighbor's does) at the current net drift. If that happens
/// before the next decision's swap could land, it swaps now: a swap-in of
/// everything the neighbor can forward and the chain can pay for, or a
/// swap-out of the whole local balance, each less the safety margin.
#[derive(Debug, Clone, Copy, Default)]
pub struct Loopmax {
    pub params: LoopmaxParams,
}

impl Loopmax {
    pub fn new(params: LoopmaxParams) -> Self {
        Self { params }
    }

    pub fn request(&self, ctx: &PolicyContext<'_>, side: Side) -> SwapRequest {
        let drift = ctx.estimates.local_drift(side);
        let ch = ctx.state.channel(side);
        let lead = ctx.t_check + ctx.t_conf;
        let margin = drift.abs() * self.params.safety_margin_minutes;

        let request = if drift < 0.0 {
            let time_to_depletion = ch.local / drift.abs();
            if time_to_depletion < lead {
                let affordable = ctx.fees.max_swap_in(ctx.state.onchain);
                SwapRequest::In(affordable.min(ch.remote - margin))
            } else {
                SwapRequest::NoOp
            }
        } else if drift > 0.0 {
            let time_to_saturation = ch.remote / drift;
            if time_to_saturation < lead {
                SwapRequest::Out(ch.local - margin)
            } else {
                SwapRequest::NoOp
            }
        } else {
            SwapRequest::NoOp
        };
        if request.amount() > 0.0 {
            request
        } else {
            SwapRequest::NoOp
        }
    }
}

impl Policy for Loopmax {
    fn name(&self) -> &str {
        "loopmax"
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<SwapDecision, PolicyError> {
        Ok(SwapDecision::from_fn(|side| self.request(ctx, side)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::test_support::Fixture;
    use approx::assert_relative_eq;

    fn no_margin() -> Loopmax {
        Loopmax::new(LoopmaxParams {
            safety_margin_minutes: 0.0,
        })
    }

    #[test]
    fn imminent_depletion_swaps_in_what_remote_can_forward() {
        let mut fx = Fixture::new(150.0, 850.0, 1000.0);
        // local drift of -10/min is a remote drift of +10/min
        fx.estimates.remote_drift.l = 10.0;
        let req = no_margin().request(&fx.ctx(), Side::L);
        assert_eq!(req, SwapRequest::In(850.0));
    }

    #[test]
    fn onchain_limits_the_swap_in() {
        let mut fx = Fixture::new(150.0, 850.0, 500.0);
        fx.estimates.remote_drift.l = 10.0;
        let SwapRequest::In(a) = no_margin().request(&fx.ctx(), Side::L) else {
            panic!("expected swap-in");
        };
        assert_relative_eq!(a, 498.0 / 1.005, max_relative = 1e-12);
    }

    #[test]
    fn distant_saturation_waits() {
        let mut fx = Fixture::new(500.0, 500.0, 1000.0);
        fx.estimates.remote_drift.r = -5.0;
        assert_eq!(no_margin().request(&fx.ctx(), Side::R), SwapRequest::NoOp);
    }

    #[test]
    fn imminent_saturation_swaps_out_local_less_margin() {
        let mut fx = Fixture::new(900.0, 100.0, 1000.0);
        fx.estimates.remote_drift.r = -10.0;
        let policy = Loopmax::new(LoopmaxParams {
            safety_margin_minutes: 2.0,
        });
        assert_eq!(policy.request(&fx.ctx(), Side::R), SwapRequest::Out(880.0));
    }

    #[test]
    fn margin_is_withheld_from_remote_on_swap_in() {
        let mut fx = Fixture::new(150.0, 850.0, 1000.0);
        fx.estimates.remote_drift.l = 10.0;
        let policy = Loopmax::default();
        assert_eq!(policy.request(&fx.ctx(), Side::L), SwapRequest::In(830.0));
    }

    #[test]
    fn zero_drift_or_history_is_noop() {
        let fx = Fixture::new(10.0, 990.0, 1000.0);
        assert_eq!(
            Loopmax::default().decide(&fx.ctx()).unwrap(),
            SwapDecision::noop()
        );
    }

    #[test]
    fn margin_larger_than_balance_is_noop() {
        let mut fx = Fixture::new(5.0, 15.0, 1000.0);
        fx.estimates.remote_drift.l = 10.0;
        assert_eq!(Loopmax::default().request(&fx.ctx(), Side::L), SwapRequest::NoOp);
    }
}
