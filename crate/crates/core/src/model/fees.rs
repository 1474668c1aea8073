use super::{check_amount, ModelError};
use serde::{Deserialize, Serialize};

/// Relay and swap fee parameters.
///
/// The relay fee on a forwarded amount `a > 0` is `base + prop * a`. The
/// swap fee charged by the liquidity provider on a net amount `r > 0` moved
/// between chain and channel is `r * swap_prop + miner`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeeSchedule {
    #[serde(default)]
    pub base: f64,
    pub prop: f64,
    pub swap_prop: f64,
    pub miner: f64,
}

/// Result of inverting the gross swap-out cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiInverse {
    pub net: f64,
    /// Set when `0 < gross <= miner`: no positive net amount maps to it.
    pub below_minimum: bool,
}

impl FeeSchedule {
    pub fn new(base: f64, prop: f64, swap_prop: f64, miner: f64) -> Self {
        Self {
            base,
            prop,
            swap_prop,
            miner,
        }
    }

    /// Proportional-only relay fees with the given swap costs.
    pub fn proportional(prop: f64, swap_prop: f64, miner: f64) -> Self {
        Self::new(0.0, prop, swap_prop, miner)
    }

    /// Returns a description of every parameter outside its domain.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut nonneg = |name: &'static str, v: f64| {
            if !(v.is_finite() && v >= 0.0) {
                out.push((name, format!("must be finite and >= 0, got {v}")));
            }
        };
        nonneg("base", self.base);
        nonneg("prop", self.prop);
        nonneg("swap_prop", self.swap_prop);
        nonneg("miner", self.miner);
        if self.prop >= 1.0 {
            out.push(("prop", format!("must be < 1, got {}", self.prop)));
        }
        if self.swap_prop >= 1.0 {
            out.push(("swap_prop", format!("must be < 1, got {}", self.swap_prop)));
        }
        out
    }

    pub fn relay_fee(&self, amount: f64) -> Result<f64, ModelError> {
        let amount = check_amount(amount)?;
        Ok(self.relay_fee_unchecked(amount))
    }

    pub(crate) fn relay_fee_unchecked(&self, amount: f64) -> f64 {
        if amount == 0.0 {
            0.0
        } else {
            self.base + self.prop * amount
        }
    }

    pub fn swap_fee(&self, net_amount: f64) -> Result<f64, ModelError> {
        let net = check_amount(net_amount)?;
        Ok(self.swap_fee_unchecked(net))
    }

    pub(crate) fn swap_fee_unchecked(&self, net: f64) -> f64 {
        if net == 0.0 {
            0.0
        } else {
            net * self.swap_prop + self.miner
        }
    }

    /// Gross cost of moving `net_amount`, fee included.
    pub fn phi(&self, net_amount: f64) -> Result<f64, ModelError> {
        let net = check_amount(net_amount)?;
        Ok(self.phi_unchecked(net))
    }

    pub(crate) fn phi_unchecked(&self, net: f64) -> f64 {
        if net == 0.0 {
            0.0
        } else {
            net * (1.0 + self.swap_prop) + self.miner
        }
    }

    /// Net amount whose gross cost is `gross`.
    pub fn phi_inverse(&self, gross: f64) -> Result<PhiInverse, ModelError> {
        let gross = check_amount(gross)?;
        Ok(self.phi_inverse_unchecked(gross))
    }

    pub(crate) fn phi_inverse_unchecked(&self, gross: f64) -> PhiInverse {
        if gross == 0.0 {
            PhiInverse {
                net: 0.0,
                below_minimum: false,
            }
        } else if gross <= self.miner {
            PhiInverse {
                net: 0.0,
                below_minimum: true,
            }
        } else {
            PhiInverse {
                net: (gross - self.miner) / (1.0 + self.swap_prop),
                below_minimum: false,
            }
        }
    }

    /// Largest net swap-in amount an on-chain balance of `onchain` can fund.
    pub fn max_swap_in(&self, onchain: f64) -> f64 {
        self.phi_inverse_unchecked(onchain.max(0.0)).net
    }

    /// Smallest swap-out amount that covers its own fee: `miner / (1 - swap_prop)`.
    pub fn min_swap_out(&self) -> f64 {
        self.miner / (1.0 - self.swap_prop)
    }
}
