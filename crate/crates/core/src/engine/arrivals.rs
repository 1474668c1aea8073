use crate::model::{Direction, Transaction};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

/// Distribution of transaction amounts. Draws are always positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase", deny_unknown_fields)]
pub enum AmountDist {
    /// Uniform on `(lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Normal, redrawn until positive.
    Gaussian { mean: f64, std: f64 },
    Fixed { amount: f64 },
}

impl AmountDist {
    pub fn problems(&self) -> Vec<String> {
        match *self {
            AmountDist::Uniform { lo, hi } => {
                let mut out = Vec::new();
                if !(lo >= 0.0 && lo.is_finite()) {
                    out.push(format!("uniform lo must be >= 0, got {lo}"));
                }
                if !(lo < hi && hi.is_finite()) {
                    out.push(format!("uniform needs lo < hi, got lo={lo} hi={hi}"));
                }
                out
            }
            AmountDist::Gaussian { mean, std } => {
                let mut out = Vec::new();
                if !(std > 0.0 && std.is_finite()) {
                    out.push(format!("gaussian std must be > 0, got {std}"));
                }
                if !mean.is_finite() {
                    out.push(format!("gaussian mean must be finite, got {mean}"));
                } else if mean + 6.0 * std <= 0.0 {
                    out.push(format!("gaussian mean {mean} leaves no positive mass"));
                }
                out
            }
            AmountDist::Fixed { amount } => {
                if amount > 0.0 && amount.is_finite() {
                    Vec::new()
                } else {
                    vec![format!("fixed amount must be > 0, got {amount}")]
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            AmountDist::Uniform { lo, hi } => loop {
                // 1 - u lies in (0, 1]
                let u: f64 = rng.random();
                let x = lo + (hi - lo) * (1.0 - u);
                if x > 0.0 {
                    break x;
                }
            },
            AmountDist::Gaussian { mean, std } => {
                let normal = Normal::new(mean, std).expect("validated gaussian parameters");
                loop {
                    let x = normal.sample(rng);
                    if x > 0.0 {
                        break x;
                    }
                }
            }
            AmountDist::Fixed { amount } => amount,
        }
    }
}

/// When transactions arrive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Timing {
    /// Poisson arrivals at `rate` per minute. A zero rate never fires.
    Poisson { rate: f64 },
    /// One arrival every `interval` minutes starting at `offset`.
    Periodic { interval: f64, offset: f64 },
}

impl Timing {
    pub fn is_active(&self) -> bool {
        match *self {
            Timing::Poisson { rate } => rate > 0.0,
            Timing::Periodic { .. } => true,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        match *self {
            Timing::Poisson { rate } if !(rate >= 0.0 && rate.is_finite()) => {
                vec![format!("poisson rate must be >= 0, got {rate}")]
            }
            Timing::Periodic { interval, offset }
                if !(interval > 0.0 && interval.is_finite() && offset >= 0.0) =>
            {
                vec![format!(
                    "periodic timing needs interval > 0 and offset >= 0, got interval={interval} offset={offset}"
                )]
            }
            _ => Vec::new(),
        }
    }
}

/// Transactions from one side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalProcess {
    pub timing: Timing,
    pub amount: AmountDist,
    /// Stop after this many transactions.
    #[serde(default)]
    pub count_limit: Option<u64>,
}

impl ArrivalProcess {
    pub fn poisson(rate: f64, amount: AmountDist, count_limit: Option<u64>) -> Self {
        Self {
            timing: Timing::Poisson { rate },
            amount,
            count_limit,
        }
    }

    /// A process that never produces a transaction.
    pub fn silent() -> Self {
        Self::poisson(0.0, AmountDist::Fixed { amount: 1.0 }, Some(0))
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = self.timing.problems();
        out.extend(self.amount.problems());
        out
    }
}

/// Seeds for the four independent random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeeds {
    pub l_arrivals: u64,
    pub r_arrivals: u64,
    pub l_amounts: u64,
    pub r_amounts: u64,
}

impl StreamSeeds {
    pub fn from_master(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            l_arrivals: rng.next_u64(),
            r_arrivals: rng.next_u64(),
            l_amounts: rng.next_u64(),
            r_amounts: rng.next_u64(),
        }
    }

    fn for_direction(&self, direction: Direction) -> (u64, u64) {
        match direction {
            Direction::LtoR => (self.l_arrivals, self.l_amounts),
            Direction::RtoL => (self.r_arrivals, self.r_amounts),
        }
    }
}

/// A running arrival process with its own timing and amount streams.
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    direction: Direction,
    process: ArrivalProcess,
    timing_rng: ChaCha8Rng,
    amount_rng: ChaCha8Rng,
    generated: u64,
}

impl ArrivalStream {
    pub fn new(direction: Direction, process: ArrivalProcess, seeds: &StreamSeeds) -> Self {
        let (timing, amount) = seeds.for_direction(direction);
        Self {
            direction,
            process,
            timing_rng: ChaCha8Rng::seed_from_u64(timing),
            amount_rng: ChaCha8Rng::seed_from_u64(amount),
            generated: 0,
        }
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn is_exhausted(&self) -> bool {
        !self.process.timing.is_active()
            || self
                .process
                .count_limit
                .is_some_and(|limit| self.generated >= limit)
    }

    /// Draws the transaction that follows one arriving at `now`, or `None`
    /// once the process is exhausted.
    pub fn next_after(&mut self, now: f64) -> Option<Transaction> {
        if self.is_exhausted() {
            return None;
        }
        let arrival_time = match self.process.timing {
            Timing::Poisson { rate } => {
                let exp = Exp::new(rate).expect("validated poisson rate");
                now + exp.sample(&mut self.timing_rng)
            }
            Timing::Periodic { interval, offset } => offset + interval * self.generated as f64,
        };
        let amount = self.process.amount.sample(&mut self.amount_rng);
        self.generated += 1;
        Some(Transaction {
            direction: self.direction,
            amount,
            arrival_time,
        })
    }
}
