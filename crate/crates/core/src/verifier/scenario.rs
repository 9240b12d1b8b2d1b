use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::mechanism::{Bid, MechanismParams, Validity};
use crate::rational::{format_rational, is_tick_multiple, serde_rational, Rational};
use crate::utility::{theta_bar, LongRunParams, ThetaBar};

/// Bounded test instance: one honest value per user, mechanism and stake
/// parameters, and the largest bid explored by deviation searches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(with = "serde_rational::vec")]
    pub values: Vec<Rational>,
    pub params: MechanismParams,
    /// Stake share and reward; `honest_return` is recomputed from the values.
    pub long_run: LongRunParams,
    #[serde(with = "serde_rational")]
    pub grid_max: Rational,
}

/// Bids of every user, in user order. The honest profile bids the values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidProfile {
    pub name: String,
    #[serde(with = "serde_rational::vec")]
    pub amounts: Vec<Rational>,
}

impl Scenario {
    pub fn users(&self) -> u32 {
        self.values.len() as u32
    }

    pub fn honest_profile(&self) -> BidProfile {
        BidProfile {
            name: "honest".into(),
            amounts: self.values.clone(),
        }
    }

    /// User `i` owns bid id `i`, carries value `values[i]` and bids `amounts[i]`.
    pub fn mempool_for(&self, amounts: &[Rational]) -> Vec<Bid> {
        self.values
            .iter()
            .zip(amounts)
            .enumerate()
            .map(|(i, (&v, &a))| {
                let mut b = Bid::honest(i as u32, i as u32, v);
                b.amount = a;
                b
            })
            .collect()
    }

    pub fn honest_mempool(&self) -> Vec<Bid> {
        self.mempool_for(&self.values)
    }

    /// `0, tick, 2 tick, ..., grid_max`.
    pub fn grid(&self) -> Vec<Rational> {
        let tick = self.params.tick;
        let levels = (self.grid_max / tick).floor().to_integer();
        (0..=levels).map(|i| tick * Rational::from_integer(i)).collect()
    }

    pub fn max_value(&self) -> Rational {
        self.values.iter().copied().max().unwrap_or_else(Rational::zero)
    }

    pub fn validate(&self) -> Result<Validity, VerifyError> {
        let validity = self.params.validate()?;
        self.long_run.validate()?;
        if self.values.len() <= self.params.payment_index {
            return Err(VerifyError::TooFewUsers {
                users: self.values.len(),
                need: self.params.payment_index + 1,
            });
        }
        for bid in self.honest_mempool() {
            bid.check(&self.params.tick)?;
        }
        if !is_tick_multiple(&self.grid_max, &self.params.tick) {
            return Err(VerifyError::OffTick(format_rational(&self.grid_max)));
        }
        Ok(validity)
    }

    /// Deviations above the top value must be explorable: `grid_max >= max v + 2 tick`.
    pub fn check_grid(&self) -> Result<(), VerifyError> {
        let need = self.max_value() + self.params.tick * Rational::from_integer(2);
        if self.grid_max < need {
            return Err(VerifyError::GridTooSmall {
                grid_max: format_rational(&self.grid_max),
                need: format_rational(&need),
            });
        }
        Ok(())
    }

    /// Honest values sorted in decreasing order.
    pub fn sorted_values(&self) -> Vec<Rational> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.cmp(a));
        v
    }

    /// `v_{k+1} + ... + v_B` over the honest ranking.
    pub fn honest_tail_sum(&self) -> Rational {
        let v = self.sorted_values();
        let end = self.params.block_size.min(v.len());
        v[self.params.payment_index.min(end)..end].iter().copied().sum()
    }

    pub fn theta_bar(&self) -> ThetaBar {
        theta_bar(
            self.long_run.pi0,
            self.long_run.reward,
            self.params.tick,
            self.params.kappa,
            self.params.gamma,
        )
    }

    /// Hypotheses under which all three incentive properties are claimed.
    /// Returns a description of every failed hypothesis.
    pub fn theorem_preconditions(&self) -> Vec<String> {
        let mut failed = Vec::new();
        let lr = &self.long_run;
        let one = Rational::from_integer(1);
        if !lr.is_cartel() && self.params.tick * self.params.gamma <= (one - lr.pi0) * lr.reward {
            failed.push(format!(
                "tick {} must exceed (1 - pi0) R / gamma = {}",
                format_rational(&self.params.tick),
                format_rational(&((one - lr.pi0) * lr.reward / self.params.gamma))
            ));
        }
        match self.theta_bar() {
            ThetaBar::Infeasible => failed.push("theta_bar is infeasible".into()),
            ThetaBar::Bound { value } if self.params.theta > value => failed.push(format!(
                "theta {} exceeds theta_bar {}",
                format_rational(&self.params.theta),
                format_rational(&value)
            )),
            ThetaBar::Bound { .. } => {}
        }
        let tail = self.honest_tail_sum();
        if tail > self.params.kappa {
            failed.push(format!(
                "honest tail sum {} exceeds kappa {}",
                format_rational(&tail),
                format_rational(&self.params.kappa)
            ));
        }
        failed
    }

    /// Honest profile first, then corner profiles and seeded random ones.
    pub fn profiles(&self, corners: bool, sampled: usize, seed: u64) -> Vec<BidProfile> {
        let mut out = vec![self.honest_profile()];
        let n = self.values.len();
        if corners {
            let mut levels = vec![self.sorted_values()[0], *self.sorted_values().last().unwrap()];
            levels.dedup();
            for level in levels {
                out.push(BidProfile {
                    name: format!("all_equal@{}", format_rational(&level)),
                    amounts: vec![level; n],
                });
            }
            // Rank users by value and alternate the extremes of the grid.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| self.values[b].cmp(&self.values[a]).then(a.cmp(&b)));
            let mut amounts = vec![Rational::zero(); n];
            for (rank, &user) in order.iter().enumerate() {
                if rank % 2 == 0 {
                    amounts[user] = self.grid_max;
                }
            }
            out.push(BidProfile {
                name: "max_gap".into(),
                amounts,
            });
        }
        if sampled > 0 {
            let grid = self.grid();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..sampled {
                let amounts = (0..n).map(|_| grid[rng.gen_range(0..grid.len())]).collect();
                out.push(BidProfile {
                    name: format!("sampled#{i}"),
                    amounts,
                });
            }
        }
        out
    }
}
