//! The burning second-price auction with confirmation fraction `theta`.
//!
//! A block is produced from a mempool in four steps:
//!
//! 1. inclusion: the `B` highest bids, ordered by (amount desc, id asc);
//! 2. confirmation: a uniformly random subset of size `floor(theta * k / c)`
//!    drawn from the top `k` included bids;
//! 3. payment: every confirmed bid pays the `(k+1)`-th included amount;
//! 4. revenue: the miner receives `theta * (b_{k+1} + ... + b_B)` unless the
//!    confirmation set is empty, in which case it receives nothing. The rest
//!    of the collected payment is burned.
//!
//! All amounts are exact rationals. Expected quantities use the exact
//! confirmation probability `q = floor(theta * k / c) / k`.

use std::cmp::Ordering;
use std::fmt;

use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{self, floor_int, is_tick_multiple, serde_rational, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("{field} must be positive")]
    NonPositive { field: &'static str },
    #[error("payment index k={k} outside [{min}, {max}) for B={block_size}, c={collusion}")]
    KRange {
        k: usize,
        min: usize,
        max: usize,
        block_size: usize,
        collusion: usize,
    },
    #[error("{field}={value} must lie in (0, 1]")]
    BadFraction { field: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MechanismError {
    #[error("mempool is empty")]
    EmptyMempool,
    #[error("need at least {need} included bids, have {have}")]
    TooFewBids { have: usize, need: usize },
    #[error("bid {id}: {reason}")]
    InvalidBid { id: BidId, reason: String },
    #[error("burn invariant violated: collected payment minus revenue is {burn}")]
    BurnInvariant { burn: String },
}

/// Outcome of [`MechanismParams::validate`] for parameters that satisfy
/// every hard constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Validity {
    Ok,
    /// `floor(theta * k / c) = 0`: nothing is ever confirmed and the miner is paid nothing.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MechanismParams {
    /// `B`, number of slots in a block.
    #[serde(alias = "B")]
    pub block_size: usize,
    /// `k`, the confirmed bids pay the `(k+1)`-th included amount.
    #[serde(alias = "k")]
    pub payment_index: usize,
    /// `c`, largest coalition of users the mechanism must resist.
    #[serde(alias = "c")]
    pub collusion_size: usize,
    #[serde(with = "serde_rational")]
    pub theta: Rational,
    #[serde(with = "serde_rational")]
    pub gamma: Rational,
    /// Minimum bid increment.
    #[serde(with = "serde_rational", alias = "delta")]
    pub tick: Rational,
    /// Bound on the honest tail sum `v_{k+1} + ... + v_B`.
    #[serde(with = "serde_rational")]
    pub kappa: Rational,
}

impl MechanismParams {
    /// Smallest admissible `k`, i.e. `ceil(2cB / (2c + 1))`.
    pub fn min_payment_index(block_size: usize, collusion_size: usize) -> usize {
        let num = 2 * collusion_size * block_size;
        let den = 2 * collusion_size + 1;
        num.div_ceil(den)
    }

    pub fn validate(&self) -> Result<Validity, ParamError> {
        if self.block_size == 0 {
            return Err(ParamError::NonPositive { field: "block_size" });
        }
        if self.payment_index == 0 {
            return Err(ParamError::NonPositive { field: "payment_index" });
        }
        if self.collusion_size == 0 {
            return Err(ParamError::NonPositive { field: "collusion_size" });
        }
        let min = Self::min_payment_index(self.block_size, self.collusion_size);
        if self.payment_index < min || self.payment_index >= self.block_size {
            return Err(ParamError::KRange {
                k: self.payment_index,
                min,
                max: self.block_size,
                block_size: self.block_size,
                collusion: self.collusion_size,
            });
        }
        for (field, value) in [("theta", self.theta), ("gamma", self.gamma)] {
            if value <= Rational::zero() || value > Rational::one() {
                return Err(ParamError::BadFraction {
                    field,
                    value: rational::format_rational(&value),
                });
            }
        }
        if self.tick <= Rational::zero() {
            return Err(ParamError::NonPositive { field: "tick" });
        }
        if self.kappa <= Rational::zero() {
            return Err(ParamError::NonPositive { field: "kappa" });
        }
        Ok(if self.confirm_count() == 0 {
            Validity::Trivial
        } else {
            Validity::Ok
        })
    }

    /// `floor(theta * k / c)`.
    pub fn confirm_count(&self) -> usize {
        let x = self.theta * Rational::from_integer(self.payment_index as i128)
            / Rational::from_integer(self.collusion_size as i128);
        floor_int(&x).max(0) as usize
    }

    pub fn is_trivial(&self) -> bool {
        self.confirm_count() == 0
    }

    /// Upper bound `theta / c` used by the hand proofs in place of `q`.
    pub fn theta_over_c(&self) -> Rational {
        self.theta / Rational::from_integer(self.collusion_size as i128)
    }
}

/// `q = floor(theta * k / c) / k`, the chance that any given top-`k` bid is confirmed.
pub fn confirmation_probability(params: &MechanismParams) -> Rational {
    Rational::new(params.confirm_count() as i128, params.payment_index as i128)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BidId(pub u32);

impl fmt::Display for BidId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    User(u32),
    Miner,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub id: BidId,
    pub owner: Owner,
    #[serde(with = "serde_rational")]
    pub value: Rational,
    #[serde(with = "serde_rational")]
    pub amount: Rational,
    #[serde(default)]
    pub fake: bool,
}

impl Bid {
    pub fn honest(id: u32, user: u32, value: Rational) -> Self {
        Bid {
            id: BidId(id),
            owner: Owner::User(user),
            value,
            amount: value,
            fake: false,
        }
    }

    pub fn fake(id: u32, owner: Owner, amount: Rational) -> Self {
        Bid {
            id: BidId(id),
            owner,
            value: Rational::zero(),
            amount,
            fake: true,
        }
    }

    /// Tick and fake-value constraints.
    pub fn check(&self, tick: &Rational) -> Result<(), MechanismError> {
        let invalid = |reason: String| MechanismError::InvalidBid { id: self.id, reason };
        if !is_tick_multiple(&self.amount, tick) {
            return Err(invalid(format!(
                "amount {} is not a non-negative multiple of the tick {}",
                rational::format_rational(&self.amount),
                rational::format_rational(tick)
            )));
        }
        if self.value < Rational::zero() {
            return Err(invalid("negative value".into()));
        }
        if self.fake && !self.value.is_zero() {
            return Err(invalid("fake bids must have value 0".into()));
        }
        Ok(())
    }
}

/// Canonical order: amount descending, then id ascending.
pub fn bid_order(a: &Bid, b: &Bid) -> Ordering {
    b.amount.cmp(&a.amount).then(a.id.cmp(&b.id))
}

/// Inclusion rule: the `min(B, n)` highest bids in canonical order.
pub fn include(mempool: &[Bid], params: &MechanismParams) -> Result<Vec<Bid>, MechanismError> {
    let (included, _) = partition(mempool, params)?;
    Ok(included)
}

fn partition(
    mempool: &[Bid],
    params: &MechanismParams,
) -> Result<(Vec<Bid>, Vec<Bid>), MechanismError> {
    if mempool.is_empty() {
        return Err(MechanismError::EmptyMempool);
    }
    let mut sorted = mempool.to_vec();
    sorted.sort_by(bid_order);
    let rest = sorted.split_off(params.block_size.min(sorted.len()));
    Ok((sorted, rest))
}

fn require_tail(included: &[Bid], params: &MechanismParams) -> Result<(), MechanismError> {
    let need = params.payment_index + 1;
    if included.len() < need {
        return Err(MechanismError::TooFewBids {
            have: included.len(),
            need,
        });
    }
    Ok(())
}

/// Payment rule: `b_{k+1}` of a sorted inclusion list.
pub fn payment(included: &[Bid], params: &MechanismParams) -> Result<Rational, MechanismError> {
    require_tail(included, params)?;
    Ok(included[params.payment_index].amount)
}

/// Tail sum `b_{k+1} + ... + b_B` of a sorted inclusion list.
pub fn tail_sum(included: &[Bid], params: &MechanismParams) -> Result<Rational, MechanismError> {
    require_tail(included, params)?;
    Ok(included[params.payment_index..]
        .iter()
        .map(|b| b.amount)
        .sum())
}

/// Revenue rule: `theta` times the tail sum, or zero in the trivial regime.
pub fn miner_revenue(included: &[Bid], params: &MechanismParams) -> Result<Rational, MechanismError> {
    let tail = tail_sum(included, params)?;
    if params.is_trivial() {
        return Ok(Rational::zero());
    }
    Ok(params.theta * tail)
}

/// Collected payment minus miner revenue: `floor(theta k / c) b_{k+1} - theta (b_{k+1} + ... + b_B)`.
///
/// Non-negative whenever `k >= 2cB / (2c + 1)`; a negative value means the
/// parameters were never validated.
pub fn burn_check(included: &[Bid], params: &MechanismParams) -> Result<Rational, MechanismError> {
    let p = payment(included, params)?;
    let collected = Rational::from_integer(params.confirm_count() as i128) * p;
    let burn = collected - miner_revenue(included, params)?;
    if burn < Rational::zero() {
        return Err(MechanismError::BurnInvariant {
            burn: rational::format_rational(&burn),
        });
    }
    Ok(burn)
}

/// Confirmation rule: a uniform subset of the top `k` of size `floor(theta k / c)`.
///
/// The result is returned in inclusion order and depends only on `seed`.
pub fn sample_confirmed(
    included: &[Bid],
    params: &MechanismParams,
    seed: u64,
) -> Result<Vec<BidId>, MechanismError> {
    let k = params.payment_index;
    if included.len() < k {
        return Err(MechanismError::TooFewBids {
            have: included.len(),
            need: k,
        });
    }
    let size = params.confirm_count().min(k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, k, size).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| included[i].id).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockOutcome {
    /// Included bids in canonical order.
    pub included: Vec<Bid>,
    /// Mempool bids that did not make it into the block.
    pub excluded: Vec<Bid>,
    pub payment_index: usize,
    #[serde(with = "serde_rational")]
    pub payment: Rational,
    #[serde(with = "serde_rational")]
    pub confirm_prob: Rational,
    pub confirm_count: usize,
    #[serde(with = "serde_rational")]
    pub miner_revenue: Rational,
    #[serde(with = "serde_rational")]
    pub expected_burn: Rational,
    pub trivial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confirmed: Option<Vec<BidId>>,
}

impl BlockOutcome {
    pub fn top_k(&self) -> &[Bid] {
        &self.included[..self.payment_index.min(self.included.len())]
    }

    pub fn tail(&self) -> &[Bid] {
        &self.included[self.payment_index.min(self.included.len())..]
    }

    pub fn in_top_k(&self, id: BidId) -> bool {
        self.top_k().iter().any(|b| b.id == id)
    }

    /// Every bid of the originating mempool.
    pub fn all_bids(&self) -> impl Iterator<Item = &Bid> {
        self.included.iter().chain(self.excluded.iter())
    }
}

/// Runs inclusion, payment, revenue and burn for a mempool. Confirmation is
/// left unsampled; see [`execute_sampled`].
pub fn execute(mempool: &[Bid], params: &MechanismParams) -> Result<BlockOutcome, MechanismError> {
    let (included, excluded) = partition(mempool, params)?;
    let payment = payment(&included, params)?;
    let miner_revenue = miner_revenue(&included, params)?;
    let expected_burn = burn_check(&included, params)?;
    Ok(BlockOutcome {
        payment_index: params.payment_index,
        payment,
        confirm_prob: confirmation_probability(params),
        confirm_count: params.confirm_count(),
        miner_revenue,
        expected_burn,
        trivial: params.is_trivial(),
        confirmed: None,
        included,
        excluded,
    })
}

pub fn execute_sampled(
    mempool: &[Bid],
    params: &MechanismParams,
    seed: u64,
) -> Result<BlockOutcome, MechanismError> {
    let mut outcome = execute(mempool, params)?;
    outcome.confirmed = Some(sample_confirmed(&outcome.included, params, seed)?);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn params(b: usize, k: usize, c: usize, theta: Rational) -> MechanismParams {
        MechanismParams {
            block_size: b,
            payment_index: k,
            collusion_size: c,
            theta,
            gamma: int(1),
            tick: int(1),
            kappa: int(100),
        }
    }

    fn pool(amounts: &[i128]) -> Vec<Bid> {
        amounts
            .iter()
            .enumerate()
            .map(|(i, &a)| Bid::honest(i as u32, i as u32, int(a)))
            .collect()
    }

    fn amounts(bids: &[Bid]) -> Vec<Rational> {
        bids.iter().map(|b| b.amount).collect()
    }

    #[test]
    fn validate_examples() {
        assert_eq!(params(3, 2, 1, ratio(1, 2)).validate(), Ok(Validity::Ok));
        assert_eq!(params(3, 2, 1, ratio(2, 5)).validate(), Ok(Validity::Trivial));
        assert!(matches!(
            params(5, 3, 1, ratio(1, 2)).validate(),
            Err(ParamError::KRange { min: 4, .. })
        ));
        assert!(matches!(
            params(3, 3, 1, ratio(1, 2)).validate(),
            Err(ParamError::KRange { .. })
        ));
        assert!(matches!(
            params(3, 2, 1, ratio(3, 2)).validate(),
            Err(ParamError::BadFraction { field: "theta", .. })
        ));
        let mut p = params(3, 2, 1, ratio(1, 2));
        p.gamma = int(0);
        assert!(matches!(p.validate(), Err(ParamError::BadFraction { field: "gamma", .. })));
        p.gamma = int(1);
        p.tick = int(0);
        assert_eq!(p.validate(), Err(ParamError::NonPositive { field: "tick" }));
    }

    #[test]
    fn min_payment_index_is_ceiling() {
        assert_eq!(MechanismParams::min_payment_index(3, 1), 2);
        assert_eq!(MechanismParams::min_payment_index(5, 1), 4);
        assert_eq!(MechanismParams::min_payment_index(5, 2), 4);
        assert_eq!(MechanismParams::min_payment_index(10, 2), 8);
    }

    #[test]
    fn include_examples() {
        let p = params(5, 4, 1, ratio(1, 2));
        let inc = include(&pool(&[9, 7, 5, 4, 2, 1]), &p).unwrap();
        assert_eq!(amounts(&inc), [9, 7, 5, 4, 2].map(int));

        let p = params(2, 1, 1, ratio(1, 2));
        let inc = include(&pool(&[3, 3, 3]), &p).unwrap();
        assert_eq!(inc.iter().map(|b| b.id.0).collect::<Vec<_>>(), [0, 1]);

        let p = params(3, 2, 1, ratio(1, 2));
        assert_eq!(amounts(&include(&pool(&[5]), &p).unwrap()), [int(5)]);
        assert_eq!(include(&[], &p), Err(MechanismError::EmptyMempool));
    }

    #[test]
    fn payment_and_revenue_examples() {
        let p5 = params(5, 4, 1, ratio(1, 2));
        let inc = include(&pool(&[9, 7, 5, 4, 2]), &p5).unwrap();
        assert_eq!(payment(&inc, &p5).unwrap(), int(2));
        assert_eq!(miner_revenue(&inc, &p5).unwrap(), int(1));
        assert_eq!(burn_check(&inc, &p5).unwrap(), int(3));

        let p3 = params(3, 2, 1, ratio(1, 2));
        let inc = include(&pool(&[5, 3, 1]), &p3).unwrap();
        assert_eq!(payment(&inc, &p3).unwrap(), int(1));
        assert_eq!(miner_revenue(&inc, &p3).unwrap(), ratio(1, 2));
        assert_eq!(burn_check(&inc, &p3).unwrap(), ratio(1, 2));

        let trivial = params(3, 2, 1, ratio(2, 5));
        assert_eq!(miner_revenue(&inc, &trivial).unwrap(), int(0));

        let short = include(&pool(&[5, 3]), &p3).unwrap();
        assert_eq!(
            payment(&short, &p3),
            Err(MechanismError::TooFewBids { have: 2, need: 3 })
        );
        assert!(miner_revenue(&short, &p3).is_err());
    }

    #[test]
    fn confirmation_probability_examples() {
        assert_eq!(confirmation_probability(&params(3, 2, 1, ratio(1, 2))), ratio(1, 2));
        assert_eq!(confirmation_probability(&params(5, 4, 1, ratio(1, 2))), ratio(1, 2));
        assert_eq!(confirmation_probability(&params(5, 4, 2, ratio(2, 5))), int(0));
    }

    #[test]
    fn burn_tight_when_all_equal_at_minimum_k() {
        // k = 2cB/(2c+1) exactly: B = 3, c = 1, k = 2; also B = 5, c = 2, k = 4.
        for (b, k, c) in [(3, 2, 1), (5, 4, 2), (6, 4, 1)] {
            for theta in [ratio(1, 2), int(1), ratio(3, 4)] {
                let p = params(b, k, c, theta);
                if p.validate() != Ok(Validity::Ok) {
                    continue;
                }
                let inc = include(&pool(&vec![7; b]), &p).unwrap();
                assert!(burn_check(&inc, &p).unwrap() >= int(0));
            }
        }
    }

    #[test]
    fn sample_confirmed_sizes() {
        let p = params(3, 2, 1, int(1));
        let inc = include(&pool(&[5, 3, 1]), &p).unwrap();
        // theta = c = 1 gives size k: the full top-k.
        assert_eq!(sample_confirmed(&inc, &p, 7).unwrap(), vec![BidId(0), BidId(1)]);
        let trivial = params(3, 2, 1, ratio(2, 5));
        assert!(sample_confirmed(&inc, &trivial, 7).unwrap().is_empty());
        let half = params(3, 2, 1, ratio(1, 2));
        let s = sample_confirmed(&inc, &half, 7).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0] == BidId(0) || s[0] == BidId(1));
        assert_eq!(s, sample_confirmed(&inc, &half, 7).unwrap());
    }

    #[test]
    fn bid_check_rejects_off_tick_and_valued_fakes() {
        let tick = ratio(1, 2);
        assert!(Bid::honest(0, 0, ratio(3, 2)).check(&tick).is_ok());
        assert!(Bid::honest(0, 0, ratio(3, 4)).check(&tick).is_err());
        let mut f = Bid::fake(9, Owner::Miner, int(1));
        assert!(f.check(&tick).is_ok());
        f.value = int(1);
        assert!(f.check(&tick).is_err());
    }

    #[test]
    fn execute_reports_everything() {
        let p = params(5, 4, 1, ratio(1, 2));
        let out = execute(&pool(&[9, 7, 5, 4, 2, 1]), &p).unwrap();
        assert_eq!(out.payment, int(2));
        assert_eq!(out.miner_revenue, int(1));
        assert_eq!(out.expected_burn, int(3));
        assert_eq!(out.confirm_prob, ratio(1, 2));
        assert_eq!(out.excluded.len(), 1);
        assert_eq!(out.top_k().len(), 4);
        assert_eq!(out.tail().len(), 1);
    }
}
