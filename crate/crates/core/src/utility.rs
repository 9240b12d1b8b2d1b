//! Strict gamma-utilities for users and the miner, the long-run miner
//! utility of a stake process, and the admissible confirmation fraction.
//!
//! A user bid in the top `k` is confirmed with probability `q` and then
//! yields `v - p`; with probability `1 - q` it stays unconfirmed and costs
//! `gamma * (b - v)^+`. Any bid outside the top `k`, included or not, is
//! unconfirmed for certain. The miner's return is its revenue plus the same
//! expression over its own fake bids (value zero).

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{BlockOutcome, MechanismParams, Owner};
use crate::rational::{positive_part, serde_rational, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    #[serde(with = "serde_rational")]
    pub confirmed_gain: Rational,
    #[serde(with = "serde_rational")]
    pub overbid_penalty: Rational,
    #[serde(with = "serde_rational")]
    pub total: Rational,
}

impl UtilityBreakdown {
    fn add(&mut self, gain: Rational, penalty: Rational) {
        self.confirmed_gain += gain;
        self.overbid_penalty += penalty;
        self.total = self.confirmed_gain - self.overbid_penalty;
    }
}

/// Expected strict gamma-utility of everything `owner` has in the mempool.
pub fn expected_user_utility(
    owner: Owner,
    outcome: &BlockOutcome,
    params: &MechanismParams,
) -> UtilityBreakdown {
    let q = outcome.confirm_prob;
    let mut u = UtilityBreakdown::default();
    for bid in outcome.top_k().iter().filter(|b| b.owner == owner) {
        let overbid = positive_part(bid.amount - bid.value);
        u.add(
            q * (bid.value - outcome.payment),
            (Rational::one() - q) * params.gamma * overbid,
        );
    }
    let rest = outcome.tail().iter().chain(outcome.excluded.iter());
    for bid in rest.filter(|b| b.owner == owner) {
        u.add(Rational::zero(), params.gamma * positive_part(bid.amount - bid.value));
    }
    u
}

/// Expected strict gamma-return of the miner: revenue plus the utility of
/// its own (fake, zero-valued) bids.
pub fn expected_miner_return(outcome: &BlockOutcome, params: &MechanismParams) -> Rational {
    outcome.miner_revenue + expected_user_utility(Owner::Miner, outcome, params).total
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LongRunError {
    #[error("initial stake share must lie in (0, 1), got {0}")]
    ShareOutOfRange(String),
    #[error("reward must be non-negative")]
    NegativeReward,
}

/// Miner's stake share, block reward and honest benchmark return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LongRunParams {
    #[serde(with = "serde_rational")]
    pub pi0: Rational,
    #[serde(with = "serde_rational")]
    pub reward: Rational,
    /// Return of the miner when everyone is honest.
    #[serde(with = "serde_rational", default)]
    pub honest_return: Rational,
}

impl LongRunParams {
    pub fn new(pi0: Rational, reward: Rational, honest_return: Rational) -> Result<Self, LongRunError> {
        let lr = LongRunParams {
            pi0,
            reward,
            honest_return,
        };
        lr.validate()?;
        Ok(lr)
    }

    /// A miner (or miner cartel) holding every stake.
    pub fn cartel(reward: Rational, honest_return: Rational) -> Self {
        LongRunParams {
            pi0: Rational::one(),
            reward,
            honest_return,
        }
    }

    pub fn is_cartel(&self) -> bool {
        self.pi0 == Rational::one()
    }

    /// Accepts `0 < pi0 < 1`, or `pi0 = 1` (cartel).
    pub fn validate(&self) -> Result<(), LongRunError> {
        if self.pi0 <= Rational::zero() || self.pi0 > Rational::one() {
            return Err(LongRunError::ShareOutOfRange(crate::rational::format_rational(&self.pi0)));
        }
        if self.reward < Rational::zero() {
            return Err(LongRunError::NegativeReward);
        }
        Ok(())
    }

    pub fn with_honest_return(mut self, honest_return: Rational) -> Self {
        self.honest_return = honest_return;
        self
    }
}

/// Long-run average stake gain per block for a miner whose per-block return
/// is `actual_return`, against a population paid `honest_return`.
///
/// Discontinuous at the honest return: `pi0 (p_h + R)` there, `p + R` above
/// and `0` below. A cartel gets `p + R` everywhere.
pub fn long_run_miner_utility(actual_return: Rational, lr: &LongRunParams) -> Rational {
    if lr.is_cartel() {
        return actual_return + lr.reward;
    }
    match actual_return.cmp(&lr.honest_return) {
        std::cmp::Ordering::Equal => lr.pi0 * (lr.honest_return + lr.reward),
        std::cmp::Ordering::Greater => actual_return + lr.reward,
        std::cmp::Ordering::Less => Rational::zero(),
    }
}

/// `(overshoot, undershoot)` of the long-run utility at a deviation of size `epsilon`.
pub fn utility_jumps(lr: &LongRunParams, epsilon: Rational) -> (Rational, Rational) {
    let g_h = lr.honest_return + lr.reward;
    let over = epsilon + (Rational::one() - lr.pi0) * g_h;
    let under = if lr.is_cartel() {
        epsilon
    } else {
        lr.pi0 * g_h
    };
    (over, under)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ThetaBar {
    Bound {
        #[serde(with = "serde_rational")]
        value: Rational,
    },
    /// The tick does not exceed `(1 - pi0) R / gamma`.
    Infeasible,
}

impl ThetaBar {
    pub fn value(&self) -> Option<Rational> {
        match self {
            ThetaBar::Bound { value } => Some(*value),
            ThetaBar::Infeasible => None,
        }
    }
}

/// Largest confirmation fraction under which the mechanism keeps users,
/// miner and coalitions honest:
///
/// `min( pi0 R / ((1 - pi0) kappa), (gamma tick - (1 - pi0) R) / ((1 - pi0) kappa + tick) )`,
/// defined only when `tick > (1 - pi0) R / gamma`. For `pi0 = 1` it is `gamma`.
pub fn theta_bar(
    pi0: Rational,
    reward: Rational,
    tick: Rational,
    kappa: Rational,
    gamma: Rational,
) -> ThetaBar {
    match theta_bar_generic(pi0, reward, tick, kappa, gamma) {
        Some(value) => ThetaBar::Bound { value },
        None => ThetaBar::Infeasible,
    }
}

/// Floating-point twin of [`theta_bar`], used for plotting sweeps.
pub fn theta_bar_f64(pi0: f64, reward: f64, tick: f64, kappa: f64, gamma: f64) -> Option<f64> {
    theta_bar_generic(pi0, reward, tick, kappa, gamma)
}

fn theta_bar_generic<T>(pi0: T, reward: T, tick: T, kappa: T, gamma: T) -> Option<T>
where
    T: num_traits::Num + PartialOrd + Copy,
{
    let rest = T::one() - pi0;
    if rest == T::zero() {
        return Some(gamma);
    }
    // tick > (1 - pi0) R / gamma, rearranged to avoid the division.
    if gamma * tick <= rest * reward {
        return None;
    }
    let undershoot = pi0 * reward / (rest * kappa);
    let overshoot = (gamma * tick - rest * reward) / (rest * kappa + tick);
    Some(if undershoot < overshoot {
        undershoot
    } else {
        overshoot
    })
}

/// Reward at which `theta_bar` peaks: `(1 - pi0) kappa gamma tick / ((1 - pi0) kappa + pi0 tick)`.
pub fn theta_bar_peak_reward(pi0: f64, tick: f64, kappa: f64, gamma: f64) -> f64 {
    (1.0 - pi0) * kappa * gamma * tick / ((1.0 - pi0) * kappa + pi0 * tick)
}

/// Miner long-run utility plus the colluding users' gamma-utilities.
pub fn joint_utility(miner_utility: Rational, colluder_utilities: &[Rational]) -> Rational {
    miner_utility + colluder_utilities.iter().copied().sum::<Rational>()
}
