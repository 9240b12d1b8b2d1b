//! Finite deviation spaces.
//!
//! Every space is indexable: `get(i)` decodes the `i`-th strategy from a
//! mixed-radix index, so enumeration is lazy, the order is fixed and the
//! count is exact. Uniform sampling is a uniform draw of the index.

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::VerifyError;
use crate::mechanism::{Bid, BidId, Owner};
use crate::rational::{serde_rational, Rational};

/// Ids at or above this value belong to injected fake bids.
pub const FAKE_ID_BASE: u32 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Leave a real bid out of consideration; inclusion back-fills from the rest.
    Delete { bid: BidId },
    AddFake {
        bid: BidId,
        owner: Owner,
        #[serde(with = "serde_rational")]
        amount: Rational,
    },
    Rebid {
        user: u32,
        #[serde(with = "serde_rational")]
        amount: Rational,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StrategyKind {
    UserRebid,
    MinerDelete,
    MinerFake,
    Collusion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationStrategy {
    pub kind: StrategyKind,
    pub actions: Vec<Action>,
}

impl DeviationStrategy {
    pub fn honest(kind: StrategyKind) -> Self {
        DeviationStrategy {
            kind,
            actions: Vec::new(),
        }
    }

    /// Applies the actions in order. Actions touch disjoint bids, so any
    /// order yields the same final mempool.
    pub fn apply(&self, base: &[Bid]) -> Vec<Bid> {
        let mut pool = base.to_vec();
        for action in &self.actions {
            match action {
                Action::Delete { bid } => pool.retain(|b| b.id != *bid),
                Action::AddFake { bid, owner, amount } => {
                    pool.push(Bid::fake(bid.0, *owner, *amount));
                }
                Action::Rebid { user, amount } => {
                    if let Some(b) = pool
                        .iter_mut()
                        .find(|b| b.owner == Owner::User(*user) && !b.fake)
                    {
                        b.amount = *amount;
                    }
                }
            }
        }
        pool
    }

    pub fn is_noop(&self, base: &[Bid]) -> bool {
        self.actions.iter().all(|a| match a {
            Action::Rebid { user, amount } => base
                .iter()
                .any(|b| b.owner == Owner::User(*user) && b.amount == *amount),
            _ => false,
        })
    }
}

/// What a space deviates on behalf of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyRequest {
    UserRebid { user: u32 },
    MinerDelete,
    MinerFake,
    Collusion { coalition: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumerationBounds {
    /// Largest number of fake bids injected by the miner in one strategy.
    pub max_fakes: usize,
    /// Lets a deviating user add one fresh zero-value identity on the grid.
    pub user_fake_identity: bool,
    /// Refuse spaces larger than this.
    pub budget: Option<u64>,
}

impl Default for EnumerationBounds {
    fn default() -> Self {
        EnumerationBounds {
            max_fakes: 1,
            user_fake_identity: true,
            budget: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Space {
    UserRebid {
        user: u32,
        grid: Vec<Rational>,
        fakes: Vec<Rational>,
        honest_pos: u64,
    },
    MinerDelete {
        candidates: Vec<BidId>,
    },
    MinerFake {
        candidates: Vec<BidId>,
        fakes: Vec<Vec<Rational>>,
    },
    Collusion {
        coalition: Vec<u32>,
        candidates: Vec<BidId>,
        fakes: Vec<Vec<Rational>>,
        grid: Vec<Rational>,
    },
}

/// Lazily enumerable, exactly counted strategy set.
#[derive(Debug, Clone)]
pub struct StrategySpace {
    kind: StrategyKind,
    space: Space,
    len: u64,
}

/// All multisets of `levels` with size in `min_size..=max_size`, smallest first.
fn multisets(levels: &[Rational], min_size: usize, max_size: usize) -> Vec<Vec<Rational>> {
    fn extend(levels: &[Rational], start: usize, left: usize, cur: &mut Vec<Rational>, out: &mut Vec<Vec<Rational>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..levels.len() {
            cur.push(levels[i]);
            extend(levels, i, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in min_size..=max_size {
        extend(levels, 0, size, &mut Vec::new(), &mut out);
    }
    out
}

fn fake_actions(owner: Owner, amounts: &[Rational]) -> impl Iterator<Item = Action> + '_ {
    amounts.iter().enumerate().map(move |(i, &amount)| Action::AddFake {
        bid: BidId(FAKE_ID_BASE + i as u32),
        owner,
        amount,
    })
}

fn delete_actions(candidates: &[BidId], mask: u64) -> impl Iterator<Item = Action> + '_ {
    candidates
        .iter()
        .enumerate()
        .filter(move |(i, _)| mask >> i & 1 == 1)
        .map(|(_, &bid)| Action::Delete { bid })
}

impl StrategySpace {
    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, index: u64) -> DeviationStrategy {
        assert!(index < self.len, "strategy index out of range");
        let actions = match &self.space {
            Space::UserRebid {
                user,
                grid,
                fakes,
                honest_pos,
            } => {
                let pos = if index < *honest_pos { index } else { index + 1 };
                let per = 1 + fakes.len() as u64;
                let amount = grid[(pos / per) as usize];
                let fake = (pos % per) as usize;
                let mut actions = vec![Action::Rebid { user: *user, amount }];
                if fake > 0 {
                    actions.extend(fake_actions(Owner::User(*user), &fakes[fake - 1..fake]));
                }
                actions
            }
            Space::MinerDelete { candidates } => delete_actions(candidates, index + 1).collect(),
            Space::MinerFake { candidates, fakes } => {
                let f = (index % fakes.len() as u64) as usize;
                let mask = index / fakes.len() as u64;
                delete_actions(candidates, mask)
                    .chain(fake_actions(Owner::Miner, &fakes[f]))
                    .collect()
            }
            Space::Collusion {
                coalition,
                candidates,
                fakes,
                grid,
            } => {
                let g = grid.len() as u64;
                let rebids = g.pow(coalition.len() as u32);
                let mut r = index % rebids;
                let rest = index / rebids;
                let f = (rest % fakes.len() as u64) as usize;
                let mask = rest / fakes.len() as u64;
                let mut actions: Vec<Action> = delete_actions(candidates, mask)
                    .chain(fake_actions(Owner::Miner, &fakes[f]))
                    .collect();
                for &user in coalition {
                    actions.push(Action::Rebid {
                        user,
                        amount: grid[(r % g) as usize],
                    });
                    r /= g;
                }
                actions
            }
        };
        DeviationStrategy {
            kind: self.kind,
            actions,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = DeviationStrategy> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }
}

/// Builds the deviation space of `request` against the bids `base`.
///
/// * `UserRebid`: every grid amount other than the honest one, optionally
///   paired with one extra zero-value identity bidding a positive grid amount.
/// * `MinerDelete`: every non-empty subset of the honest inclusion list.
/// * `MinerFake`: any deletion subset (possibly empty) combined with a
///   non-empty multiset of at most `max_fakes` fake amounts.
/// * `Collusion`: deletions of non-colluder bids, then up to `max_fakes`
///   fakes, then a grid rebid for every colluder. The honest composite is
///   the first element.
pub fn enumerate_strategies(
    scenario: &Scenario,
    base: &[Bid],
    request: &StrategyRequest,
    bounds: &EnumerationBounds,
) -> Result<StrategySpace, VerifyError> {
    let grid = scenario.grid();
    let positive: Vec<Rational> = grid.iter().copied().filter(|a| *a > Rational::from_integer(0)).collect();
    let (kind, space) = match request {
        StrategyRequest::UserRebid { user } => {
            let bid = base
                .iter()
                .find(|b| b.owner == Owner::User(*user))
                .ok_or(VerifyError::UnknownUser(*user))?;
            let fakes = if bounds.user_fake_identity {
                positive
            } else {
                Vec::new()
            };
            let per = 1 + fakes.len() as u64;
            let idx = grid
                .iter()
                .position(|a| *a == bid.amount)
                .ok_or(VerifyError::OffGrid(*user))?;
            (
                StrategyKind::UserRebid,
                Space::UserRebid {
                    user: *user,
                    grid,
                    fakes,
                    honest_pos: idx as u64 * per,
                },
            )
        }
        StrategyRequest::MinerDelete => {
            let included = crate::mechanism::include(base, &scenario.params)?;
            (
                StrategyKind::MinerDelete,
                Space::MinerDelete {
                    candidates: included.iter().map(|b| b.id).collect(),
                },
            )
        }
        StrategyRequest::MinerFake => {
            let included = crate::mechanism::include(base, &scenario.params)?;
            (
                StrategyKind::MinerFake,
                Space::MinerFake {
                    candidates: included.iter().map(|b| b.id).collect(),
                    fakes: multisets(&grid, 1, bounds.max_fakes),
                },
            )
        }
        StrategyRequest::Collusion { coalition } => {
            if coalition.len() > scenario.params.collusion_size {
                return Err(VerifyError::CoalitionTooLarge {
                    size: coalition.len(),
                    max: scenario.params.collusion_size,
                });
            }
            for u in coalition {
                if *u >= scenario.users() {
                    return Err(VerifyError::UnknownUser(*u));
                }
            }
            let candidates = base
                .iter()
                .filter(|b| !b.fake && !matches!(b.owner, Owner::User(u) if coalition.contains(&u)))
                .map(|b| b.id)
                .collect();
            (
                StrategyKind::Collusion,
                Space::Collusion {
                    coalition: coalition.clone(),
                    candidates,
                    fakes: multisets(&grid, 0, bounds.max_fakes),
                    grid,
                },
            )
        }
    };
    let len = space_len(&space).ok_or(VerifyError::BudgetExceeded {
        total: u64::MAX,
        budget: bounds.budget.unwrap_or(u64::MAX),
        coverage: 0.0,
    })?;
    if let Some(budget) = bounds.budget {
        if len > budget {
            return Err(VerifyError::BudgetExceeded {
                total: len,
                budget,
                coverage: budget as f64 / len as f64,
            });
        }
    }
    Ok(StrategySpace { kind, space, len })
}

fn space_len(space: &Space) -> Option<u64> {
    let subsets = |n: usize| 1u64.checked_shl(n as u32);
    match space {
        Space::UserRebid { grid, fakes, .. } => {
            (grid.len() as u64).checked_mul(1 + fakes.len() as u64)?.checked_sub(1)
        }
        Space::MinerDelete { candidates } => subsets(candidates.len())?.checked_sub(1),
        Space::MinerFake { candidates, fakes } => subsets(candidates.len())?.checked_mul(fakes.len() as u64),
        Space::Collusion {
            coalition,
            candidates,
            fakes,
            grid,
        } => subsets(candidates.len())?
            .checked_mul(fakes.len() as u64)?
            .checked_mul((grid.len() as u64).checked_pow(coalition.len() as u32)?),
    }
}
