//! Bounded-exhaustive incentive-compatibility checks.
//!
//! A check fixes a [`Scenario`], a bid profile for everyone not deviating,
//! and an actor (one user, the miner, or the miner with a coalition of at
//! most `c` users). It enumerates the actor's strategy space on the tick grid
//! and compares expected utilities against the honest run. Any strictly
//! positive improvement is a violation. "No violation" is therefore a claim
//! bounded by `grid_max` and the enumeration bounds, which every report
//! records.
//!
//! Utilities are exact expectations over the confirmation lottery. The
//! miner is valued with its long-run utility against the honest return of
//! the same bids; users with their strict gamma-utility.

mod counterexample;
mod scenario;
mod strategy;
mod suite;

pub use counterexample::{payer_overbid_prediction, payer_overbid_strategy, find_cscp_counterexample, Counterexample, SearchOptions};
pub use scenario::{BidProfile, Scenario};
pub use suite::{run_ic_suite, run_theorem_suite, sample_ic_scenario, sample_theorem_scenario, SuiteOptions, SuiteTally, MAX_VALUE_LEVEL};
pub use strategy::{
    enumerate_strategies, Action, DeviationStrategy, EnumerationBounds, StrategyKind, StrategyRequest,
    StrategySpace, FAKE_ID_BASE,
};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mechanism::{execute, Bid, BlockOutcome, MechanismError, Owner, ParamError};
use crate::rational::{format_rational, serde_rational, Rational};
use crate::utility::{
    expected_miner_return, expected_user_utility, joint_utility, long_run_miner_utility, LongRunError,
    LongRunParams,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    LongRun(#[from] LongRunError),
    #[error("grid_max {grid_max} is below the largest value plus two ticks ({need})")]
    GridTooSmall { grid_max: String, need: String },
    #[error("scenario has {users} users but the mechanism needs at least {need}")]
    TooFewUsers { users: usize, need: usize },
    #[error("{0} is not a multiple of the tick")]
    OffTick(String),
    #[error("user {0} does not exist")]
    UnknownUser(u32),
    #[error("user {0} bids off the tick grid")]
    OffGrid(u32),
    #[error("coalition of {size} users exceeds the collusion bound {max}")]
    CoalitionTooLarge { size: usize, max: usize },
    #[error("strategy space has {total} elements, budget is {budget} ({:.1}% coverage)", coverage * 100.0)]
    BudgetExceeded { total: u64, budget: u64, coverage: f64 },
    #[error("miner incentive check requires theta <= gamma")]
    ThetaAboveGamma,
}

/// Whose utility a deviation is judged by.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    User(u32),
    Miner,
    /// The miner together with these users.
    Coalition(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub actor: Actor,
    /// Bid profile of the users before the deviation.
    pub profile: BidProfile,
    pub strategy: DeviationStrategy,
    #[serde(with = "serde_rational")]
    pub honest_joint: Rational,
    #[serde(with = "serde_rational")]
    pub deviated_joint: Rational,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    pub violation: bool,
}

/// Self-contained violation record for regression fixtures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub scenario: Scenario,
    pub actor: Actor,
    pub profile: BidProfile,
    pub strategy: DeviationStrategy,
    #[serde(with = "serde_rational")]
    pub honest_joint: Rational,
    #[serde(with = "serde_rational")]
    pub deviated_joint: Rational,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
}

impl DeviationReport {
    pub fn to_record(&self, scenario: &Scenario) -> ViolationRecord {
        ViolationRecord {
            scenario: scenario.clone(),
            actor: self.actor.clone(),
            profile: self.profile.clone(),
            strategy: self.strategy.clone(),
            honest_joint: self.honest_joint,
            deviated_joint: self.deviated_joint,
            delta: self.delta,
        }
    }
}

/// Scores strategies of one actor against one bid profile.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    scenario: &'a Scenario,
    actor: Actor,
    profile: BidProfile,
    base: Vec<Bid>,
    long_run: LongRunParams,
    honest_joint: Rational,
}

impl<'a> Evaluator<'a> {
    pub fn new(scenario: &'a Scenario, profile: BidProfile, actor: Actor) -> Result<Self, VerifyError> {
        let base = scenario.mempool_for(&profile.amounts);
        let honest = execute(&base, &scenario.params)?;
        // Honest benchmark: the return of a miner following the rules on these bids.
        let long_run = scenario
            .long_run
            .with_honest_return(expected_miner_return(&honest, &scenario.params));
        let mut ev = Evaluator {
            scenario,
            actor,
            profile,
            base,
            long_run,
            honest_joint: Rational::zero(),
        };
        ev.honest_joint = ev.score(&honest);
        Ok(ev)
    }

    pub fn base(&self) -> &[Bid] {
        &self.base
    }

    pub fn honest_joint(&self) -> Rational {
        self.honest_joint
    }

    pub fn long_run(&self) -> &LongRunParams {
        &self.long_run
    }

    fn score(&self, outcome: &BlockOutcome) -> Rational {
        let params = &self.scenario.params;
        let user = |u: u32| expected_user_utility(Owner::User(u), outcome, params).total;
        let miner = || long_run_miner_utility(expected_miner_return(outcome, params), &self.long_run);
        match &self.actor {
            Actor::User(u) => user(*u),
            Actor::Miner => miner(),
            Actor::Coalition(users) => {
                let us: Vec<Rational> = users.iter().map(|&u| user(u)).collect();
                joint_utility(miner(), &us)
            }
        }
    }

    /// Outcome of the deviation; fails when the resulting block is too small.
    pub fn outcome(&self, strategy: &DeviationStrategy) -> Result<BlockOutcome, MechanismError> {
        execute(&strategy.apply(&self.base), &self.scenario.params)
    }

    pub fn evaluate(&self, strategy: &DeviationStrategy) -> Result<DeviationReport, MechanismError> {
        let deviated_joint = self.score(&self.outcome(strategy)?);
        let delta = deviated_joint - self.honest_joint;
        Ok(DeviationReport {
            actor: self.actor.clone(),
            profile: self.profile.clone(),
            strategy: strategy.clone(),
            honest_joint: self.honest_joint,
            deviated_joint,
            delta,
            violation: delta > Rational::zero(),
        })
    }
}

/// Recomputes a report's delta from scratch.
pub fn replay(scenario: &Scenario, report: &DeviationReport) -> Result<Rational, VerifyError> {
    let ev = Evaluator::new(scenario, report.profile.clone(), report.actor.clone())?;
    Ok(ev.evaluate(&report.strategy)?.delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CoalitionSearch {
    Exhaustive,
    /// Uniform draws from each coalition's space, without the honest composite.
    Sampled { per_coalition: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub bounds: EnumerationBounds,
    /// Add the all-equal and max-gap profiles for the other users.
    pub corner_profiles: bool,
    /// Additional random profiles for the other users.
    pub sampled_profiles: usize,
    pub profile_seed: u64,
    pub coalition_search: CoalitionSearch,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            bounds: EnumerationBounds::default(),
            corner_profiles: true,
            sampled_profiles: 0,
            profile_seed: 0,
            coalition_search: CoalitionSearch::Exhaustive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "UIC")]
    Uic,
    #[serde(rename = "MIC")]
    Mic,
    #[serde(rename = "c-SCP")]
    Cscp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub property: Property,
    #[serde(with = "serde_rational")]
    pub grid_max: Rational,
    pub bounds: EnumerationBounds,
    pub profiles: usize,
    pub evaluated: u64,
    /// Deviations producing a block with at most `k` bids; such blocks are invalid.
    pub skipped_invalid: u64,
    pub trivial_mechanism: bool,
    /// False when the property's hypotheses fail; verdicts are then outside the theorem.
    pub within_hypotheses: bool,
    pub precondition_failures: Vec<String>,
    /// Largest delta seen over all evaluated deviations.
    #[serde(with = "serde_rational")]
    pub max_delta: Rational,
    /// Exact `q` next to the `theta / c` bound used in hand proofs.
    #[serde(with = "serde_rational")]
    pub confirm_prob: Rational,
    #[serde(with = "serde_rational")]
    pub theta_over_c: Rational,
    pub violations: Vec<DeviationReport>,
}

impl CheckReport {
    fn new(property: Property, scenario: &Scenario, bounds: &EnumerationBounds) -> Self {
        CheckReport {
            property,
            grid_max: scenario.grid_max,
            bounds: bounds.clone(),
            profiles: 0,
            evaluated: 0,
            skipped_invalid: 0,
            trivial_mechanism: scenario.params.is_trivial(),
            within_hypotheses: true,
            precondition_failures: Vec::new(),
            max_delta: Rational::zero(),
            confirm_prob: crate::mechanism::confirmation_probability(&scenario.params),
            theta_over_c: scenario.params.theta_over_c(),
            violations: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// `q` is strictly below `theta / c`, so the hand bounds are not tight here.
    pub fn proof_bound_loose(&self) -> bool {
        self.confirm_prob < self.theta_over_c
    }

    fn absorb(&mut self, part: Partial) {
        self.evaluated += part.evaluated;
        self.skipped_invalid += part.skipped;
        if part.evaluated > 0 && (self.evaluated == part.evaluated || part.max_delta > self.max_delta) {
            self.max_delta = part.max_delta;
        }
        self.violations.extend(part.violations);
    }
}

#[derive(Default)]
struct Partial {
    evaluated: u64,
    skipped: u64,
    max_delta: Rational,
    violations: Vec<DeviationReport>,
}

impl Partial {
    fn merge(mut self, other: Partial) -> Partial {
        if other.evaluated > 0 && (self.evaluated == 0 || other.max_delta > self.max_delta) {
            self.max_delta = other.max_delta;
        }
        self.evaluated += other.evaluated;
        self.skipped += other.skipped;
        self.violations.extend(other.violations);
        self
    }
}

/// Evaluates the listed indices of `space`; results merge in index order.
fn scan(ev: &Evaluator<'_>, space: &StrategySpace, indices: &[u64]) -> Partial {
    indices
        .par_iter()
        .map(|&i| {
            let strategy = space.get(i);
            match ev.evaluate(&strategy) {
                Ok(report) => Partial {
                    evaluated: 1,
                    skipped: 0,
                    max_delta: report.delta,
                    violations: if report.violation { vec![report] } else { Vec::new() },
                },
                Err(_) => Partial {
                    skipped: 1,
                    ..Partial::default()
                },
            }
        })
        .reduce(Partial::default, Partial::merge)
}

fn scan_all(ev: &Evaluator<'_>, space: &StrategySpace) -> Partial {
    let indices: Vec<u64> = (0..space.len()).collect();
    scan(ev, space, &indices)
}

/// Users: no unilateral rebid (including a zero bid or an extra fake
/// identity) improves a user's utility, whatever the others bid.
pub fn check_uic(scenario: &Scenario, opts: &CheckOptions) -> Result<CheckReport, VerifyError> {
    scenario.validate()?;
    scenario.check_grid()?;
    let mut report = CheckReport::new(Property::Uic, scenario, &opts.bounds);
    let profiles = scenario.profiles(opts.corner_profiles, opts.sampled_profiles, opts.profile_seed);
    report.profiles = profiles.len();
    for profile in &profiles {
        for user in 0..scenario.users() {
            // The deviating user starts from the honest bid.
            let mut own = profile.clone();
            own.amounts[user as usize] = scenario.values[user as usize];
            let ev = Evaluator::new(scenario, own, Actor::User(user))?;
            let space =
                enumerate_strategies(scenario, ev.base(), &StrategyRequest::UserRebid { user }, &opts.bounds)?;
            report.absorb(scan_all(&ev, &space));
        }
    }
    Ok(report)
}

/// Miner: no deletion from the inclusion list and no fake injection raises
/// the miner's long-run utility, whatever the users bid.
pub fn check_mic(scenario: &Scenario, opts: &CheckOptions) -> Result<CheckReport, VerifyError> {
    scenario.validate()?;
    scenario.check_grid()?;
    let mut report = CheckReport::new(Property::Mic, scenario, &opts.bounds);
    if scenario.params.theta > scenario.params.gamma {
        report.within_hypotheses = false;
        report
            .precondition_failures
            .push(format!("theta {} exceeds gamma {}", format_rational(&scenario.params.theta), format_rational(&scenario.params.gamma)));
    }
    let profiles = scenario.profiles(opts.corner_profiles, opts.sampled_profiles, opts.profile_seed);
    report.profiles = profiles.len();
    for profile in profiles {
        let ev = Evaluator::new(scenario, profile, Actor::Miner)?;
        for request in [StrategyRequest::MinerDelete, StrategyRequest::MinerFake] {
            let space = enumerate_strategies(scenario, ev.base(), &request, &opts.bounds)?;
            report.absorb(scan_all(&ev, &space));
        }
    }
    Ok(report)
}

/// Miner plus `coalition`: no composite of deletions, fake replacements and
/// colluder rebids raises their joint utility. The other users bid honestly.
pub fn check_cscp(scenario: &Scenario, coalition: &[u32], opts: &CheckOptions) -> Result<CheckReport, VerifyError> {
    scenario.validate()?;
    scenario.check_grid()?;
    let mut report = CheckReport::new(Property::Cscp, scenario, &opts.bounds);
    report.precondition_failures = scenario.theorem_preconditions();
    report.within_hypotheses = report.precondition_failures.is_empty();
    report.profiles = 1;
    let ev = Evaluator::new(scenario, scenario.honest_profile(), Actor::Coalition(coalition.to_vec()))?;
    let request = StrategyRequest::Collusion {
        coalition: coalition.to_vec(),
    };
    let space = enumerate_strategies(scenario, ev.base(), &request, &opts.bounds)?;
    let part = match opts.coalition_search {
        CoalitionSearch::Exhaustive => scan_all(&ev, &space),
        CoalitionSearch::Sampled { per_coalition, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let indices: Vec<u64> = if per_coalition >= space.len() {
                (0..space.len()).collect()
            } else {
                (0..per_coalition).map(|_| rng.gen_range(0..space.len())).collect()
            };
            scan(&ev, &space, &indices)
        }
    };
    report.absorb(part);
    Ok(report)
}

/// Every coalition of size 1..=c, merged into one report.
pub fn check_cscp_all(scenario: &Scenario, opts: &CheckOptions) -> Result<CheckReport, VerifyError> {
    let mut merged: Option<CheckReport> = None;
    for coalition in coalitions(scenario.users(), scenario.params.collusion_size) {
        let r = check_cscp(scenario, &coalition, opts)?;
        match merged.as_mut() {
            None => merged = Some(r),
            Some(m) => {
                m.profiles += r.profiles;
                m.absorb(Partial {
                    evaluated: r.evaluated,
                    skipped: r.skipped_invalid,
                    max_delta: r.max_delta,
                    violations: r.violations,
                });
            }
        }
    }
    merged.ok_or(VerifyError::TooFewUsers { users: 0, need: 1 })
}

/// All subsets of `0..users` with 1..=max_size elements, in lexicographic order.
pub fn coalitions(users: u32, max_size: usize) -> Vec<Vec<u32>> {
    fn rec(start: u32, users: u32, left: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if left == 0 {
            return;
        }
        for u in start..users {
            cur.push(u);
            rec(u + 1, users, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, users, max_size, &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}
