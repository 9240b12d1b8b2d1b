//! Randomized scenario suites built on the exhaustive checks.

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_cscp, check_mic, check_uic, coalitions, CheckOptions, CheckReport, CoalitionSearch, Scenario};
use super::{VerifyError, ViolationRecord};
use crate::mechanism::MechanismParams;
use crate::rational::{serde_rational, Rational};
use crate::utility::{LongRunParams, ThetaBar};

/// Largest honest value, in ticks. With two ticks of headroom the grid
/// has at most ten levels.
pub const MAX_VALUE_LEVEL: i128 = 7;

fn r(n: i128, d: i128) -> Rational {
    Rational::new(n, d)
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> T {
    *items.choose(rng).expect("non-empty")
}

/// Multiples of 1/20 in `[lo, hi]`.
fn twentieths(lo: Rational, hi: Rational) -> Vec<Rational> {
    (1..=20).map(|i| r(i, 20)).filter(|t| *t >= lo && *t <= hi).collect()
}

fn random_values(rng: &mut ChaCha8Rng, users: usize, tick: Rational) -> Vec<Rational> {
    (0..users)
        .map(|_| tick * Rational::from_integer(rng.gen_range(1..=MAX_VALUE_LEVEL)))
        .collect()
}

fn shapes(collusion: usize) -> &'static [(usize, usize)] {
    // (B, k) pairs with ceil(2cB / (2c + 1)) <= k < B and B <= 5.
    if collusion == 1 {
        &[(3, 2), (4, 3), (5, 4)]
    } else {
        &[(5, 4)]
    }
}

fn finish(values: Vec<Rational>, params: MechanismParams, long_run: LongRunParams) -> Scenario {
    let top = values.iter().copied().max().unwrap_or_else(Rational::zero);
    Scenario {
        grid_max: top + params.tick * Rational::from_integer(2),
        values,
        params,
        long_run,
    }
}

/// A non-trivial scenario with `B <= 5`, `c <= 2` and `theta <= gamma`.
pub fn sample_ic_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    loop {
        let collusion = pick(rng, &[1usize, 1, 2]);
        let (block_size, payment_index) = pick(rng, shapes(collusion));
        let gamma = pick(rng, &[r(1, 4), r(1, 2), r(3, 4), r(1, 1)]);
        let lo = r(collusion as i128, payment_index as i128);
        let thetas = twentieths(lo, gamma);
        if thetas.is_empty() {
            continue;
        }
        let tick = pick(rng, &[r(1, 1), r(1, 2)]);
        let params = MechanismParams {
            block_size,
            payment_index,
            collusion_size: collusion,
            theta: pick(rng, &thetas),
            gamma,
            tick,
            kappa: Rational::from_integer(100),
        };
        let pi0 = pick(rng, &[r(1, 5), r(1, 4), r(1, 2), r(3, 4), r(1, 1)]);
        let reward = pick(rng, &[r(0, 1), r(1, 2), r(1, 1), r(2, 1)]);
        let long_run = LongRunParams::new(pi0, reward, Rational::zero()).expect("valid");
        let users = rng.gen_range(payment_index + 1..=block_size + 1);
        return finish(random_values(rng, users, tick), params, long_run);
    }
}

/// A non-trivial scenario satisfying every hypothesis of the collusion
/// theorem for coalitions of up to `collusion` users.
pub fn sample_theorem_scenario(rng: &mut ChaCha8Rng, collusion: usize) -> Scenario {
    loop {
        let (block_size, payment_index) = pick(rng, shapes(collusion));
        let tick = pick(rng, &[r(1, 1), r(1, 2)]);
        let gamma = pick(rng, &[r(1, 2), r(3, 4), r(1, 1)]);
        let pi0 = pick(rng, &[r(1, 2), r(2, 3), r(3, 4), r(9, 10), r(19, 20), r(1, 1)]);
        let reward = pick(rng, &[r(1, 10), r(1, 4), r(1, 2), r(1, 1)]);
        let users = rng.gen_range(payment_index + 1..=block_size + 1);
        let values = random_values(rng, users, tick);
        let long_run = LongRunParams::new(pi0, reward, Rational::zero()).expect("valid");
        let mut params = MechanismParams {
            block_size,
            payment_index,
            collusion_size: collusion,
            theta: Rational::from_integer(1),
            gamma,
            tick,
            kappa: Rational::from_integer(1),
        };
        let mut scenario = finish(values, params, long_run);
        params.kappa = scenario.honest_tail_sum() + tick * Rational::from_integer(rng.gen_range(0..=1));
        scenario.params = params;
        let bar = match scenario.theta_bar() {
            ThetaBar::Bound { value } => value,
            ThetaBar::Infeasible => continue,
        };
        let thetas = twentieths(r(collusion as i128, payment_index as i128), bar.min(gamma));
        if thetas.is_empty() {
            continue;
        }
        scenario.params.theta = pick(rng, &thetas);
        if scenario.theorem_preconditions().is_empty() {
            return scenario;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub scenarios: usize,
    pub seed: u64,
    pub check: CheckOptions,
    /// Composites drawn per coalition of two or more users.
    pub sampled_composites: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            scenarios: 100,
            seed: 0,
            check: CheckOptions {
                sampled_profiles: 2,
                ..CheckOptions::default()
            },
            sampled_composites: 2000,
        }
    }
}

/// Aggregate over a suite of scenarios for one property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTally {
    pub property: String,
    pub scenarios: usize,
    pub evaluated: u64,
    pub skipped_invalid: u64,
    pub out_of_hypotheses: usize,
    /// Scenarios where `q < theta / c`, so hand bounds via `theta / c` are loose.
    pub loose_proof_bound: usize,
    #[serde(with = "serde_rational")]
    pub max_delta: Rational,
    pub violations: Vec<ViolationRecord>,
}

impl SuiteTally {
    fn new(property: &str) -> Self {
        SuiteTally {
            property: property.into(),
            scenarios: 0,
            evaluated: 0,
            skipped_invalid: 0,
            out_of_hypotheses: 0,
            loose_proof_bound: 0,
            max_delta: Rational::zero(),
            violations: Vec::new(),
        }
    }

    fn add(&mut self, scenario: &Scenario, report: &CheckReport) {
        if self.evaluated == 0 || report.max_delta > self.max_delta {
            self.max_delta = report.max_delta;
        }
        self.evaluated += report.evaluated;
        self.skipped_invalid += report.skipped_invalid;
        self.violations
            .extend(report.violations.iter().map(|v| v.to_record(scenario)));
    }

    fn close_scenario(&mut self, report: &CheckReport) {
        self.scenarios += 1;
        self.out_of_hypotheses += usize::from(!report.within_hypotheses);
        self.loose_proof_bound += usize::from(report.proof_bound_loose());
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// User and miner incentive checks on random scenarios.
pub fn run_ic_suite(opts: &SuiteOptions) -> Result<(SuiteTally, SuiteTally), VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut uic = SuiteTally::new("UIC");
    let mut mic = SuiteTally::new("MIC");
    for i in 0..opts.scenarios {
        let scenario = sample_ic_scenario(&mut rng);
        let check = CheckOptions {
            profile_seed: opts.seed ^ i as u64,
            ..opts.check.clone()
        };
        let u = check_uic(&scenario, &check)?;
        uic.add(&scenario, &u);
        uic.close_scenario(&u);
        let m = check_mic(&scenario, &check)?;
        mic.add(&scenario, &m);
        mic.close_scenario(&m);
    }
    Ok((uic, mic))
}

/// Collusion checks on random scenarios inside the theorem's hypotheses.
/// Single-user coalitions are searched exhaustively, larger ones by sampling.
pub fn run_theorem_suite(opts: &SuiteOptions, collusion: usize) -> Result<SuiteTally, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tally = SuiteTally::new(&format!("c-SCP (c={collusion})"));
    for i in 0..opts.scenarios {
        let scenario = sample_theorem_scenario(&mut rng, collusion);
        let mut last = None;
        for coalition in coalitions(scenario.users(), collusion) {
            let search = if coalition.len() == 1 {
                CoalitionSearch::Exhaustive
            } else {
                CoalitionSearch::Sampled {
                    per_coalition: opts.sampled_composites,
                    seed: opts.seed ^ ((i as u64) << 16) ^ coalition.iter().fold(0, |a, &u| a * 31 + u as u64 + 1),
                }
            };
            let check = CheckOptions {
                coalition_search: search,
                ..opts.check.clone()
            };
            let report = check_cscp(&scenario, &coalition, &check)?;
            tally.add(&scenario, &report);
            last = Some(report);
        }
        if let Some(report) = last {
            tally.close_scenario(&report);
        }
    }
    Ok(tally)
}
