use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{coalitions, enumerate_strategies, Actor, DeviationReport, Evaluator, Scenario, StrategyRequest, VerifyError};
use super::{Action, DeviationStrategy, EnumerationBounds, StrategyKind};
use crate::mechanism::{execute, BidId, MechanismParams};
use crate::rational::Rational;
use crate::utility::LongRunParams;

/// Limits of the instance search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Values range over `1..=max_level` ticks.
    pub max_level: u32,
    /// Stop after this many value vectors.
    pub max_instances: u64,
    pub bounds: EnumerationBounds,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            max_level: 6,
            max_instances: 200,
            bounds: EnumerationBounds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub scenario: Scenario,
    pub coalition: Vec<u32>,
    pub report: DeviationReport,
    /// Closed-form delta when the violation is a single upward rebid by the payer.
    #[serde(with = "crate::rational::serde_rational::option")]
    pub predicted: Option<Rational>,
    pub instances_searched: u64,
}

/// The payer (the `k+1`-th ranked user) raises its bid by `epsilon`.
pub fn payer_overbid_strategy(scenario: &Scenario, epsilon: Rational) -> DeviationStrategy {
    let payer = payer(scenario);
    DeviationStrategy {
        kind: StrategyKind::Collusion,
        actions: vec![Action::Rebid {
            user: payer,
            amount: scenario.values[payer as usize] + epsilon,
        }],
    }
}

/// `(1 - pi0)(theta * tail + R) + (theta - gamma) epsilon`, valid while the
/// raised bid keeps its rank.
pub fn payer_overbid_prediction(scenario: &Scenario, epsilon: Rational) -> Rational {
    let p = &scenario.params;
    let lr = &scenario.long_run;
    let one = Rational::from_integer(1);
    (one - lr.pi0) * (p.theta * scenario.honest_tail_sum() + lr.reward) + (p.theta - p.gamma) * epsilon
}

fn payer(scenario: &Scenario) -> u32 {
    let mut order: Vec<u32> = (0..scenario.users()).collect();
    order.sort_by(|&a, &b| {
        scenario.values[b as usize]
            .cmp(&scenario.values[a as usize])
            .then(a.cmp(&b))
    });
    order[scenario.params.payment_index]
}

/// Non-increasing vectors of `len` levels in `1..=max_level`, by sum, then
/// lexicographically.
fn value_vectors(len: usize, max_level: u32) -> Vec<Vec<u32>> {
    fn rec(len: usize, cap: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for l in (1..=cap).rev() {
            cur.push(l);
            rec(len, l, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(len, max_level, &mut Vec::new(), &mut out);
    out.sort_by(|a, b| a.iter().sum::<u32>().cmp(&b.iter().sum()).then(a.cmp(b)));
    out
}

/// Searches small instances for a coalition of the miner and up to `c`
/// users that gains by deviating. The search does not consult the
/// hypotheses that would rule such an instance out.
pub fn find_cscp_counterexample(
    params: &MechanismParams,
    long_run: &LongRunParams,
    opts: &SearchOptions,
) -> Result<Option<Counterexample>, VerifyError> {
    params.validate()?;
    long_run.validate()?;
    let two = Rational::from_integer(2);
    let instances = value_vectors(params.block_size, opts.max_level);
    for (searched, levels) in (1..=opts.max_instances).zip(instances) {
        let values: Vec<Rational> = levels.iter().map(|&l| params.tick * Rational::from_integer(l.into())).collect();
        let scenario = Scenario {
            grid_max: values[0] + params.tick * two,
            values,
            params: *params,
            long_run: *long_run,
        };
        for coalition in coalitions(scenario.users(), params.collusion_size) {
            let ev = Evaluator::new(&scenario, scenario.honest_profile(), Actor::Coalition(coalition.clone()))?;
            let request = StrategyRequest::Collusion {
                coalition: coalition.clone(),
            };
            let space = enumerate_strategies(&scenario, ev.base(), &request, &opts.bounds)?;
            let mut best: Option<DeviationReport> = None;
            for strategy in space.iter() {
                let Ok(report) = ev.evaluate(&strategy) else { continue };
                if !report.violation {
                    continue;
                }
                // Prefer the smallest single rebid, otherwise the largest gain.
                let better = match &best {
                    None => true,
                    Some(b) => match (single_rebid(&report.strategy), single_rebid(&b.strategy)) {
                        (Some(x), Some(y)) => x < y,
                        (Some(_), None) => true,
                        (None, Some(_)) => false,
                        (None, None) => report.delta > b.delta,
                    },
                };
                if better {
                    best = Some(report);
                }
            }
            if let Some(report) = best {
                let predicted = payer_overbid_epsilon(&scenario, &report.strategy).map(|eps| payer_overbid_prediction(&scenario, eps));
                return Ok(Some(Counterexample {
                    scenario,
                    coalition,
                    report,
                    predicted,
                    instances_searched: searched,
                }));
            }
        }
    }
    Ok(None)
}

fn single_rebid(strategy: &DeviationStrategy) -> Option<Rational> {
    match strategy.actions.as_slice() {
        [Action::Rebid { amount, .. }] => Some(*amount),
        _ => None,
    }
}

/// `epsilon` when the strategy is an upward rebid by the payer that keeps its rank.
fn payer_overbid_epsilon(scenario: &Scenario, strategy: &DeviationStrategy) -> Option<Rational> {
    let [Action::Rebid { user, amount }] = strategy.actions.as_slice() else {
        return None;
    };
    let payer = payer(scenario);
    if *user != payer {
        return None;
    }
    let eps = *amount - scenario.values[payer as usize];
    if eps <= Rational::zero() {
        return None;
    }
    let outcome = execute(&strategy.apply(&scenario.honest_mempool()), &scenario.params).ok()?;
    let k = scenario.params.payment_index;
    (outcome.included.get(k)?.id == BidId(payer)).then_some(eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_are_ordered_by_sum() {
        let v = value_vectors(3, 3);
        assert_eq!(v.len(), 10);
        assert_eq!(v[0], vec![1, 1, 1]);
        assert_eq!(v.last().unwrap(), &vec![3, 3, 3]);
        assert!(v.iter().all(|x| x.windows(2).all(|w| w[0] >= w[1])));
    }
}
