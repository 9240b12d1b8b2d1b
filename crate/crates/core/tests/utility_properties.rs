use bsp_core::mechanism::{execute, Bid, MechanismParams, Owner};
use bsp_core::rational::{int, ratio, Rational};
use bsp_core::utility::{
    expected_user_utility, long_run_miner_utility, theta_bar, utility_jumps, LongRunParams, ThetaBar,
};
use proptest::prelude::*;

/// Closed-form bound evaluated directly in f64.
fn theta_bar_oracle(pi0: f64, r: f64, d: f64, kappa: f64, gamma: f64) -> Option<f64> {
    if pi0 == 1.0 {
        return Some(gamma);
    }
    if d <= (1.0 - pi0) * r / gamma {
        return None;
    }
    let a = pi0 * r / ((1.0 - pi0) * kappa);
    let b = (gamma * d - (1.0 - pi0) * r) / ((1.0 - pi0) * kappa + d);
    Some(a.min(b))
}

fn f(q: Rational) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

prop_compose! {
    fn long_run()(pi0 in 1..=20i128, r in 0..=40i128, h in 0..=40i128) -> LongRunParams {
        LongRunParams::new(ratio(pi0, 20), ratio(r, 10), ratio(h, 10)).unwrap()
    }
}

proptest! {
    #[test]
    fn long_run_utility_is_monotone(lr in long_run(), a in 0..=80i128, b in 0..=80i128) {
        let (lo, hi) = (ratio(a.min(b), 10), ratio(a.max(b), 10));
        prop_assert!(long_run_miner_utility(lo, &lr) <= long_run_miner_utility(hi, &lr));
    }

    #[test]
    fn jumps_match_utility_differences(lr in long_run(), e in 1..=30i128) {
        let eps = ratio(e, 10);
        let h = lr.honest_return;
        let at = long_run_miner_utility(h, &lr);
        let (over, under) = utility_jumps(&lr, eps);
        prop_assert_eq!(long_run_miner_utility(h + eps, &lr) - at, over);
        if h >= eps {
            prop_assert_eq!(at - long_run_miner_utility(h - eps, &lr), under);
        }
    }

    #[test]
    fn theta_bar_agrees_with_oracle(
        pi0 in 1..=20i128, r in 0..=30i128, d in 1..=30i128, kappa in 1..=40i128, g in 1..=10i128,
    ) {
        let (pi0, r, d, kappa, g) = (ratio(pi0, 20), ratio(r, 10), ratio(d, 10), ratio(kappa, 4), ratio(g, 10));
        let exact = theta_bar(pi0, r, d, kappa, g);
        // The feasibility boundary is decided exactly; floats cannot see it.
        prop_assume!(g * d != (int(1) - pi0) * r);
        let oracle = theta_bar_oracle(f(pi0), f(r), f(d), f(kappa), f(g));
        match (exact, oracle) {
            (ThetaBar::Bound { value }, Some(o)) => {
                prop_assert!((f(value) - o).abs() < 1e-12);
                prop_assert!(value <= g);
                prop_assert!(value > int(0) || r == int(0));
            }
            (ThetaBar::Infeasible, None) => {}
            (e, o) => prop_assert!(false, "{e:?} vs {o:?}"),
        }
    }

    #[test]
    fn theta_bar_falls_with_kappa_and_rises_with_tick(
        pi0 in 1..=19i128, r in 1..=30i128, d in 1..=30i128, kappa in 1..=40i128,
    ) {
        let (pi0, r, d, kappa) = (ratio(pi0, 20), ratio(r, 10), ratio(d, 10), ratio(kappa, 4));
        let g = int(1);
        if let Some(base) = theta_bar(pi0, r, d, kappa, g).value() {
            let wider = theta_bar(pi0, r, d, kappa + int(1), g).value().unwrap();
            prop_assert!(wider < base);
            let coarser = theta_bar(pi0, r, d + ratio(1, 10), kappa, g).value().unwrap();
            prop_assert!(coarser >= base);
        }
    }

    #[test]
    fn honest_bidding_beats_any_rebid(
        values in prop::collection::vec(0..=12i128, 3..=5), who in 0usize..5, bid in 0..=14i128,
    ) {
        let p = MechanismParams {
            block_size: 3, payment_index: 2, collusion_size: 1,
            theta: ratio(1, 2), gamma: int(1), tick: int(1), kappa: int(100),
        };
        let who = who % values.len();
        let pool: Vec<Bid> = values.iter().enumerate().map(|(i, &v)| Bid::honest(i as u32, i as u32, int(v))).collect();
        let honest = execute(&pool, &p).unwrap();
        let mut dev = pool.clone();
        dev[who].amount = int(bid);
        let deviated = execute(&dev, &p).unwrap();
        let u = |o| expected_user_utility(Owner::User(who as u32), o, &p).total;
        prop_assert!(u(&deviated) <= u(&honest));
    }
}

#[test]
fn reference_values() {
    let lr = LongRunParams::new(ratio(1, 2), int(1), int(2)).unwrap();
    assert_eq!(long_run_miner_utility(int(2), &lr), ratio(3, 2));
    assert_eq!(long_run_miner_utility(int(3), &lr), int(4));
    assert_eq!(long_run_miner_utility(int(1), &lr), int(0));
    assert_eq!(theta_bar(ratio(1, 2), int(1), int(2), int(10), int(1)).value(), Some(ratio(1, 10)));
    assert_eq!(theta_bar(ratio(1, 2), int(1), int(1), int(2), int(1)).value(), Some(ratio(1, 4)));
    assert_eq!(theta_bar(ratio(1, 2), int(2), int(1), int(2), int(1)), ThetaBar::Infeasible);
    assert_eq!(theta_bar(int(1), int(5), ratio(1, 10), int(1000), ratio(3, 4)).value(), Some(ratio(3, 4)));
}
