use bsp_core::mechanism::{execute, BidId, Owner};
use bsp_core::rational::{int, ratio, Rational};
use bsp_core::utility::LongRunParams;
use bsp_core::verifier::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn canonical(values: &[i128], theta: Rational, gamma: Rational) -> Scenario {
    let p = bsp_core::MechanismParams {
        block_size: 3,
        payment_index: 2,
        collusion_size: 1,
        theta,
        gamma,
        tick: int(1),
        kappa: int(1000),
    };
    Scenario {
        values: values.iter().map(|&v| int(v)).collect(),
        params: p,
        long_run: LongRunParams::new(ratio(1, 2), int(1), int(0)).unwrap(),
        grid_max: int(values.iter().copied().max().unwrap() + 2),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Actions applied in any order give the same block.
    #[test]
    fn collusion_steps_commute(seed in any::<u64>(), idx in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = sample_theorem_scenario(&mut rng, 1);
        let base = s.honest_mempool();
        let space = enumerate_strategies(&s, &base, &StrategyRequest::Collusion { coalition: vec![0] }, &EnumerationBounds::default()).unwrap();
        let st = space.get(idx % space.len());
        let reference = execute(&st.apply(&base), &s.params);
        let mut shuffled = st.clone();
        shuffled.actions.shuffle(&mut rng);
        let other = execute(&shuffled.apply(&base), &s.params);
        match (reference, other) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.included, b.included);
                prop_assert_eq!(a.miner_revenue, b.miner_revenue);
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    /// Reported deltas recompute identically from scratch.
    #[test]
    fn violations_replay(v in prop::collection::vec(1..=6i128, 3..=4), t in 10..=20i128) {
        let s = canonical(&v, ratio(t, 20), int(1));
        let report = check_cscp_all(&s, &CheckOptions::default()).unwrap();
        for violation in &report.violations {
            prop_assert!(violation.delta > int(0));
            prop_assert_eq!(replay(&s, violation).unwrap(), violation.delta);
        }
    }

    /// With theta = gamma a small payer overbid always pays off.
    #[test]
    fn theta_at_gamma_always_violates(v in prop::collection::vec(1..=6i128, 3..=3), e in 1..=6i128) {
        let s = canonical(&v, int(1), int(1));
        let eps = ratio(e, 6);
        let mut fine = s.clone();
        fine.params.tick = ratio(1, 6);
        let st = payer_overbid_strategy(&fine, eps);
        // The closed form needs the raised bid to keep its rank.
        let after = execute(&st.apply(&fine.honest_mempool()), &fine.params).unwrap();
        prop_assume!(after.included[2].id.0 == payer(&fine));
        let ev = Evaluator::new(&fine, fine.honest_profile(), Actor::Coalition(vec![payer(&fine)])).unwrap();
        let r = ev.evaluate(&st).unwrap();
        prop_assert!(r.violation);
        prop_assert_eq!(r.delta, payer_overbid_prediction(&fine, eps));
    }

    /// Dropping a bid below the block changes nobody's utility.
    #[test]
    fn deleting_outside_the_block_is_invisible(v in prop::collection::vec(1..=6i128, 4..=6)) {
        let s = canonical(&v, ratio(1, 2), int(1));
        let base = s.honest_mempool();
        let outcome = execute(&base, &s.params).unwrap();
        for bid in &outcome.excluded {
            let st = DeviationStrategy { kind: StrategyKind::Collusion, actions: vec![Action::Delete { bid: bid.id }] };
            for actor in [Actor::Miner, Actor::User(0), Actor::Coalition(vec![1])] {
                let ev = Evaluator::new(&s, s.honest_profile(), actor).unwrap();
                prop_assert_eq!(ev.evaluate(&st).unwrap().delta, int(0));
            }
        }
    }

    /// A fake that ends up in the top k costs the miner return.
    #[test]
    fn fake_in_top_k_lowers_return(v in prop::collection::vec(1..=6i128, 3..=5), level in 1..=8i128) {
        let s = canonical(&v, ratio(1, 2), int(1));
        let base = s.honest_mempool();
        let honest = execute(&base, &s.params).unwrap();
        let st = DeviationStrategy {
            kind: StrategyKind::MinerFake,
            actions: vec![Action::AddFake { bid: BidId(FAKE_ID_BASE), owner: Owner::Miner, amount: int(level) }],
        };
        let dev = execute(&st.apply(&base), &s.params).unwrap();
        if dev.in_top_k(BidId(FAKE_ID_BASE)) {
            let ret = |o| bsp_core::utility::expected_miner_return(o, &s.params);
            prop_assert!(ret(&dev) < ret(&honest));
        }
    }
}

fn payer(s: &Scenario) -> u32 {
    let outcome = execute(&s.honest_mempool(), &s.params).unwrap();
    outcome.included[s.params.payment_index].id.0
}

#[test]
fn uic_and_mic_hold_on_reference_instance() {
    let s = canonical(&[5, 3, 1], ratio(1, 2), int(1));
    let s = Scenario { grid_max: int(8), ..s };
    let opts = CheckOptions {
        sampled_profiles: 5,
        ..CheckOptions::default()
    };
    assert!(check_uic(&s, &opts).unwrap().passed());
    assert!(check_mic(&s, &opts).unwrap().passed());
}

#[test]
fn counting_matches_stream_length() {
    let s = canonical(&[5, 3, 1], ratio(1, 2), int(1));
    let base = s.honest_mempool();
    let bounds = EnumerationBounds::default();
    let space = enumerate_strategies(&s, &base, &StrategyRequest::Collusion { coalition: vec![2] }, &bounds).unwrap();
    let grid = s.grid().len() as u64;
    // Two non-colluder bids to delete or keep, no fake or one at any grid level, one colluder rebid.
    assert_eq!(space.len(), 4 * (1 + grid) * grid);
    assert_eq!(space.iter().count() as u64, space.len());
}
