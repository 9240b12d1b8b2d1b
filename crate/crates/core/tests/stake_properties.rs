use bsp_core::rational::{int, ratio, Rational};
use bsp_core::stake::{
    honest_martingale_check, pathwise_invariant_residual, simulate, RecordSchedule, Regime, SimulationOptions,
    StakeModel,
};
use proptest::prelude::*;

/// `(G_h - G) M + G N - G G_h t`, evaluated from scratch in exact arithmetic.
fn linear_form(model: &StakeModel, m: u64, n: u64, t: u64) -> Rational {
    let s = int(model.scale);
    let g = model.payment + model.reward;
    let gh = model.honest_payment + model.reward;
    let (m, n) = (int(m as i128) / s, int(n as i128) / s);
    (gh - g) * m + g * n - g * gh * int(t as i128)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_form_is_constant_along_paths(
        m0 in 1..=20i128, extra in 1..=20i128, p in 0..=8i128, ph in 0..=8i128, r in 1..=4i128, seed in any::<u64>(),
    ) {
        let model = StakeModel::new(int(m0), int(m0 + extra), ratio(p, 2), ratio(ph, 2), int(r)).unwrap();
        let report = simulate(&model, &SimulationOptions {
            horizon: 500, n_paths: 4, seed, record: RecordSchedule::Every(1),
        }).unwrap();
        for traj in &report.trajectories {
            let start = linear_form(&model, traj.states[0].miner, traj.states[0].total, 0);
            for s in &traj.states {
                prop_assert_eq!(linear_form(&model, s.miner, s.total, s.epoch), start);
            }
            if p != ph {
                prop_assert_eq!(pathwise_invariant_residual(&model, traj).unwrap(), int(0));
            }
        }
    }

    #[test]
    fn stakes_stay_ordered(m0 in 0..=5i128, n0 in 5..=10i128, seed in any::<u64>()) {
        let model = StakeModel::new(int(m0), int(n0), int(1), int(2), int(1)).unwrap();
        let report = simulate(&model, &SimulationOptions {
            horizon: 200, n_paths: 2, seed, record: RecordSchedule::Every(1),
        }).unwrap();
        for traj in &report.trajectories {
            for w in traj.states.windows(2) {
                prop_assert!(w[1].miner >= w[0].miner && w[1].total > w[0].total);
                prop_assert!(w[1].miner <= w[1].total);
            }
        }
    }
}

#[test]
fn honest_total_is_deterministic_and_ratio_is_a_martingale() {
    let model = StakeModel::new(int(1), int(4), int(2), int(2), int(1)).unwrap();
    assert_eq!(model.regime(), Regime::Honest);
    let report = simulate(
        &model,
        &SimulationOptions {
            horizon: 200,
            n_paths: 2000,
            seed: 5,
            record: RecordSchedule::At(vec![0, 10, 100, 200]),
        },
    )
    .unwrap();
    let check = honest_martingale_check(&model, &report.trajectories).unwrap();
    assert!(check.deterministic_total);
    assert!(check.all_within_4se, "{:?}", check.rows);
    for traj in &report.trajectories {
        let last = traj.states.last().unwrap();
        assert_eq!(last.total as i128, (4 + 3 * 200) * model.scale);
    }
}

#[test]
fn same_seed_same_report() {
    let model = StakeModel::new(int(2), int(5), int(3), int(2), int(1)).unwrap();
    let opts = SimulationOptions {
        horizon: 1000,
        n_paths: 8,
        seed: 77,
        record: RecordSchedule::Every(100),
    };
    let a = simulate(&model, &opts).unwrap();
    let b = simulate(&model, &opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.trajectories, b.trajectories);
}
