//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Tolerances are fixed here and never tuned to make a run pass.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bsp_core::mechanism::{burn_check, include, Bid, MechanismParams};
use bsp_core::rational::{format_rational, int, ratio, Rational};
use bsp_core::stake::{
    honest_martingale_check, pathwise_invariant_residual, simulate, RecordSchedule, SimulationOptions, StakeModel,
};
use bsp_core::utility::LongRunParams;
use bsp_core::verifier::{
    payer_overbid_prediction, find_cscp_counterexample, run_ic_suite, run_theorem_suite, Scenario, SearchOptions, SuiteOptions,
};
use bsp_lab::check::evaluate_payer_overbid;
use bsp_lab::config::{Axis, Experiment, Overrides, SweepBase};
use bsp_lab::sweep::sweep;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance on long-run utility estimates.
const REL_TOL: f64 = 0.02;
/// Underpaid miners must end below this fraction of the honest long-run utility.
const UNDERPAID_FRACTION: f64 = 0.05;
/// Martingale tolerance in standard errors.
const MARTINGALE_SE: f64 = 4.0;
const BURN_INSTANCES: usize = 10_000;
const SUITE_SCENARIOS: usize = 100;
const SWEEP_POINTS: usize = 100;
const MASTER_SEED: u64 = 20_240_601;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn long_run_estimate(m0: i128, n0: i128, p: i128, p_h: i128, horizon: u64, paths: u64) -> (f64, f64, f64) {
    let model = StakeModel::new(int(m0), int(n0), int(p), int(p_h), int(1)).expect("valid model");
    let report = simulate(
        &model,
        &SimulationOptions {
            horizon,
            n_paths: paths,
            seed: MASTER_SEED,
            record: RecordSchedule::Never,
        },
    )
    .expect("simulation runs");
    (report.estimate, report.std_error, report.target)
}

fn c01_honest_long_run() -> Verdict {
    let (est, se, target) = long_run_estimate(500, 1000, 2, 2, 100_000, 200);
    let rel = (est - target).abs() / target;
    verdict(
        rel <= REL_TOL && target == 1.5,
        format!("mean M_T/T = {est:.5} (se {se:.5}), target {target}, relative gap {:.4}", rel),
    )
}

fn c02_strategic_long_run() -> Verdict {
    // pi0 = 0.4 from the smallest integer stakes with that share.
    let (over, over_se, over_target) = long_run_estimate(2, 5, 3, 2, 100_000, 200);
    let over_rel = (over - over_target).abs() / over_target;
    let (under, under_se, _) = long_run_estimate(2, 5, 1, 2, 100_000, 200);
    let threshold = UNDERPAID_FRACTION * (2.0 + 1.0) * 0.4;
    verdict(
        over_rel <= REL_TOL && over_target == 4.0 && under < threshold,
        format!(
            "overpaid {over:.4} (se {over_se:.4}) vs 4, relative gap {over_rel:.4}; underpaid {under:.4} (se {under_se:.4}) vs < {threshold:.3}"
        ),
    )
}

fn c03_linear_invariant() -> Verdict {
    let model = StakeModel::new(int(3), int(7), int(3), int(2), int(1)).expect("valid model");
    let report = simulate(
        &model,
        &SimulationOptions {
            horizon: 10_000,
            n_paths: 100,
            seed: MASTER_SEED,
            record: RecordSchedule::Every(1),
        },
    )
    .expect("simulation runs");
    let mut worst = int(0);
    let mut states = 0;
    for traj in &report.trajectories {
        states += traj.states.len();
        worst = worst.max(pathwise_invariant_residual(&model, traj).expect("strategic regime"));
    }
    verdict(
        worst == int(0) && states == 100 * 10_001,
        format!("max |residual| = {} over {states} states", format_rational(&worst)),
    )
}

fn c04_honest_martingale() -> Verdict {
    let model = StakeModel::new(int(1), int(2), int(2), int(2), int(1)).expect("valid model");
    let report = simulate(
        &model,
        &SimulationOptions {
            horizon: 10_000,
            n_paths: 10_000,
            seed: MASTER_SEED,
            record: RecordSchedule::At(vec![10, 100, 1_000, 10_000]),
        },
    )
    .expect("simulation runs");
    let check = honest_martingale_check(&model, &report.trajectories).expect("honest regime");
    let rows = check
        .rows
        .iter()
        .map(|r| format!("t={}: {:.2} se", r.t, r.abs_deviation / r.std_error))
        .collect::<Vec<_>>()
        .join(", ");
    let expectation_ok = check.rows.iter().all(|r| r.expectation_z.abs() <= MARTINGALE_SE);
    let times_ok = check.rows.iter().map(|r| r.t).collect::<Vec<_>>() == [10, 100, 1_000, 10_000];
    verdict(
        check.all_within_4se && check.deterministic_total && expectation_ok && times_ok,
        format!("{rows}; N_t deterministic: {}", check.deterministic_total),
    )
}

fn random_instance(rng: &mut ChaCha8Rng) -> (MechanismParams, Vec<Bid>) {
    loop {
        let b = rng.gen_range(2..=12usize);
        let c = rng.gen_range(1..=3usize);
        let min = MechanismParams::min_payment_index(b, c);
        if min >= b {
            continue;
        }
        let k = rng.gen_range(min.max(1)..b);
        let tick = ratio(1, rng.gen_range(1..=10));
        let params = MechanismParams {
            block_size: b,
            payment_index: k,
            collusion_size: c,
            theta: ratio(rng.gen_range(1..=100), 100),
            gamma: ratio(rng.gen_range(1..=100), 100),
            tick,
            kappa: int(1),
        };
        let n = rng.gen_range(k + 1..=b + 5);
        let bids = (0..n)
            .map(|i| Bid::honest(i as u32, i as u32, tick * int(rng.gen_range(0..=1000))))
            .collect();
        return (params, bids);
    }
}

fn c05_burn_inequality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER_SEED);
    let mut failures = 0;
    let mut nontrivial = 0;
    for _ in 0..BURN_INSTANCES {
        let (params, bids) = random_instance(&mut rng);
        assert!(params.validate().is_ok());
        nontrivial += usize::from(!params.is_trivial());
        let ok = include(&bids, &params)
            .and_then(|inc| burn_check(&inc, &params))
            .is_ok_and(|burn| burn >= int(0));
        failures += usize::from(!ok);
    }
    verdict(
        failures == 0,
        format!("{failures} failures over {BURN_INSTANCES} instances ({nontrivial} non-trivial)"),
    )
}

fn suite_options() -> SuiteOptions {
    SuiteOptions {
        scenarios: SUITE_SCENARIOS,
        seed: MASTER_SEED,
        ..SuiteOptions::default()
    }
}

fn c06_uic_mic() -> Verdict {
    let (uic, mic) = run_ic_suite(&suite_options()).expect("suite runs");
    verdict(
        uic.passed() && mic.passed() && uic.scenarios >= SUITE_SCENARIOS && mic.scenarios >= SUITE_SCENARIOS,
        format!(
            "UIC: {} scenarios, {} deviations, {} violations; MIC: {} scenarios, {} deviations, {} violations",
            uic.scenarios,
            uic.evaluated,
            uic.violations.len(),
            mic.scenarios,
            mic.evaluated,
            mic.violations.len()
        ),
    )
}

fn c07_cscp_theorem() -> Verdict {
    let one = run_theorem_suite(&suite_options(), 1).expect("suite runs");
    let two = run_theorem_suite(&suite_options(), 2).expect("suite runs");
    let ok = |t: &bsp_core::verifier::SuiteTally| {
        t.passed() && t.out_of_hypotheses == 0 && t.scenarios >= SUITE_SCENARIOS
    };
    verdict(
        ok(&one) && ok(&two),
        format!(
            "c=1 exhaustive: {} scenarios, {} composites, {} violations; c=2 sampled: {} scenarios, {} composites, {} violations",
            one.scenarios,
            one.evaluated,
            one.violations.len(),
            two.scenarios,
            two.evaluated,
            two.violations.len()
        ),
    )
}

fn c08_counterexample() -> Verdict {
    let start = Instant::now();
    let params = MechanismParams {
        block_size: 3,
        payment_index: 2,
        collusion_size: 1,
        theta: ratio(1, 2),
        gamma: int(1),
        tick: ratio(1, 10),
        kappa: int(100),
    };
    let long_run = LongRunParams::new(ratio(1, 2), int(1), int(0)).expect("valid");
    let scenario = Scenario {
        values: vec![int(5), int(3), int(1)],
        params,
        long_run,
        grid_max: ratio(72, 10),
    };
    let eps = ratio(1, 10);
    let eval = evaluate_payer_overbid(&scenario, eps).expect("evaluates");
    let one = int(1);
    let closed: Rational = (one - ratio(1, 2)) * (ratio(1, 2) * int(1) + one) + (ratio(1, 2) - one) * eps;
    let exact = eval.delta == ratio(7, 10) && closed == ratio(7, 10) && payer_overbid_prediction(&scenario, eps) == closed;
    let found = find_cscp_counterexample(&params, &long_run, &SearchOptions::default()).expect("search runs");
    let elapsed = start.elapsed().as_secs_f64();
    let rediscovered = found.as_ref().is_some_and(|c| c.report.delta > int(0));
    verdict(
        exact && rediscovered && elapsed < 1.0,
        format!(
            "delta {} (closed form {}), finder: {}, {:.3}s",
            format_rational(&eval.delta),
            format_rational(&closed),
            found.map_or_else(
                || "none".into(),
                |c| format!("delta {} after {} instances", format_rational(&c.report.delta), c.instances_searched)
            ),
            elapsed
        ),
    )
}

fn c09_theta_bar_shapes() -> Verdict {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut all = true;
    for axis in [Axis::Pi0, Axis::Reward, Axis::Delta, Axis::Kappa] {
        let r = sweep(axis, &SweepBase::default(), SWEEP_POINTS).expect("sweep runs");
        all &= r.passed && r.grid.len() == SWEEP_POINTS;
        parts.push(format!(
            "{} {:?} {}",
            r.axis,
            r.expected_shape,
            if r.passed { "ok" } else { "FAILS" }
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(all && elapsed < 1.0, format!("{} ({elapsed:.3}s)", parts.join(", ")))
}

const DETERMINISM_CONFIG: &str = r#"{
  "seed": 99,
  "mechanism": {"B": 5, "k": 4, "c": 1, "theta": "0.5", "gamma": "1", "delta": "1", "kappa": "10"},
  "long_run": {"pi0": "0.9", "reward": "0.5"},
  "simulate": {"pi0": "0.4", "total0": "5", "payment": "3", "honest_payment": "2", "reward": "1",
               "horizon": 2000, "paths": 16, "record_every": 50},
  "check": {"values": ["5", "3", "1", "4", "2"], "sampled_profiles": 3, "suite": {"scenarios": 3}},
  "sweep": {"axis": "kappa"},
  "block": {"mempool": "mempool.csv", "sample": true}
}"#;

fn run_all_commands(dir: &Path) -> Vec<(String, Vec<u8>)> {
    std::fs::write(dir.join("config.json"), DETERMINISM_CONFIG).expect("write config");
    std::fs::write(
        dir.join("mempool.csv"),
        "id,owner,value,amount,fake\n1,user:1,9,9,\n2,user:2,7,7,\n3,user:3,5,5,\n4,user:4,4,4,\n5,user:5,2,2,\n6,miner,0,3,true\n",
    )
    .expect("write mempool");
    let out = dir.join("out");
    let exp = Experiment::load(
        &dir.join("config.json"),
        &Overrides {
            out: Some(out.clone()),
            ..Overrides::default()
        },
    )
    .expect("config loads");
    bsp_lab::simulate::run_simulate(&exp).expect("simulate");
    bsp_lab::check::run_check(&exp).expect("check");
    bsp_lab::sweep::run_sweep(&exp).expect("sweep");
    bsp_lab::block::run_block(&exp).expect("block");
    bsp_lab::check::run_counterexample(&exp).expect("counterexample");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&out)
        .expect("outputs")
        .map(|e| e.expect("entry").path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read(&p).expect("read output"))
        })
        .collect()
}

fn c10_determinism() -> Verdict {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let first = run_all_commands(a.path());
    let second = run_all_commands(b.path());
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let identical = first == second;
    verdict(
        identical && names.len() >= 7,
        format!("{} files byte-identical across runs: {}", names.len(), names.join(" ")),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("long-run utility, honest regime", c01_honest_long_run),
        ("long-run utility, strategic regimes", c02_strategic_long_run),
        ("pathwise linear invariant", c03_linear_invariant),
        ("honest-case martingale", c04_honest_martingale),
        ("burn inequality", c05_burn_inequality),
        ("UIC/MIC suites", c06_uic_mic),
        ("c-SCP suite within hypotheses", c07_cscp_theorem),
        ("collusion counterexample", c08_counterexample),
        ("theta_bar shapes", c09_theta_bar_shapes),
        ("determinism", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        failed += usize::from(!v.passed);
        println!(
            "criterion {:>2} {} {name}: {} [{:.2}s]",
            i + 1,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
