use bsp_core::rational::{format_rational, serde_rational, Rational};
use bsp_core::verifier::{
    check_cscp_all, check_mic, check_uic, payer_overbid_prediction, payer_overbid_strategy, find_cscp_counterexample, run_ic_suite,
    run_theorem_suite, Actor, CheckOptions, CheckReport, Counterexample, DeviationStrategy, EnumerationBounds,
    Evaluator, Scenario, SearchOptions, SuiteOptions, SuiteTally, ViolationRecord,
};
use serde::Serialize;

use crate::config::{missing, CheckConfig, CheckMode, Experiment, SearchConfig};
use crate::output::write_json;
use crate::{CliError, RunOutcome};

/// Violations kept verbatim in a report; the rest are only counted.
pub const KEPT_VIOLATIONS: usize = 20;

fn verify(e: bsp_core::verifier::VerifyError) -> CliError {
    CliError::Config(format!("check: {e}"))
}

fn scenario(exp: &Experiment, cfg: &CheckConfig) -> Result<Option<Scenario>, CliError> {
    let Some(values) = cfg.values.clone() else {
        return Ok(None);
    };
    let params = exp.mechanism()?;
    let long_run = exp.long_run()?;
    let top = values.iter().copied().max().unwrap_or_default();
    let s = Scenario {
        grid_max: cfg.grid_max.unwrap_or(top + params.tick * Rational::from_integer(2)),
        values,
        params,
        long_run,
    };
    s.validate().map_err(verify)?;
    Ok(Some(s))
}

fn options(cfg: &CheckConfig) -> CheckOptions {
    CheckOptions {
        bounds: EnumerationBounds {
            max_fakes: cfg.max_fakes,
            budget: cfg.budget,
            ..EnumerationBounds::default()
        },
        sampled_profiles: cfg.sampled_profiles,
        ..CheckOptions::default()
    }
}

/// A check report with the violation list truncated.
#[derive(Debug, Serialize)]
pub struct ReportDigest {
    pub property: String,
    pub within_hypotheses: bool,
    pub precondition_failures: Vec<String>,
    pub trivial_mechanism: bool,
    pub evaluated: u64,
    pub skipped_invalid: u64,
    #[serde(with = "serde_rational")]
    pub grid_max: Rational,
    #[serde(with = "serde_rational")]
    pub max_delta: Rational,
    #[serde(with = "serde_rational")]
    pub confirm_prob: Rational,
    #[serde(with = "serde_rational")]
    pub theta_over_c: Rational,
    pub violations_total: usize,
    pub violations: Vec<ViolationRecord>,
}

impl ReportDigest {
    fn new(s: &Scenario, r: &CheckReport) -> Self {
        ReportDigest {
            property: serde_json::to_value(r.property).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            within_hypotheses: r.within_hypotheses,
            precondition_failures: r.precondition_failures.clone(),
            trivial_mechanism: r.trivial_mechanism,
            evaluated: r.evaluated,
            skipped_invalid: r.skipped_invalid,
            grid_max: r.grid_max,
            max_delta: r.max_delta,
            confirm_prob: r.confirm_prob,
            theta_over_c: r.theta_over_c,
            violations_total: r.violations.len(),
            violations: r.violations.iter().take(KEPT_VIOLATIONS).map(|v| v.to_record(s)).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
struct TheoremOutput {
    mode: CheckMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<Scenario>,
    reports: Vec<ReportDigest>,
    suites: Vec<SuiteTally>,
    violations: usize,
}

#[derive(Debug, Serialize)]
pub struct PayerOverbidEvaluation {
    pub coalition: Vec<u32>,
    pub strategy: DeviationStrategy,
    #[serde(with = "serde_rational")]
    pub epsilon: Rational,
    #[serde(with = "serde_rational")]
    pub honest_joint: Rational,
    #[serde(with = "serde_rational")]
    pub deviated_joint: Rational,
    #[serde(with = "serde_rational")]
    pub delta: Rational,
    #[serde(with = "serde_rational")]
    pub predicted: Rational,
    pub violation: bool,
}

#[derive(Debug, Serialize)]
struct ModeCounterexampleOutput {
    mode: CheckMode,
    scenario: Scenario,
    counterexample: PayerOverbidEvaluation,
    exhaustive: ReportDigest,
}

/// Evaluates the payer's `epsilon` overbid for the miner-plus-payer coalition.
pub fn evaluate_payer_overbid(s: &Scenario, epsilon: Rational) -> Result<PayerOverbidEvaluation, CliError> {
    let strategy = payer_overbid_strategy(s, epsilon);
    let coalition: Vec<u32> = strategy
        .actions
        .iter()
        .filter_map(|a| match a {
            bsp_core::verifier::Action::Rebid { user, .. } => Some(*user),
            _ => None,
        })
        .collect();
    let ev = Evaluator::new(s, s.honest_profile(), Actor::Coalition(coalition.clone())).map_err(verify)?;
    let r = ev
        .evaluate(&strategy)
        .map_err(|e| CliError::Config(format!("check: {e}")))?;
    Ok(PayerOverbidEvaluation {
        coalition,
        strategy,
        epsilon,
        honest_joint: r.honest_joint,
        deviated_joint: r.deviated_joint,
        delta: r.delta,
        predicted: payer_overbid_prediction(s, epsilon),
        violation: r.violation,
    })
}

/// Incentive checks on a single scenario and on random suites.
pub fn run_check(exp: &Experiment) -> Result<RunOutcome, CliError> {
    let cfg = exp.config.check.as_ref().ok_or_else(|| missing("check"))?;
    match cfg.mode.unwrap_or(CheckMode::Theorem) {
        CheckMode::Theorem => run_theorem(exp, cfg),
        CheckMode::Prop34 => run_prop34(exp, cfg),
    }
}

fn run_theorem(exp: &Experiment, cfg: &CheckConfig) -> Result<RunOutcome, CliError> {
    let scenario = scenario(exp, cfg)?;
    if scenario.is_none() && cfg.suite.is_none() {
        return Err(CliError::Config("check: give `values` for a scenario, a `suite`, or both".into()));
    }
    let opts = options(cfg);
    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    if let Some(s) = &scenario {
        s.check_grid().map_err(verify)?;
        let uic = check_uic(s, &opts).map_err(verify)?;
        let mic = check_mic(s, &opts).map_err(verify)?;
        let cscp = check_cscp_all(s, &opts).map_err(verify)?;
        for r in [&uic, &mic, &cscp] {
            let d = ReportDigest::new(s, r);
            for f in &d.precondition_failures {
                warnings.push(format!("PRECONDITION {}: {f} (verdict is out-of-theorem)", d.property));
            }
            reports.push(d);
        }
    }
    let mut suites = Vec::new();
    if let Some(suite) = &cfg.suite {
        let seed = exp.seed("check suites")?;
        if suite.scenarios == 0 {
            return Err(CliError::Config("check.suite.scenarios: must be positive".into()));
        }
        let sopts = SuiteOptions {
            scenarios: suite.scenarios,
            seed,
            check: CheckOptions {
                sampled_profiles: suite.sampled_profiles,
                ..opts.clone()
            },
            sampled_composites: suite.sampled_composites,
        };
        let (uic, mic) = run_ic_suite(&sopts).map_err(verify)?;
        suites.push(uic);
        suites.push(mic);
        for &c in &suite.collusion {
            if !(1..=2).contains(&c) {
                return Err(CliError::Config(format!("check.suite.collusion: {c} is outside 1..=2")));
            }
            suites.push(run_theorem_suite(&sopts, c).map_err(verify)?);
        }
    }
    let violations: usize = reports.iter().map(|r| r.violations_total).sum::<usize>()
        + suites.iter().map(|t| t.violations.len()).sum::<usize>();
    let mut out = RunOutcome::new(violations > 0);
    for r in &reports {
        out.summary.push(format!(
            "{}: {} deviations, {} violations, max delta {}",
            r.property,
            r.evaluated,
            r.violations_total,
            format_rational(&r.max_delta)
        ));
    }
    for t in &suites {
        out.summary.push(format!(
            "{} suite: {} scenarios, {} deviations, {} violations",
            t.property,
            t.scenarios,
            t.evaluated,
            t.violations.len()
        ));
    }
    out.warnings = warnings;
    let doc = TheoremOutput {
        mode: CheckMode::Theorem,
        scenario,
        reports,
        suites,
        violations,
    };
    out.files.push(write_json(exp, "check_report.json", "check", &doc)?);
    Ok(out)
}

fn run_prop34(exp: &Experiment, cfg: &CheckConfig) -> Result<RunOutcome, CliError> {
    let s = scenario(exp, cfg)?.ok_or_else(|| CliError::Config("check.values: required in prop34 mode".into()))?;
    let epsilon = cfg.epsilon.unwrap_or(s.params.tick);
    let payer_overbid = evaluate_payer_overbid(&s, epsilon)?;
    let exhaustive = check_cscp_all(&s, &options(cfg)).map_err(verify)?;
    let exhaustive = ReportDigest::new(&s, &exhaustive);
    let violated = payer_overbid.violation || exhaustive.violations_total > 0;
    let mut out = RunOutcome::new(violated);
    out.summary.push(format!(
        "payer overbid by {}: joint {} -> {}, delta {} (closed form {})",
        format_rational(&epsilon),
        format_rational(&payer_overbid.honest_joint),
        format_rational(&payer_overbid.deviated_joint),
        format_rational(&payer_overbid.delta),
        format_rational(&payer_overbid.predicted)
    ));
    out.summary.push(format!(
        "exhaustive collusion search: {} violations out of {} deviations",
        exhaustive.violations_total, exhaustive.evaluated
    ));
    let doc = ModeCounterexampleOutput {
        mode: CheckMode::Prop34,
        scenario: s,
        counterexample: payer_overbid,
        exhaustive,
    };
    out.files.push(write_json(exp, "counterexample.json", "check-prop34", &doc)?);
    Ok(out)
}

#[derive(Debug, Serialize)]
struct SearchOutput {
    search: SearchConfig,
    found: Option<Counterexample>,
}

/// Looks for a profitable collusion without being handed an instance.
pub fn run_counterexample(exp: &Experiment) -> Result<RunOutcome, CliError> {
    let params = exp.mechanism()?;
    let long_run = exp.long_run()?;
    let search = exp.config.counterexample.clone().unwrap_or_default();
    let opts = SearchOptions {
        max_level: search.max_level,
        max_instances: search.max_instances,
        bounds: EnumerationBounds {
            max_fakes: search.max_fakes,
            ..EnumerationBounds::default()
        },
    };
    let found = find_cscp_counterexample(&params, &long_run, &opts).map_err(verify)?;
    let mut out = RunOutcome::new(found.is_some());
    match &found {
        Some(c) => out.summary.push(format!(
            "violation after {} instances: values {:?}, coalition {:?}, delta {}",
            c.instances_searched,
            c.scenario.values.iter().map(format_rational).collect::<Vec<_>>(),
            c.coalition,
            format_rational(&c.report.delta)
        )),
        None => out.summary.push("NONE found within the search budget".into()),
    }
    out.files
        .push(write_json(exp, "counterexample_search.json", "counterexample", &SearchOutput { search, found })?);
    Ok(out)
}
