use bsp_core::rational::format_rational;
use bsp_core::stake::{simulate, RecordSchedule, Regime, SimulationOptions, SimulationReport, StakeModel};
use serde::Serialize;

use crate::config::{missing, Experiment, SimulateConfig};
use crate::output::{csv_header, push_row, write, write_json};
use crate::{CliError, RunOutcome};

pub const TRAJECTORY_COLUMNS: [&str; 6] = ["path_id", "t", "M", "N", "L", "I"];

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("simulate.{field}: {msg}"))
}

pub fn build_model(cfg: &SimulateConfig) -> Result<StakeModel, CliError> {
    let zero = bsp_core::rational::int(0);
    if cfg.pi0 <= zero || cfg.pi0 > bsp_core::rational::int(1) {
        return Err(invalid("pi0", "must lie in (0, 1]"));
    }
    if cfg.paths == 0 {
        return Err(invalid("paths", "must be positive"));
    }
    if cfg.horizon == 0 {
        return Err(invalid("horizon", "must be positive"));
    }
    if cfg.record_every == Some(0) {
        return Err(invalid("record_every", "must be positive"));
    }
    let honest = cfg.honest_payment.unwrap_or(cfg.payment);
    StakeModel::new(cfg.pi0 * cfg.total0, cfg.total0, cfg.payment, honest, cfg.reward)
        .map_err(|e| CliError::Config(format!("simulate: {e}")))
}

#[derive(Serialize)]
struct Summary<'a> {
    miner0: String,
    total0: String,
    payment: String,
    honest_payment: String,
    reward: String,
    #[serde(flatten)]
    report: &'a SimulationReport,
}

/// Monte Carlo estimate of the long-run utility with per-path trajectories.
pub fn run_simulate(exp: &Experiment) -> Result<RunOutcome, CliError> {
    let cfg = exp.config.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
    let model = build_model(cfg)?;
    let seed = exp.seed("simulate")?;
    let every = cfg.record_every.unwrap_or((cfg.horizon / 100).max(1));
    let opts = SimulationOptions {
        horizon: cfg.horizon,
        n_paths: cfg.paths,
        seed,
        record: RecordSchedule::Every(every),
    };
    let report = simulate(&model, &opts).map_err(|e| CliError::Config(format!("simulate: {e}")))?;

    let mut csv = csv_header(exp, "trajectories", &TRAJECTORY_COLUMNS);
    let overpaid = model.regime() == Regime::Overpaid;
    for traj in &report.trajectories {
        for s in &traj.states {
            let m = format_rational(&model.to_rational(s.miner));
            let n = format_rational(&model.to_rational(s.total));
            let l = format_rational(&model.excess_total(s));
            let i = if overpaid {
                match model.submartingale_value(s) {
                    Ok(Some(v)) => format!("{v}"),
                    _ => String::new(),
                }
            } else {
                String::new()
            };
            push_row(&mut csv, &[&traj.path_id, &s.epoch, &m, &n, &l, &i]);
        }
    }

    let summary = Summary {
        miner0: format_rational(&model.to_rational(model.initial().miner)),
        total0: format_rational(&model.to_rational(model.initial().total)),
        payment: format_rational(&model.payment),
        honest_payment: format_rational(&model.honest_payment),
        reward: format_rational(&model.reward),
        report: &report,
    };
    let mut out = RunOutcome::new(false);
    out.files.push(write(exp, "trajectories.csv", &csv)?);
    out.files.push(write_json(exp, "simulate_summary.json", "simulate", &summary)?);
    out.summary.push(format!(
        "regime {:?}: estimate {:.6} (se {:.6}), target {}, gap {:.6}",
        report.regime,
        report.estimate,
        report.std_error,
        format_rational(&report.target_exact),
        report.abs_gap
    ));
    if let Some(r) = &report.max_invariant_residual {
        out.summary.push(format!("max linear-invariant residual {r}"));
    }
    Ok(out)
}
