use bsp_core::utility::{theta_bar_f64, theta_bar_peak_reward};
use serde::Serialize;

use crate::config::{missing, Axis, Experiment, SweepBase};
use crate::output::{csv_header, push_row, write, write_json};
use crate::{CliError, RunOutcome};

pub const SWEEP_COLUMNS: [&str; 4] = ["axis", "value", "theta_bar", "feasible"];

/// Tolerance of the limit probes.
pub const LIMIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Increasing,
    NonDecreasing,
    Decreasing,
    /// Rises to a single peak, then falls.
    Unimodal,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitProbe {
    pub description: String,
    pub at: f64,
    pub value: Option<f64>,
    pub expected: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PeakCheck {
    pub predicted_at: f64,
    pub observed_at: f64,
    pub predicted_value: f64,
    pub value_at_predicted: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub axis: &'static str,
    pub base: SweepBase,
    pub grid: Vec<f64>,
    /// `None` marks an infeasible point.
    pub theta_bar: Vec<Option<f64>>,
    pub expected_shape: Shape,
    pub shape_holds: bool,
    pub limits: Vec<LimitProbe>,
    pub peak: Option<PeakCheck>,
    pub passed: bool,
}

fn eval(axis: Axis, base: &SweepBase, x: f64) -> Option<f64> {
    let mut p = *base;
    match axis {
        Axis::Pi0 => p.pi0 = x,
        Axis::Reward => p.reward = x,
        Axis::Delta => p.delta = x,
        Axis::Kappa => p.kappa = x,
    }
    theta_bar_f64(p.pi0, p.reward, p.delta, p.kappa, p.gamma)
}

fn probe(axis: Axis, base: &SweepBase, description: &str, at: f64, expected: f64) -> LimitProbe {
    let value = eval(axis, base, at);
    LimitProbe {
        description: description.into(),
        at,
        value,
        expected,
        holds: value.is_some_and(|v| (v - expected).abs() < LIMIT_TOL),
    }
}

// Negated comparisons so that NaN is rejected too.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn check_base(b: &SweepBase) -> Result<(), CliError> {
    let bad = |f: &str, m: &str| Err(CliError::Config(format!("sweep.base.{f}: {m}")));
    if !(b.pi0 > 0.0 && b.pi0 < 1.0) {
        return bad("pi0", "must lie in (0, 1)");
    }
    if !(b.reward > 0.0) {
        return bad("reward", "must be positive");
    }
    if !(b.delta > 0.0) {
        return bad("delta", "must be positive");
    }
    if !(b.kappa > 0.0) {
        return bad("kappa", "must be positive");
    }
    if !(b.gamma > 0.0 && b.gamma <= 1.0) {
        return bad("gamma", "must lie in (0, 1]");
    }
    Ok(())
}

fn monotone(values: &[Option<f64>], ok: impl Fn(f64, f64) -> bool) -> bool {
    let feasible: Vec<f64> = values.iter().flatten().copied().collect();
    !feasible.is_empty() && feasible.windows(2).all(|w| ok(w[0], w[1]))
}

/// Closed-form bound along one parameter axis with its shape verdict.
pub fn sweep(axis: Axis, base: &SweepBase, points: usize) -> Result<SweepResult, CliError> {
    check_base(base)?;
    if points < 3 {
        return Err(CliError::Config("sweep.points: need at least 3".into()));
    }
    let n = points as f64;
    let b = *base;
    let rest = 1.0 - b.pi0;
    let r_max = b.gamma * b.delta / rest;
    let d_min = rest * b.reward / b.gamma;
    let grid: Vec<f64> = (1..=points)
        .map(|i| {
            let i = i as f64;
            match axis {
                Axis::Pi0 => i / n,
                Axis::Reward => i * r_max / (n + 1.0),
                Axis::Delta => d_min * 10f64.powf(4.0 * i / n),
                Axis::Kappa => b.kappa * 10f64.powf(-3.0 + 6.0 * i / n),
            }
        })
        .collect();
    debug_assert!(grid.windows(2).all(|w| w[0] < w[1]));
    let theta_bar: Vec<Option<f64>> = grid.iter().map(|&x| eval(axis, base, x)).collect();
    let mut peak = None;
    let (expected_shape, shape_holds, limits) = match axis {
        Axis::Pi0 => (
            Shape::Increasing,
            monotone(&theta_bar, |a, b| b > a),
            vec![
                probe(axis, base, "pi0 -> 0 gives 0", 1e-9, 0.0),
                probe(axis, base, "pi0 -> 1 gives gamma", 1.0 - 1e-9, b.gamma),
            ],
        ),
        Axis::Delta => (
            Shape::NonDecreasing,
            monotone(&theta_bar, |a, b| b >= a),
            vec![
                probe(axis, base, "delta -> (1 - pi0) R / gamma gives 0", d_min * (1.0 + 1e-9), 0.0),
                probe(
                    axis,
                    base,
                    "delta -> infinity gives min(pi0 R / ((1 - pi0) kappa), gamma)",
                    1e12,
                    (b.pi0 * b.reward / (rest * b.kappa)).min(b.gamma),
                ),
            ],
        ),
        Axis::Kappa => (
            Shape::Decreasing,
            monotone(&theta_bar, |a, b| b < a),
            vec![
                probe(axis, base, "kappa -> 0 gives gamma - (1 - pi0) R / delta", 1e-12, b.gamma - rest * b.reward / b.delta),
                probe(axis, base, "kappa -> infinity gives 0", 1e12, 0.0),
            ],
        ),
        Axis::Reward => {
            let at = theta_bar_peak_reward(b.pi0, b.delta, b.kappa, b.gamma);
            let predicted_value = b.pi0 * b.gamma * b.delta / (rest * b.kappa + b.pi0 * b.delta);
            let (arg, _) = theta_bar
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (i, v)))
                .fold((0, f64::MIN), |best, (i, v)| if v > best.1 { (i, v) } else { best });
            let spacing = r_max / (n + 1.0);
            let value_at_predicted = eval(axis, base, at);
            let top = theta_bar.iter().flatten().copied().fold(f64::MIN, f64::max);
            let holds = (grid[arg] - at).abs() <= spacing
                && value_at_predicted.is_some_and(|v| (v - predicted_value).abs() < 1e-9 && v >= top);
            peak = Some(PeakCheck {
                predicted_at: at,
                observed_at: grid[arg],
                predicted_value,
                value_at_predicted,
                holds,
            });
            let rising = theta_bar[..=arg].iter().flatten().copied().collect::<Vec<_>>();
            let falling = theta_bar[arg..].iter().flatten().copied().collect::<Vec<_>>();
            let shape = rising.windows(2).all(|w| w[1] > w[0]) && falling.windows(2).all(|w| w[1] < w[0]);
            (
                Shape::Unimodal,
                shape,
                vec![
                    probe(axis, base, "R -> 0 gives 0", 1e-12, 0.0),
                    probe(axis, base, "R -> gamma delta / (1 - pi0) gives 0", r_max * (1.0 - 1e-9), 0.0),
                ],
            )
        }
    };
    let passed = shape_holds && limits.iter().all(|l| l.holds) && peak.as_ref().is_none_or(|p| p.holds);
    Ok(SweepResult {
        axis: axis.name(),
        base: b,
        grid,
        theta_bar,
        expected_shape,
        shape_holds,
        limits,
        peak,
        passed,
    })
}

pub fn run_sweep(exp: &Experiment) -> Result<RunOutcome, CliError> {
    let cfg = exp.config.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let axis = cfg
        .axis
        .ok_or_else(|| CliError::Config("sweep.axis: choose one of pi0, R, delta, kappa".into()))?;
    let result = sweep(axis, &cfg.base, cfg.points)?;
    let mut csv = csv_header(exp, "sweep", &SWEEP_COLUMNS);
    for (x, v) in result.grid.iter().zip(&result.theta_bar) {
        let shown = v.map_or_else(|| "INFEASIBLE".to_string(), |v| format!("{v}"));
        push_row(&mut csv, &[&result.axis, x, &shown, &v.is_some()]);
    }
    let mut out = RunOutcome::new(!result.passed);
    out.files.push(write(exp, &format!("sweep_{}.csv", axis.name()), &csv)?);
    out.files
        .push(write_json(exp, &format!("sweep_{}.json", axis.name()), "sweep", &result)?);
    out.summary.push(format!(
        "{}: expected {:?}, shape {}, limits {}/{}{}",
        result.axis,
        result.expected_shape,
        if result.shape_holds { "holds" } else { "FAILS" },
        result.limits.iter().filter(|l| l.holds).count(),
        result.limits.len(),
        result
            .peak
            .as_ref()
            .map_or(String::new(), |p| format!(", peak at {:.6} ({})", p.predicted_at, if p.holds { "holds" } else { "FAILS" }))
    ));
    Ok(out)
}
