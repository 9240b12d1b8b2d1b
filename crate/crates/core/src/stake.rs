//! Two-class stake process of a proof-of-stake chain.
//!
//! Each epoch the miner is selected with probability `M/N`. When selected it
//! collects its (possibly strategic) return `p` plus the reward `R`, so both
//! `M` and `N` grow by `G = p + R`; otherwise some honest miner is selected
//! and only `N` grows, by `G_h = p_h + R`.
//!
//! Stakes are kept as integers in units of `1/scale`, where `scale` is the
//! common denominator of all inputs. Selection draws a uniform integer in
//! `[0, N)` and compares it to `M`, so the selection probability is exactly
//! `M/N` and every conservation identity holds with zero residual.
//!
//! The long-run utility `liminf E[M_t]/t` is estimated by the terminal
//! Cesàro value `M_T/T` averaged over independent paths; the process
//! converges almost surely in all three regimes, so the terminal value is a
//! consistent estimator.
//!
//! Path `i` draws from `ChaCha8Rng::seed_from_u64(master_seed)` switched to
//! stream `i`, so paths are independent, reproducible and order-free.

use num_traits::{Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{common_denominator, format_rational, to_f64, Rational};
use crate::utility::{long_run_miner_utility, LongRunParams};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StakeError {
    #[error("initial stakes must satisfy 0 <= M0 <= N0 and N0 > 0")]
    InvalidInitial,
    #[error("{0} must be non-negative")]
    Negative(&'static str),
    #[error("per-epoch gains p + R and p_h + R must be positive")]
    NonPositiveGain,
    #[error("stake values do not fit the integer representation")]
    Overflow,
    #[error("the linear invariant is undefined when p = p_h")]
    Degenerate,
    #[error("diagnostic requires {expected} mode")]
    WrongMode { expected: &'static str },
    #[error("{0} must be at least 1")]
    Zero(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Honest,
    Overpaid,
    Underpaid,
}

/// Stakes after `epoch` steps, in units of `1/scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeState {
    pub miner: u64,
    pub total: u64,
    pub epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeModel {
    pub scale: i128,
    pub miner0: u64,
    pub total0: u64,
    /// `G = p + R`, scaled.
    pub gain: u64,
    /// `G_h = p_h + R`, scaled.
    pub honest_gain: u64,
    #[serde(with = "crate::rational::serde_rational")]
    pub payment: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub honest_payment: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub reward: Rational,
}

fn to_units(q: &Rational, scale: i128) -> Result<u64, StakeError> {
    let scaled = q * Rational::from_integer(scale);
    debug_assert!(scaled.is_integer());
    u64::try_from(scaled.to_integer()).map_err(|_| StakeError::Overflow)
}

impl StakeModel {
    pub fn new(
        miner0: Rational,
        total0: Rational,
        payment: Rational,
        honest_payment: Rational,
        reward: Rational,
    ) -> Result<Self, StakeError> {
        if total0 <= Rational::zero() || miner0.is_negative() || miner0 > total0 {
            return Err(StakeError::InvalidInitial);
        }
        for (name, q) in [("p", payment), ("p_h", honest_payment), ("R", reward)] {
            if q.is_negative() {
                return Err(StakeError::Negative(name));
            }
        }
        let gain = payment + reward;
        let honest_gain = honest_payment + reward;
        if gain.is_zero() || honest_gain.is_zero() {
            return Err(StakeError::NonPositiveGain);
        }
        let scale = common_denominator(&[miner0, total0, gain, honest_gain]);
        Ok(StakeModel {
            scale,
            miner0: to_units(&miner0, scale)?,
            total0: to_units(&total0, scale)?,
            gain: to_units(&gain, scale)?,
            honest_gain: to_units(&honest_gain, scale)?,
            payment,
            honest_payment,
            reward,
        })
    }

    pub fn regime(&self) -> Regime {
        match self.gain.cmp(&self.honest_gain) {
            std::cmp::Ordering::Equal => Regime::Honest,
            std::cmp::Ordering::Greater => Regime::Overpaid,
            std::cmp::Ordering::Less => Regime::Underpaid,
        }
    }

    pub fn initial(&self) -> StakeState {
        StakeState {
            miner: self.miner0,
            total: self.total0,
            epoch: 0,
        }
    }

    pub fn pi0(&self) -> Rational {
        Rational::new(self.miner0 as i128, self.total0 as i128)
    }

    pub fn to_rational(&self, units: u64) -> Rational {
        Rational::new(units as i128, self.scale)
    }

    /// Closed-form long-run utility for this model's `(pi0, p, p_h, R)`.
    pub fn long_run_target(&self) -> Rational {
        let pi0 = self.pi0();
        if pi0.is_zero() {
            return Rational::zero();
        }
        let lr = LongRunParams {
            pi0,
            reward: self.reward,
            honest_return: self.honest_payment,
        };
        long_run_miner_utility(self.payment, &lr)
    }

    /// One epoch. Returns the new state and whether the miner was selected.
    pub fn step<R: Rng + ?Sized>(&self, state: StakeState, rng: &mut R) -> (StakeState, bool) {
        let selected = state.miner > 0 && rng.gen_range(0..state.total) < state.miner;
        let next = if selected {
            StakeState {
                miner: state.miner + self.gain,
                total: state.total + self.gain,
                epoch: state.epoch + 1,
            }
        } else {
            StakeState {
                miner: state.miner,
                total: state.total + self.honest_gain,
                epoch: state.epoch + 1,
            }
        };
        (next, selected)
    }

    pub fn step_seeded(&self, state: StakeState, seed: u64) -> (StakeState, bool) {
        self.step(state, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// `(G_h - G) M + G N - G G_h t`, constant along every path. Scaled by `scale^2`.
    fn invariant_form(&self, s: &StakeState) -> i128 {
        let (g, gh) = (self.gain as i128, self.honest_gain as i128);
        (gh - g) * s.miner as i128 + g * s.total as i128 - g * gh * s.epoch as i128
    }

    /// `M_t + G/(G_h - G) N_t + G G_h/(G - G_h) t - (M_0 + G/(G_h - G) N_0)`, exactly.
    pub fn invariant_residual(&self, s: &StakeState) -> Result<Rational, StakeError> {
        if self.regime() == Regime::Honest {
            return Err(StakeError::Degenerate);
        }
        let diff = self.invariant_form(s) - self.invariant_form(&self.initial());
        let gap = self.honest_gain as i128 - self.gain as i128;
        Ok(Rational::new(diff, gap * self.scale))
    }

    /// The conserved quantity `c = M_0 + G/(G_h - G) N_0`.
    pub fn invariant_constant(&self) -> Result<Rational, StakeError> {
        if self.regime() == Regime::Honest {
            return Err(StakeError::Degenerate);
        }
        let (g, gh) = (self.gain as i128, self.honest_gain as i128);
        let c = Rational::new(self.miner0 as i128, self.scale)
            + Rational::new(g * self.total0 as i128, (gh - g) * self.scale);
        Ok(c)
    }

    /// `L_t = N_t - G_h t`.
    pub fn excess_total(&self, s: &StakeState) -> Rational {
        Rational::new(
            s.total as i128 - self.honest_gain as i128 * s.epoch as i128,
            self.scale,
        )
    }

    /// Pole of the sub-martingale `I_t`: `t* = (G - G_h) c / (G G_h)`.
    pub fn submartingale_pole(&self) -> Result<Rational, StakeError> {
        let c = self.invariant_constant()?;
        let g = self.to_rational(self.gain);
        let gh = self.to_rational(self.honest_gain);
        Ok((g - gh) * c / (g * gh))
    }

    /// `I_t = (L_t + c (G - G_h)/G) / (t - (G - G_h) c / (G G_h))`, or `None` at the pole.
    pub fn submartingale_value(&self, s: &StakeState) -> Result<Option<f64>, StakeError> {
        let c = self.invariant_constant()?;
        let g = self.to_rational(self.gain);
        let gh = self.to_rational(self.honest_gain);
        let den = Rational::from_integer(s.epoch as i128) - (g - gh) * c / (g * gh);
        if den.is_zero() {
            return Ok(None);
        }
        let num = self.excess_total(s) + c * (g - gh) / g;
        Ok(Some(to_f64(&num) / to_f64(&den)))
    }

    /// `L_t <= (G - G_h)(t - c/G_h)`; only meaningful when `G > G_h`.
    pub fn excess_bound_holds(&self, s: &StakeState) -> bool {
        let (g, gh) = (self.gain as i128, self.honest_gain as i128);
        let (m0, n0) = (self.miner0 as i128, self.total0 as i128);
        let t = s.epoch as i128;
        let l = s.total as i128 - gh * t;
        gh * l <= (g - gh) * gh * t - m0 * (g - gh) + g * n0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordSchedule {
    Never,
    /// Record `t = 0` and every `n`-th epoch, plus the horizon.
    Every(u64),
    /// Record exactly these epochs (those beyond the horizon are ignored).
    At(Vec<u64>),
}

impl RecordSchedule {
    fn wants(&self, t: u64, horizon: u64) -> bool {
        match self {
            RecordSchedule::Never => false,
            RecordSchedule::Every(n) => t.is_multiple_of((*n).max(1)) || t == horizon,
            RecordSchedule::At(ts) => ts.contains(&t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StakeTrajectory {
    pub path_id: u64,
    pub states: Vec<StakeState>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationOptions {
    pub horizon: u64,
    pub n_paths: u64,
    pub seed: u64,
    pub record: RecordSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path_id: u64,
    pub terminal: StakeState,
    pub selections: u64,
    /// `M_T / T`.
    pub utility_estimate: f64,
    /// Largest |invariant residual| seen at any epoch (strategic regimes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_invariant_residual: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub regime: Regime,
    pub horizon: u64,
    pub n_paths: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    #[serde(with = "crate::rational::serde_rational")]
    pub target_exact: Rational,
    pub abs_gap: f64,
    /// Zero whenever the invariant holds exactly on every step of every path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_invariant_residual: Option<String>,
    pub paths: Vec<PathSummary>,
    #[serde(skip)]
    pub trajectories: Vec<StakeTrajectory>,
}

/// RNG for path `path_id` under `master_seed`.
pub fn path_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

fn run_path(
    model: &StakeModel,
    opts: &SimulationOptions,
    path_id: u64,
) -> (PathSummary, Option<StakeTrajectory>) {
    let mut rng = path_rng(opts.seed, path_id);
    let mut state = model.initial();
    let strategic = model.regime() != Regime::Honest;
    let base = model.invariant_form(&state);
    let mut worst: i128 = 0;
    let mut selections = 0u64;
    let recording = opts.record != RecordSchedule::Never;
    let mut states = Vec::new();
    if recording && opts.record.wants(0, opts.horizon) {
        states.push(state);
    }
    for _ in 0..opts.horizon {
        let (next, selected) = model.step(state, &mut rng);
        state = next;
        selections += selected as u64;
        if strategic {
            worst = worst.max((model.invariant_form(&state) - base).abs());
        }
        if recording && opts.record.wants(state.epoch, opts.horizon) {
            states.push(state);
        }
    }
    let residual = strategic.then(|| {
        let gap = (model.honest_gain as i128 - model.gain as i128).abs();
        format_rational(&Rational::new(worst, gap * model.scale))
    });
    let summary = PathSummary {
        path_id,
        terminal: state,
        selections,
        utility_estimate: state.miner as f64 / model.scale as f64 / opts.horizon as f64,
        max_invariant_residual: residual,
    };
    let traj = recording.then_some(StakeTrajectory { path_id, states });
    (summary, traj)
}

pub(crate) fn mean_and_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate of the long-run utility `E[M_T]/T`.
pub fn simulate(model: &StakeModel, opts: &SimulationOptions) -> Result<SimulationReport, StakeError> {
    if opts.horizon == 0 {
        return Err(StakeError::Zero("horizon"));
    }
    if opts.n_paths == 0 {
        return Err(StakeError::Zero("n_paths"));
    }
    let growth = model
        .gain
        .max(model.honest_gain)
        .checked_mul(opts.horizon)
        .and_then(|g| g.checked_add(model.total0))
        .ok_or(StakeError::Overflow)?;
    // The invariant form multiplies stakes by gains; keep it inside i128.
    if (growth as u128).saturating_mul(model.gain.max(model.honest_gain) as u128) > i128::MAX as u128 / 4 {
        return Err(StakeError::Overflow);
    }

    let results: Vec<_> = (0..opts.n_paths)
        .into_par_iter()
        .map(|id| run_path(model, opts, id))
        .collect();

    let (estimate, std_error) = mean_and_se(results.iter().map(|(s, _)| s.utility_estimate));
    let target_exact = model.long_run_target();
    let target = to_f64(&target_exact);
    let max_invariant_residual = if model.regime() == Regime::Honest {
        None
    } else {
        let worst = results
            .iter()
            .filter_map(|(s, _)| s.max_invariant_residual.as_deref())
            .map(|r| crate::rational::parse_rational(r).expect("formatted by us"))
            .max()
            .unwrap_or_else(Rational::zero);
        Some(format_rational(&worst))
    };
    let mut paths = Vec::with_capacity(results.len());
    let mut trajectories = Vec::new();
    for (summary, traj) in results {
        paths.push(summary);
        trajectories.extend(traj);
    }
    Ok(SimulationReport {
        regime: model.regime(),
        horizon: opts.horizon,
        n_paths: opts.n_paths,
        estimate,
        std_error,
        target,
        target_exact,
        abs_gap: (estimate - target).abs(),
        max_invariant_residual,
        paths,
        trajectories,
    })
}

/// Largest absolute invariant residual over the recorded states.
pub fn pathwise_invariant_residual(
    model: &StakeModel,
    traj: &StakeTrajectory,
) -> Result<Rational, StakeError> {
    let mut worst = Rational::zero();
    for s in &traj.states {
        worst = worst.max(model.invariant_residual(s)?.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub t: u64,
    pub mean_ratio: f64,
    pub std_error: f64,
    pub abs_deviation: f64,
    pub within_4se: bool,
    /// Mean `M_t` minus `pi0 N_t`, in standard errors of the mean.
    pub expectation_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub pi0: f64,
    pub n_paths: usize,
    pub rows: Vec<MartingaleRow>,
    /// `N_t = N_0 + G_h t` on every recorded state of every path.
    pub deterministic_total: bool,
    pub max_abs_deviation: f64,
    pub all_within_4se: bool,
}

/// Checks that `M_t/N_t` averages to `pi0` at every recorded epoch, and that
/// `N_t` follows its deterministic honest path.
pub fn honest_martingale_check(
    model: &StakeModel,
    trajs: &[StakeTrajectory],
) -> Result<MartingaleReport, StakeError> {
    if model.regime() != Regime::Honest {
        return Err(StakeError::WrongMode { expected: "honest (p = p_h)" });
    }
    let pi0 = to_f64(&model.pi0());
    let mut deterministic_total = true;
    let mut times: Vec<u64> = trajs
        .iter()
        .flat_map(|t| t.states.iter().map(|s| s.epoch))
        .collect();
    times.sort_unstable();
    times.dedup();

    let mut rows = Vec::with_capacity(times.len());
    for &t in &times {
        let at: Vec<&StakeState> = trajs
            .iter()
            .filter_map(|tr| tr.states.iter().find(|s| s.epoch == t))
            .collect();
        for s in &at {
            if s.total != model.total0 + model.honest_gain * t {
                deterministic_total = false;
            }
        }
        let (mean_ratio, se) = mean_and_se(at.iter().map(|s| s.miner as f64 / s.total as f64));
        let abs_deviation = (mean_ratio - pi0).abs();
        // Exact at t = 0; elsewhere allow 4 standard errors.
        let within_4se = abs_deviation <= 4.0 * se || abs_deviation == 0.0;
        let n_t = (model.total0 + model.honest_gain * t) as f64;
        let (mean_m, se_m) = mean_and_se(at.iter().map(|s| s.miner as f64));
        let expectation_z = if se_m > 0.0 {
            (mean_m - pi0 * n_t) / se_m
        } else {
            0.0
        };
        rows.push(MartingaleRow {
            t,
            mean_ratio,
            std_error: se,
            abs_deviation,
            within_4se,
            expectation_z,
        });
    }
    let max_abs_deviation = rows.iter().map(|r| r.abs_deviation).fold(0.0, f64::max);
    let all_within_4se = rows.iter().all(|r| r.within_4se);
    Ok(MartingaleReport {
        pi0,
        n_paths: trajs.len(),
        rows,
        deterministic_total,
        max_abs_deviation,
        all_within_4se,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmartingaleReport {
    pub pole: f64,
    /// Recorded points skipped because they sit at or within one epoch of the pole.
    pub excluded_near_pole: usize,
    pub mean_increment: f64,
    pub increment_std_error: f64,
    pub increments: usize,
    pub terminal_mean: f64,
    pub terminal_std_error: f64,
    /// `G - G_h`.
    pub limit: f64,
    pub excess_bound_violations: usize,
}

/// `I_t` series of one trajectory, skipping epochs near the pole.
pub fn submartingale_series(
    model: &StakeModel,
    traj: &StakeTrajectory,
) -> Result<(Vec<(u64, f64)>, usize), StakeError> {
    if model.regime() != Regime::Overpaid {
        return Err(StakeError::WrongMode { expected: "overpaid (p > p_h)" });
    }
    let pole = to_f64(&model.submartingale_pole()?);
    let mut series = Vec::with_capacity(traj.states.len());
    let mut excluded = 0;
    for s in &traj.states {
        let t = s.epoch as f64;
        match model.submartingale_value(s)? {
            Some(v) if t > pole + 1.0 || pole < 0.0 => series.push((s.epoch, v)),
            _ => excluded += 1,
        }
    }
    Ok((series, excluded))
}

pub fn submartingale_diagnostic(
    model: &StakeModel,
    trajs: &[StakeTrajectory],
) -> Result<SubmartingaleReport, StakeError> {
    if model.regime() != Regime::Overpaid {
        return Err(StakeError::WrongMode { expected: "overpaid (p > p_h)" });
    }
    let pole = to_f64(&model.submartingale_pole()?);
    let mut increments = Vec::new();
    let mut terminals = Vec::new();
    let mut excluded_near_pole = 0;
    let mut excess_bound_violations = 0;
    for traj in trajs {
        let (series, excluded) = submartingale_series(model, traj)?;
        excluded_near_pole += excluded;
        increments.extend(series.windows(2).map(|w| w[1].1 - w[0].1));
        if let Some(&(_, last)) = series.last() {
            terminals.push(last);
        }
        excess_bound_violations += traj
            .states
            .iter()
            .filter(|s| !model.excess_bound_holds(s))
            .count();
    }
    let (mean_increment, increment_std_error) = mean_and_se(increments.iter().copied());
    let (terminal_mean, terminal_std_error) = mean_and_se(terminals.iter().copied());
    Ok(SubmartingaleReport {
        pole,
        excluded_near_pole,
        mean_increment,
        increment_std_error,
        increments: increments.len(),
        terminal_mean,
        terminal_std_error,
        limit: to_f64(&(model.to_rational(model.gain) - model.to_rational(model.honest_gain))),
        excess_bound_violations,
    })
}
