//! Experiment configuration: one JSON document with a block per command.
//!
//! Precedence is command-line flag, then config file, then built-in default.

use std::path::{Path, PathBuf};

use bsp_core::rational::{serde_rational, Rational};
use bsp_core::utility::LongRunParams;
use bsp_core::MechanismParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<MechanismParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_run: Option<LongRunParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<BlockConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<SearchConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Miner's initial share of the stake.
    #[serde(with = "serde_rational")]
    pub pi0: Rational,
    /// Initial total stake.
    #[serde(with = "serde_rational", default = "one")]
    pub total0: Rational,
    /// Per-block return of the simulated miner.
    #[serde(with = "serde_rational")]
    pub payment: Rational,
    /// Per-block return of every other miner; defaults to `payment`.
    #[serde(with = "serde_rational::option", default, skip_serializing_if = "Option::is_none")]
    pub honest_payment: Option<Rational>,
    #[serde(with = "serde_rational")]
    pub reward: Rational,
    pub horizon: u64,
    pub paths: u64,
    /// Trajectory sampling interval; defaults to `horizon / 100`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
}

fn one() -> Rational {
    Rational::from_integer(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    /// Incentive checks; violations are failures.
    Theorem,
    /// Reproduce the collusion counterexample.
    Prop34,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<CheckMode>,
    /// Honest values of a single scenario, one per user.
    #[serde(with = "opt_vec", default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Rational>>,
    /// Largest explored bid; defaults to the top value plus two ticks.
    #[serde(with = "serde_rational::option", default, skip_serializing_if = "Option::is_none")]
    pub grid_max: Option<Rational>,
    /// Overbid of the payer in `prop34` mode; defaults to one tick.
    #[serde(with = "serde_rational::option", default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Rational>,
    #[serde(default)]
    pub sampled_profiles: usize,
    #[serde(default = "one_usize")]
    pub max_fakes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<SuiteConfig>,
}

fn one_usize() -> usize {
    1
}

mod opt_vec {
    use bsp_core::rational::{serde_rational, Rational};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct W(#[serde(with = "serde_rational::vec")] Vec<Rational>);

    pub fn serialize<S: Serializer>(v: &Option<Vec<Rational>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|x| W(x.clone())).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Rational>>, D::Error> {
        Ok(Option::<W>::deserialize(d)?.map(|w| w.0))
    }
}

/// Randomized scenario suites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub scenarios: usize,
    /// Coalition bounds for the collusion suite.
    #[serde(default = "default_collusion")]
    pub collusion: Vec<usize>,
    #[serde(default = "default_composites")]
    pub sampled_composites: u64,
    #[serde(default = "default_profiles")]
    pub sampled_profiles: usize,
}

fn default_collusion() -> Vec<usize> {
    vec![1, 2]
}

fn default_composites() -> u64 {
    2000
}

fn default_profiles() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Axis {
    #[serde(rename = "pi0")]
    Pi0,
    #[serde(rename = "R", alias = "reward")]
    #[value(name = "R", alias = "reward")]
    Reward,
    #[serde(rename = "delta", alias = "tick")]
    Delta,
    #[serde(rename = "kappa")]
    Kappa,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Pi0 => "pi0",
            Axis::Reward => "R",
            Axis::Delta => "delta",
            Axis::Kappa => "kappa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Values of the parameters held fixed.
    #[serde(default)]
    pub base: SweepBase,
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBase {
    pub pi0: f64,
    #[serde(alias = "R")]
    pub reward: f64,
    #[serde(alias = "tick")]
    pub delta: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl Default for SweepBase {
    fn default() -> Self {
        SweepBase {
            pi0: 0.5,
            reward: 1.0,
            delta: 2.0,
            kappa: 10.0,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    /// CSV with columns `id,owner,value,amount,fake`, relative to the config file.
    pub mempool: PathBuf,
    /// Draw the confirmed set with the master seed.
    #[serde(default)]
    pub sample: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_level")]
    pub max_level: u32,
    #[serde(default = "default_instances")]
    pub max_instances: u64,
    #[serde(default = "one_usize")]
    pub max_fakes: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_level: default_level(),
            max_instances: default_instances(),
            max_fakes: 1,
        }
    }
}

fn default_level() -> u32 {
    6
}

fn default_instances() -> u64 {
    200
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub axis: Option<Axis>,
    pub mode: Option<CheckMode>,
}

/// A loaded config with flags applied.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Directory that relative input paths are resolved against.
    pub base_dir: PathBuf,
    /// SHA-256 of the effective config without `out`, hex encoded.
    pub hash: String,
}

impl Experiment {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base_dir, overrides)
    }

    pub fn from_str(text: &str, base_dir: PathBuf, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        if let Some(seed) = overrides.seed {
            config.seed = Some(seed);
        }
        if let Some(out) = &overrides.out {
            config.out = Some(out.clone());
        }
        if let Some(axis) = overrides.axis {
            config.sweep.get_or_insert_with(|| SweepConfig {
                axis: None,
                points: default_points(),
                base: SweepBase::default(),
            });
            if let Some(s) = config.sweep.as_mut() {
                s.axis = Some(axis);
            }
        }
        if let Some(mode) = overrides.mode {
            if let Some(c) = config.check.as_mut() {
                c.mode = Some(mode);
            } else {
                return Err(CliError::Config("--mode needs a `check` block".into()));
            }
        }
        // Where results go is not part of the experiment.
        let hashed = ExperimentConfig {
            out: None,
            ..config.clone()
        };
        let canonical = serde_json::to_vec(&hashed).expect("config serializes");
        let hash = hex::encode(Sha256::digest(&canonical));
        Ok(Experiment { config, base_dir, hash })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.config.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// The master seed, required by stochastic commands.
    pub fn seed(&self, what: &str) -> Result<u64, CliError> {
        self.config
            .seed
            .ok_or_else(|| CliError::Config(format!("seed: required by {what}; pass --seed or set `seed`")))
    }

    pub fn mechanism(&self) -> Result<MechanismParams, CliError> {
        let p = self.config.mechanism.ok_or_else(|| missing("mechanism"))?;
        p.validate().map_err(|e| CliError::Config(format!("mechanism: {e}")))?;
        Ok(p)
    }

    pub fn long_run(&self) -> Result<LongRunParams, CliError> {
        let lr = self.config.long_run.ok_or_else(|| missing("long_run"))?;
        lr.validate().map_err(|e| CliError::Config(format!("long_run: {e}")))?;
        Ok(lr)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

pub(crate) fn missing(block: &str) -> CliError {
    CliError::Config(format!("{block}: block is missing"))
}
