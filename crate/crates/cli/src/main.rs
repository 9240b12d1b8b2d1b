use std::path::PathBuf;
use std::process::ExitCode;

use bsp_lab::config::{Axis, CheckMode, Experiment, Overrides};
use bsp_lab::{block, check, simulate, sweep, CliError, RunOutcome};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bsp-lab", version, about = "Burning second-price fee mechanism laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo stake dynamics and long-run utility.
    Simulate(Common),
    /// Incentive-compatibility checks, or the collusion counterexample with `--mode prop34`.
    Check(Common),
    /// Closed-form confirmation bound along one parameter axis.
    Sweep(Common),
    /// One mechanism run on a mempool file.
    Block(Common),
    /// Search small instances for a profitable miner-user collusion.
    Counterexample(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sweep axis; overrides `sweep.axis`.
    #[arg(long, value_enum)]
    axis: Option<Axis>,
    /// Check mode; overrides `check.mode`.
    #[arg(long, value_enum)]
    mode: Option<CheckMode>,
}

type Runner = fn(&Experiment) -> Result<RunOutcome, CliError>;

fn run(cli: Cli) -> Result<RunOutcome, CliError> {
    let (common, f): (&Common, Runner) = match &cli.command {
        Command::Simulate(c) => (c, simulate::run_simulate),
        Command::Check(c) => (c, check::run_check),
        Command::Sweep(c) => (c, sweep::run_sweep),
        Command::Block(c) => (c, block::run_block),
        Command::Counterexample(c) => (c, check::run_counterexample),
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        axis: common.axis,
        mode: common.mode,
    };
    let exp = Experiment::load(&common.config, &overrides)?;
    f(&exp)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { bsp_lab::EXIT_CONFIG } else { bsp_lab::EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
