use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsw_sim::{run, RunConfig, RunOptions, SimError, Verb};

/// Simulate and verify the stochastic long-wave/short-wave lattice.
#[derive(Debug, Parser)]
#[command(name = "lsw", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Randomized identity checks for the lattice operators and cutoffs.
    ValidateOperators(Common),
    /// Integrate an ensemble and write norms, stopping times and trajectories.
    Simulate(Common),
    /// Fourth/second moments against the absorbing envelope.
    Moments(Common),
    /// Tail masses outside growing radii.
    Tails(Common),
    /// Time-averaged occupation measure and its window-doubling stability.
    InvariantMeasure(Common),
    /// Noise-intensity divergence and measure sweep.
    EpsSweep(Common),
    /// Linear regime against closed-form solutions.
    OracleCheck(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, short, default_value_t = 0)]
    workers: usize,
    /// Output directory (default: config value, then $LSW_OUTPUT_DIR, then ./lsw-out).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// `dotted.key=value` assignment applied on top of the file; repeatable.
    #[arg(long = "override", short = 's', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Command {
    fn split(self) -> (Verb, Common) {
        match self {
            Command::ValidateOperators(c) => (Verb::ValidateOperators, c),
            Command::Simulate(c) => (Verb::Simulate, c),
            Command::Moments(c) => (Verb::Moments, c),
            Command::Tails(c) => (Verb::Tails, c),
            Command::InvariantMeasure(c) => (Verb::InvariantMeasure, c),
            Command::EpsSweep(c) => (Verb::EpsSweep, c),
            Command::OracleCheck(c) => (Verb::OracleCheck, c),
        }
    }
}

fn execute(verb: Verb, common: Common) -> Result<i32, SimError> {
    let config = match &common.config {
        Some(path) => RunConfig::load(path, &common.overrides)?,
        None => RunConfig::parse("", &common.overrides)?,
    };
    let opts = RunOptions {
        workers: common.workers,
        output_dir: common.output,
    };
    let outcome = run(verb, &config, &opts)?;
    for f in &outcome.failures {
        eprintln!("check failed: {f}");
    }
    println!("{}: results in {}", verb.name(), outcome.dir.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (verb, common) = cli.command.split();
    let code = match execute(verb, common) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
