//! Command-line driver: config ingestion, run orchestration and artifacts.
//!
//! Exit codes: `0` on success, `1` when a validation report has failed
//! checks, `2` on any other error.

pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::{debug, error};

use crate::commands::Invocation;
use crate::config::parse_config;
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "netac", version, about = "Stochastic reaction-diffusion on metric graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the sampled hypotheses and print a JSON report
    Validate(CommonArgs),
    /// Leading generalized eigenvalues of the discrete generator
    Spectrum(CommonArgs),
    /// Simulate trajectories and write snapshot tables
    Simulate(CommonArgs),
    /// Strong self-convergence order over a step ladder
    Convergence(CommonArgs),
    /// Temporal Hölder exponent from path increments
    Holder(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

type Handler = fn(&config::RunConfig, &Invocation) -> CliResult<()>;

fn dispatch(cli: Cli) -> CliResult<()> {
    let (name, args, f): (_, _, Handler) = match cli.command {
        Command::Validate(a) => ("validate", a, commands::validate),
        Command::Spectrum(a) => ("spectrum", a, commands::spectrum),
        Command::Simulate(a) => ("simulate", a, commands::simulate),
        Command::Convergence(a) => ("convergence", a, commands::convergence),
        Command::Holder(a) => ("holder", a, commands::holder),
    };
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            debug!("thread pool already configured: {e}");
        }
    }
    let cfg = parse_config(&args.config)?;
    let inv = Invocation {
        command: name,
        seed: args.seed.unwrap_or(cfg.seed),
        trajectories: args.trajectories,
        output_dir: args.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone()),
    };
    f(&cfg, &inv)
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_command<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            if let CliError::ValidationFailed(report) = &e {
                for c in report.failed() {
                    error!("kind=failed_check name={} measured={} threshold={}", c.name, c.measured, c.threshold);
                }
            }
            error!("kind={} msg={:?}", e.kind(), e.to_string());
            e.exit_code()
        }
    }
}
