//! Experiment harness for `coxkit`.
//!
//! `coxkit <subcommand> --config PATH [--seed N] [--replicates N] [--out DIR] [--plot]`
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on a
//! usage or config error. `COXKIT_THREADS` caps the worker count; results
//! do not depend on it.

pub mod battery;
pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use coxkit::CoxError;
use thiserror::Error;

use crate::commands::{Context, Outcome};
use crate::config::Config;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] CoxError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(CoxError::Config(_) | CoxError::Domain(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Master seed; overrides [run] seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Monte Carlo replicates; overrides [run] replicates (default 100000).
    #[arg(long, value_name = "N")]
    replicates: Option<usize>,
    /// Output directory for CSV and SVG files.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample patterns from the prior.
    #[command(after_help = "Writes simulate.csv (replicate_id,arrivals) with semicolon-joined arrival times, \
        and simulate_paths.csv (replicate_id,breakpoints,levels).\n\
        Config: [prior]; [simulate] sampler = \"timechange\" | \"sequential\".\n\
        --plot: simulate.svg with N_t and Lambda(t) of replicate 0.")]
    Simulate(Common),
    /// Evaluate the conditional arrival-time density on a time grid.
    #[command(after_help = "Writes densities.csv (t,psi_value) with a last row inf,<atom>.\n\
        Config: [prior]; [densities] n, r, observed_count, times = [..] or grid = [start, end, count].\n\
        A random prior is resolved by one draw from the seed.")]
    Densities(Common),
    /// Martingale checks of the compensated counting process.
    #[command(after_help = "Writes watanabe.csv (event,estimate,std_error,pass).\n\
        Config: [prior]; [watanabe] r, t, events = [\"all\", \"count_eq:1\", \"level_above:0.5:1.0\", ...], \
        stop_at = [n, ...], predictable_grid = [..], predictable_rules = [..].")]
    WatanabeCheck(Common),
    /// Checks of the intensity-changing stochastic exponential.
    #[command(after_help = "Writes girsanov.csv (check_name,estimate,target,std_error,pass).\n\
        Config: [prior]; [girsanov] y_rules = [\"constant:2\", \"reciprocal\", \"table:0=1,0.5=2\"], times, \
        intervals = [[r, t], ..], n_max, induction = [[n, j], ..], induction_t, induction_outer, induction_inner.")]
    GirsanovCheck(Common),
    /// Filter the intensity from an observed pattern.
    #[command(after_help = "Writes filter.csv (t,estimate,std_error,ess,oracle_value,pass); the last two \
        columns are empty when no oracle applies.\n\
        Config: [prior]; [observation] arrivals = [..] or simulate_csv = PATH (+ replicate, paths_csv), \
        jump_times = [..] for the Laplace filter; [filter] method = \"ks\" | \"laplace\", functional = \
        \"identity\" | \"exponential:A\" | \"indicator:C\", alpha, laplace_method, times or grid, oracle.\n\
        --plot: filter.svg with the estimate and, for simulated observations, the true X_t.")]
    Filter(Common),
    /// Run the full verification battery.
    #[command(after_help = "Writes verify_all.csv (check_name,estimate,target,std_error,pass).\n\
        Needs a seed (--seed or [run] seed). Config: [run] replicates; [battery] probes.\n\
        Distributional rows report the p-value as estimate and the significance level as target.")]
    VerifyAll(Common),
}

#[derive(Debug, Parser)]
#[command(name = "coxkit", version, about = "Conditional Poisson process simulation, checks and filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Applies `COXKIT_THREADS` to the global worker pool.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("COXKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Config(format!("COXKIT_THREADS: expected a positive integer, got {value:?}")))?;
    // The pool can only be set once per process; later calls keep the first.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(command: Command) -> Result<Outcome, CliError> {
    let (common, f): (Common, fn(&Context) -> Result<Outcome, CliError>) = match command {
        Command::Simulate(c) => (c, commands::simulate),
        Command::Densities(c) => (c, commands::densities),
        Command::WatanabeCheck(c) => (c, commands::watanabe_check),
        Command::GirsanovCheck(c) => (c, commands::girsanov_check),
        Command::Filter(c) => (c, commands::filter),
        Command::VerifyAll(c) => (c, commands::verify_all),
    };
    let config = Config::load(&common.config)?;
    let run = config::run_settings(&config, common.seed, common.replicates)?;
    f(&Context { config: &config, run, out: &common.out, plot: common.plot })
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(cli.command) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.checks > 0 {
                println!("{} checks, {} failed", outcome.checks, outcome.failures);
            }
            if outcome.failures > 0 { 1 } else { 0 }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
