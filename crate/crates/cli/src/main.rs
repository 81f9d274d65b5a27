//! `renormlab` — command-line laboratory for renormalized singular SPDEs
//! whose coefficient fields are correlated with the driving noise.
//!
//! Subcommands:
//!
//! - `counterterms` — tabulate the subtracted structure functions against
//!   the mollification scale δ and fit their `|log δ|` slopes.
//! - `simulate` — integrate the configured equation across the δ list with
//!   one coupled noise realization and report self-convergence.
//! - `blowup` — the constant-vs-function counterterm variance dichotomy.
//! - `moments` — moment studies of the renormalized local products, with a
//!   counterterm-off ablation.
//! - `check-graph` — check a diagram file or built-in fixture against the
//!   exact integrability criteria.
//! - `pairings` — count or enumerate admissible contraction pairings.
//! - `selftest` — fast battery of exact identities and small oracles.
//!
//! Every artifact embeds the configuration hash, master seed, and crate
//! version; rerunning a command with the same configuration and seed
//! reproduces the artifacts byte for byte. Exit status: `0` for completed
//! runs — including scientifically "negative" findings such as a failed
//! assumption check or a detected blow-up, which are results, not errors —
//! `1` for failed self-checks, `2` for contract violations (unreadable or
//! inconsistent configuration, unresolvable scales, malformed input).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use renormlab_core::error::{Error, Result};

use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "renormlab", version, about = "renormalized-SPDE laboratory")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides the configuration's `output_dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Master seed (overrides the configuration's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Replica count (overrides the configuration's `replicas`).
    #[arg(long, global = true)]
    replicas: Option<usize>,

    /// Force strictly sequential replica evaluation so that reruns are
    /// byte-identical. Evaluation is sequential in this build regardless;
    /// the flag pins the contract explicitly.
    #[arg(long, global = true)]
    serial: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate counterterms against δ and fit their |log δ| slopes.
    Counterterms,
    /// Integrate the configured equation across the δ list; report
    /// self-convergence and any blow-up (as data, not failure).
    Simulate,
    /// Constant-vs-function counterterm variance dichotomy.
    Blowup,
    /// Moment studies of renormalized local products, plus an ablation.
    Moments,
    /// Check a diagram against the exact integrability criteria.
    CheckGraph(CheckGraphArgs),
    /// Count or enumerate admissible contraction pairings.
    Pairings(PairingsArgs),
    /// Fast battery of exact identities and small numeric oracles.
    Selftest,
}

/// Arguments of `check-graph`.
#[derive(Debug, Args)]
struct CheckGraphArgs {
    /// Diagram file in the line-oriented text format.
    #[arg(value_name = "FILE", conflicts_with = "fixture")]
    path: Option<PathBuf>,

    /// Built-in fixture name, or `all` for the whole reference suite.
    #[arg(long, value_name = "NAME")]
    fixture: Option<String>,

    /// List the built-in fixture names and exit.
    #[arg(long)]
    list_fixtures: bool,

    /// Criterion: `full`, `weak`, or `auto` (a fixture's designated
    /// criterion; `full` for files).
    #[arg(long, default_value = "auto")]
    assumption: String,

    /// Autocorrelation-edge excess κ, as a rational such as `1/100`.
    #[arg(long, default_value = "1/100")]
    kappa: String,

    /// Kernel-edge excess κ′.
    #[arg(long, default_value = "1/100")]
    kappa_prime: String,

    /// Fictitious-edge excess κ″ (see `--help` of `selftest` for the
    /// feasibility window tied to κ′).
    #[arg(long, default_value = "1/100")]
    kappa_pp: String,
}

/// Arguments of `pairings`.
#[derive(Debug, Args)]
struct PairingsArgs {
    /// Size |J| of the label set {1, …, |J|}.
    #[arg(long, default_value_t = 6)]
    size: usize,

    /// Admissible class: `all`, `no-consecutive`, `block`, or
    /// `block-no-parity`.
    #[arg(long, default_value = "all")]
    class: String,

    /// Block size N for the block-restricted classes.
    #[arg(long, default_value_t = 2)]
    block_size: usize,

    /// Enumerate the pairings, not just count them.
    #[arg(long)]
    list: bool,

    /// Compare the two block-restricted definitions on {1, …, N·m} for
    /// m = 1..=BLOCKS and report where they part ways.
    #[arg(long, value_name = "BLOCKS")]
    compare_definitions: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Counterterms => {
            let cfg = load_config(&cli)?;
            commands::counterterms::run(&cfg)
        }
        Command::Simulate => {
            let cfg = load_config(&cli)?;
            commands::simulate::run(&cfg)
        }
        Command::Blowup => {
            let cfg = load_config(&cli)?;
            commands::blowup::run(&cfg)
        }
        Command::Moments => {
            let cfg = load_config(&cli)?;
            commands::moments::run(&cfg)
        }
        Command::CheckGraph(args) => commands::graph::run(args, cli.out.as_deref()),
        Command::Pairings(args) => commands::pairings::run(args, cli.out.as_deref()),
        Command::Selftest => commands::selftest::run(),
    }
}

/// Load the configuration file and fold in the global overrides.
fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or_else(|| Error::ConfigError {
        key: "--config".into(),
        detail: "this command needs an experiment configuration file".into(),
    })?;
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_overrides(cli.seed, cli.replicas, cli.out.clone());
    Ok(cfg)
}
