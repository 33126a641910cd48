//! `agestruct`: steady states, trajectories, density reconstruction,
//! bifurcation sweeps and oracle cross-validation from a JSON config.

mod commands;
mod config;
mod failure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::failure::Failure;
use crate::output::OutputDir;

/// Environment variable overriding the configured output directory.
const OUTDIR_ENV: &str = "AGESTRUCT_OUTDIR";

#[derive(Debug, Parser)]
#[command(name = "agestruct", version, about = "Age-structured population model with separable feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Equilibrium and its stability (JSON on stdout, summary on stderr).
    Steady(RunArgs),
    /// Integrate the reduced system and write trajectory.csv.
    Simulate(RunArgs),
    /// Rebuild the age density at the configured times.
    Reconstruct(RunArgs),
    /// Steady state over the configured r0 grid.
    Sweep(RunArgs),
    /// Compare the reduced system with the Volterra oracle.
    Validate(RunArgs),
    /// Aggregate earlier outputs into summary.json.
    Report(RunArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides AGESTRUCT_OUTDIR and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Steady(a) => ("steady", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Reconstruct(a) => ("reconstruct", a),
            Command::Sweep(a) => ("sweep", a),
            Command::Validate(a) => ("validate", a),
            Command::Report(a) => ("report", a),
        }
    }
}

fn run(command: &Command) -> Result<(), Failure> {
    let (name, args) = command.parts();
    let cfg = config::load_config(&args.config)?;
    let root = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUTDIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.raw.output_dir.clone());
    let mut out = OutputDir::open(&root)?;
    let start = Instant::now();
    let result = match command {
        Command::Steady(_) => commands::steady(&cfg, &mut out),
        Command::Simulate(_) => commands::simulate(&cfg, &mut out),
        Command::Reconstruct(_) => commands::reconstruct(&cfg, &mut out),
        Command::Sweep(_) => commands::sweep(&cfg, &mut out),
        Command::Validate(_) => commands::validate(&cfg, &mut out),
        Command::Report(_) => commands::report(&cfg, &mut out),
    };
    // Record whatever was written, including on a threshold failure.
    out.save(name, start.elapsed().as_secs_f64())?;
    result
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
