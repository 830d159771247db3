mod commands;
mod config;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ppwald",
    about = "Generalised Wald estimation for point-process treatments and outcomes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file for the command.
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory holding events.csv and trials.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a named scenario or a custom model.
    Simulate(CommonArgs),
    /// Fit the effect rate (ridge, spectral, or observational).
    Estimate(CommonArgs),
    /// Replicate study: criterion r across scenarios and trial counts.
    Experiment(CommonArgs),
    /// Survival-dominance monotonicity diagnostic.
    Diagnose(CommonArgs),
    /// Bootstrap confidence band around the fitted effect rate.
    Bootstrap(CommonArgs),
}

fn init_threads() {
    if let Ok(raw) = std::env::var("PPWALD_THREADS") {
        if let Ok(n) = raw.parse::<usize>() {
            if n >= 1 {
                // Ignore failure: the pool can only be set once per process.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

fn run(cli: Cli) -> ppwald_core::Result<()> {
    let (args, name): (&CommonArgs, &str) = match &cli.command {
        Command::Simulate(a) => (a, "simulate"),
        Command::Estimate(a) => (a, "estimate"),
        Command::Experiment(a) => (a, "experiment"),
        Command::Diagnose(a) => (a, "diagnose"),
        Command::Bootstrap(a) => (a, "bootstrap"),
    };
    let config_raw = std::fs::read_to_string(&args.config)?;
    let out = args
        .out
        .clone()
        .ok_or_else(|| ppwald_core::Error::InvalidInput(format!("{name} requires --out <dir>")))?;
    let need_data = || {
        args.data.clone().ok_or_else(|| {
            ppwald_core::Error::InvalidInput(format!("{name} requires --data <dir>"))
        })
    };
    match cli.command {
        Command::Simulate(_) => commands::cmd_simulate(&config_raw, &out),
        Command::Estimate(_) => commands::cmd_estimate(&config_raw, &need_data()?, &out),
        Command::Experiment(_) => commands::cmd_experiment(&config_raw, &out),
        Command::Diagnose(_) => commands::cmd_diagnose(&config_raw, &need_data()?, &out),
        Command::Bootstrap(_) => commands::cmd_bootstrap(&config_raw, &need_data()?, &out),
    }
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
