//! Thin command-line driver over the library's experiment runner.

use clap::{Parser, Subcommand as ClapSubcommand};
use cle_carpet::config::parse_config;
use cle_carpet::runner::{run_experiment, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cle",
    version,
    about = "Loop-soup CLE carpets and their first-passage metric"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Sample a loop soup and write the loop list.
    Sample(CommonArgs),
    /// Build the nested ensemble and carpet mask, persist the ensemble.
    Carpet(CommonArgs),
    /// Render metric balls, one PPM per epsilon.
    Ball(CommonArgs),
    /// Estimate scaling constants and fit the distance exponent.
    Theta(CommonArgs),
    /// Box dimensions of the carpet, calibration, geodesic dimension.
    Dims(CommonArgs),
    /// Four-arm crossing statistics over annuli.
    Fourarm(CommonArgs),
    /// Exact invariant suite plus the HausUni diagnostic.
    Check(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker count (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, sub) = match cli.command {
        Command::Sample(a) => (a, Subcommand::Sample),
        Command::Carpet(a) => (a, Subcommand::Carpet),
        Command::Ball(a) => (a, Subcommand::Ball),
        Command::Theta(a) => (a, Subcommand::Theta),
        Command::Dims(a) => (a, Subcommand::Dims),
        Command::Fourarm(a) => (a, Subcommand::Fourarm),
        Command::Check(a) => (a, Subcommand::Check),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::json!({
                    "error": "io",
                    "message": format!("{}: {e}", args.config.display())
                })
            );
            return ExitCode::from(2);
        }
    };
    let mut config = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            let messages: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            eprintln!("{}", serde_json::json!({"error": "config", "messages": messages}));
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(workers) = args.workers {
        config.workers = workers;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    match run_experiment(&config, sub) {
        Ok(outcome) => {
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
