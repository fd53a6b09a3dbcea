mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{describe, Key, RunConfig};
use error::CliError;

/// Hamiltonian state-space dynamics engine.
///
/// Every subcommand reads a flat `key = value` config file (`#` starts a
/// comment) plus `--set key=value` overrides. Unknown keys are rejected before
/// any output is written. Exit codes: 0 success, 1 invalid input, 2 runtime
/// failure, 3 lock violation. Set HSSD_LOG=info (or debug) for progress logs.
#[derive(Parser)]
#[command(name = "hssd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// List the accepted keys and their defaults, then exit.
    #[arg(long)]
    keys: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a phase state under an expert bank; writes trajectory.csv,
    /// trajectory.json and summary.json.
    Simulate(Common),
    /// Tabulate V-Sync modulated step sizes; writes vsync.csv.
    Vsync(Common),
    /// Train the toy predictor; writes metrics.jsonl and checkpoint.bin.
    Train(Common),
    /// Paired-seed ablations; writes ablation.csv and ablation.json.
    Ablate(Common),
    /// Hash a checkpoint with a salt and write a lock record.
    Lock(Common),
    /// Check a checkpoint against a lock record (exit 3 on violation).
    Verify(Common),
    /// Build or inspect a memory-cell forest; writes snapshot.json.
    Cells(Common),
    /// Validate splat vectors and export their covariances.
    Splats(Common),
}

type Handler = fn(&RunConfig) -> Result<u8, CliError>;

fn run(common: &Common, schema: &[Key], handler: Handler) -> Result<u8, CliError> {
    if common.keys {
        println!("{}", describe(schema));
        return Ok(error::EXIT_OK);
    }
    let cfg = RunConfig::load(
        schema,
        common.config.as_deref(),
        &common.set,
        common.seed,
        common.out.as_deref(),
    )?;
    handler(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HSSD_LOG", "warn")).init();
    let cli = Cli::parse();
    let ablate_schema = commands::ablate_schema();
    let result = match &cli.command {
        Command::Simulate(c) => run(c, commands::SIMULATE, commands::simulate),
        Command::Vsync(c) => run(c, commands::VSYNC, commands::vsync),
        Command::Train(c) => run(c, commands::TRAIN, commands::train),
        Command::Ablate(c) => run(c, &ablate_schema, commands::ablate_cmd),
        Command::Lock(c) => run(c, commands::LOCK, commands::lock_cmd),
        Command::Verify(c) => run(c, commands::VERIFY, commands::verify_cmd),
        Command::Cells(c) => run(c, commands::CELLS, commands::cells),
        Command::Splats(c) => run(c, commands::SPLATS, commands::splats),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
