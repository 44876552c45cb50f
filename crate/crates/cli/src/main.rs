//! `mmts` binary: synthesize paired long-tail data, estimate cluster
//! distributions, dump temperature schedules, train toy two-tower models,
//! evaluate retrieval metrics, check gradients, and emit per-negative
//! contribution profiles.
//!
//! Exit codes: 0 success, 2 argument or validation error, 3 I/O error,
//! 4 numeric or divergence error.

mod commands;
mod manifest;

use clap::{Parser, Subcommand};
use mmts_core::Error;

#[derive(Parser)]
#[command(name = "mmts", version, about = "Temperature-scheduled contrastive training pipeline")]
struct Cli {
    /// Worker threads for internal parallelism. Results never depend on the
    /// count. Falls back to MMTS_THREADS, then to 1.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired synthetic dataset from a spec JSON.
    Synth(commands::synth::Args),
    /// Fit K-Means on an embedding file and write a shift table.
    Cluster(commands::cluster::Args),
    /// Dump per-cluster temperatures over iterations as TSV.
    Schedule(commands::schedule::Args),
    /// Train a two-tower model on a synthesized dataset.
    Train(commands::train::Args),
    /// Compute retrieval metrics for a finished training run.
    Eval(commands::eval::Args),
    /// Compare analytic gradients against finite differences.
    Gradcheck(commands::gradcheck::Args),
    /// Emit per-negative contribution profiles across temperatures.
    Profile(commands::profile::Args),
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, Error> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("MMTS_THREADS") {
            Ok(raw) => raw.parse().map_err(|_| {
                Error::InvalidArgument(format!("MMTS_THREADS must be a positive integer, got {raw:?}"))
            })?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(Error::InvalidArgument("--threads must be at least 1".into()));
    }
    Ok(n)
}

fn run(cli: Cli) -> Result<(), Error> {
    let threads = resolve_threads(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("thread pool setup failed: {e}")))?;
    match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Cluster(args) => commands::cluster::run(args),
        Command::Schedule(args) => commands::schedule::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::Profile(args) => commands::profile::run(args),
    }
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::InvalidArgument(_)
        | Error::Domain(_)
        | Error::Validation(_)
        | Error::Format(_)
        | Error::Index(_)
        | Error::Json(_) => 2,
        Error::Io(_) => 3,
        Error::Numeric(_) | Error::Divergence { .. } => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error}");
        std::process::exit(exit_code(&error));
    }
}
