//! Operator entry points: data preparation, curriculum training, (ensemble)
//! beam-search decoding, evaluation and checkpoint averaging.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "multist", version, about = "Unified multilingual speech/text translation")]
struct Cli {
    /// Seed for every random choice; identical seeds reproduce runs exactly.
    /// Overrides the config seed when given.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract features, build manifests and train the subword vocabulary
    /// from a raw data directory.
    PrepareData(commands::prepare::Args),
    /// Run the three-phase curriculum training loop.
    Train(commands::train::Args),
    /// Beam-search decode a manifest with one checkpoint or an ensemble.
    Decode(commands::decode::Args),
    /// Score a hypotheses file against manifest references.
    Evaluate(commands::evaluate::Args),
    /// Parameter-wise mean of several checkpoints.
    AverageCheckpoints(commands::average::Args),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::PrepareData(args) => commands::prepare::run(args, cli.seed),
        Command::Train(args) => commands::train::run(args, cli.seed),
        Command::Decode(args) => commands::decode::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::AverageCheckpoints(args) => commands::average::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Single-line machine-parsable failure: validation errors exit 2,
            // runtime failures exit 1.
            let line = err.to_string().replace('\n', " ");
            eprintln!("error: {line}");
            let validation = err
                .downcast_ref::<multist_core::Error>()
                .map(|e| e.is_validation())
                .unwrap_or(false);
            if validation {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
