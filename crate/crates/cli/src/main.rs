//! `bertgt`: preprocessing, synthetic data, training, evaluation and
//! experiment commands.
//!
//! Every subcommand accepts `--config file.json`, a flat JSON object keyed by
//! the snake_case option names; explicit flags override it. On success the
//! command prints one JSON summary line to stdout. On failure it prints
//! `{"error":{"kind":...,"message":...}}` to stderr and exits nonzero.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use bertgt_core::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use commands::*;
use settings::merge;

#[derive(Parser, Debug)]
#[command(name = "bertgt", version, about = "Cross-sentence n-ary relation classification")]
struct Cli {
    /// JSON file supplying option values; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate, expand entity IDs and attach neighbor sets
    Prep(PrepArgs),
    /// Generate the synthetic dependency-path dataset
    Synth(SynthArgs),
    /// Train a model and write a checkpoint
    Train(TrainArgs),
    /// Score a checkpoint on a dataset
    Eval(EvalArgs),
    /// k-fold cross-validation
    Kfold(KfoldArgs),
    /// Paired t-test between two configurations over random partitions
    Sigtest(SigtestArgs),
    /// Retrain per neighbor cap
    Sweep(SweepArgs),
    /// Full-model gradient check on a tiny configuration
    Gradcheck(GradcheckArgs),
}

fn run(cli: &Cli) -> Result<serde_json::Value> {
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Prep(a) => prep(&merge(a, config)?),
        Command::Synth(a) => synth(&merge(a, config)?),
        Command::Train(a) => train_cmd(&merge(a, config)?),
        Command::Eval(a) => eval(&merge(a, config)?),
        Command::Kfold(a) => kfold_cmd(&merge(a, config)?),
        Command::Sigtest(a) => sigtest(&merge(a, config)?),
        Command::Sweep(a) => sweep(&merge(a, config)?),
        Command::Gradcheck(a) => gradcheck(&merge(a, config)?),
    }
}

fn error_record(kind: &str, message: &str) -> String {
    json!({"error": {"kind": kind, "message": message}}).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
