//! Library side of the `lookahead` command: config parsing and the
//! subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "lookahead",
    version,
    about = "Lookahead-heuristic constrained decoding over toy models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode every input of a config file into JSONL records.
    Decode {
        #[arg(long)]
        config: PathBuf,
        /// Output path, or `-` for stdout.
        #[arg(long, default_value = "-")]
        out: PathBuf,
        /// Worker threads for candidate scoring. Overrides the config.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Constraint-satisfaction metrics for a decode results file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        /// Constraint file applied to every record. Defaults to the
        /// constraints echoed in each record.
        #[arg(long)]
        constraints: Option<PathBuf>,
    },
    /// Train an add-k n-gram model from a whitespace-tokenized corpus.
    TrainNgram {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact best completion for each input by exhaustive search.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "-")]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Decode {
            config,
            out,
            workers,
        } => commands::cmd_decode(&config, &out, workers),
        Command::Eval {
            results,
            constraints,
        } => commands::cmd_eval(&results, constraints.as_deref()),
        Command::TrainNgram {
            corpus,
            order,
            k,
            out,
        } => commands::cmd_train_ngram(&corpus, order, k, &out),
        Command::Oracle { config, out } => commands::cmd_oracle(&config, &out),
    }
}
