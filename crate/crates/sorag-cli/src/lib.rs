//! Command definitions and dispatch for the `sorag` binary.
//!
//! Subcommands cover the whole path from a raw dump to experiment
//! reports: `ingest` builds the corpus, `index` embeds it, `ask`
//! answers one question, `experiment` runs an evaluation spec, and
//! `questions` builds evaluation question sets.
//!
//! Stdout carries data (JSON summaries, answer text); logs and error
//! messages go to stderr. Exit codes are part of the contract:
//!
//! - 0: success
//! - 1: runtime failure (provider call failed, write failed)
//! - 2: unreadable or invalid input file
//! - 3: provider not configured and `--mock` not given
//! - 4: `ask` failed at a pipeline stage (the message names the stage)
//! - 64: usage error (bad flag combination, unknown preset)
//! - 65: experiment spec violates its schema

use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;

pub use commands::{
    cmd_ask, cmd_experiment, cmd_index, cmd_ingest, cmd_questions, AskOutput, IndexSummary,
    Provenance, QuestionsSummary,
};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;
pub const EXIT_STAGE: i32 = 4;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_SPEC: i32 = 65;

/// A command failure carrying the documented exit code.
#[derive(Debug)]
pub struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::new(EXIT_RUNTIME, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        CliError::new(EXIT_INPUT, message)
    }

    pub fn provider(message: impl Into<String>) -> Self {
        CliError::new(EXIT_PROVIDER, message)
    }

    pub fn stage(message: impl Into<String>) -> Self {
        CliError::new(EXIT_STAGE, message)
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new(EXIT_USAGE, message)
    }

    pub fn spec(message: impl Into<String>) -> Self {
        CliError::new(EXIT_SPEC, message)
    }

    pub fn code(&self) -> i32 {
        self.code
    }

    pub fn message(&self) -> &str {
        &self.message
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Provider and determinism flags shared by every command that calls a
/// model. Precedence: these flags, then `SORAG_*` environment
/// variables, then the TOML config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ProviderFlags {
    /// Replace every model provider with deterministic offline mocks.
    #[arg(long)]
    pub mock: bool,
    /// Base RNG seed for mock providers and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding width for the mock embedder.
    #[arg(long)]
    pub dim: Option<usize>,
    /// TOML config file carrying provider endpoints and defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of prompt template overrides (hyde.txt, judge.txt, ...).
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Posts.xml dump to parse.
    #[arg(long)]
    pub dump: PathBuf,
    /// PostLinks.xml; switches duplicate detection from closed dates to
    /// the link table.
    #[arg(long)]
    pub links: Option<PathBuf>,
    /// Output corpus JSONL (the pre-cutoff knowledge base).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output JSONL for post-cutoff records. Defaults to
    /// unseen_pool.jsonl next to the corpus.
    #[arg(long)]
    pub unseen_out: Option<PathBuf>,
    /// Tag allowlist. Defaults to java,python.
    #[arg(long, value_delimiter = ',')]
    pub tags: Vec<String>,
    /// Knowledge-base cutoff timestamp (RFC 3339).
    #[arg(long)]
    pub cutoff: Option<DateTime<Utc>>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Corpus JSONL to embed.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output index file.
    #[arg(long)]
    pub index: PathBuf,
    #[command(flatten)]
    pub providers: ProviderFlags,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// The question to answer.
    pub question: String,
    /// Index file written by `index`.
    #[arg(long)]
    pub index: PathBuf,
    /// Corpus JSONL the index was built from.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Pipeline preset (QB1-QB4, HB1-HB3).
    #[arg(long, default_value = "HB1")]
    pub preset: String,
    /// Fixed similarity threshold; conflicts with the adaptive flags.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Relax the threshold until content is found (the default policy).
    #[arg(long)]
    pub adaptive: bool,
    /// Adaptive start threshold.
    #[arg(long)]
    pub start: Option<f64>,
    /// Adaptive relaxation step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Adaptive floor; below it the answer falls back to zero-shot.
    #[arg(long)]
    pub floor: Option<f64>,
    #[command(flatten)]
    pub providers: ProviderFlags,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory for the CSV, markdown, and manifest files.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub providers: ProviderFlags,
}

#[derive(Debug, Args)]
pub struct QuestionsArgs {
    #[command(subcommand)]
    pub command: QuestionsCommand,
}

#[derive(Debug, Subcommand)]
pub enum QuestionsCommand {
    /// Balance post-cutoff questions against the knowledge base.
    Unseen {
        /// Knowledge-base corpus JSONL (for title overlap checks).
        #[arg(long)]
        corpus: PathBuf,
        /// Post-cutoff pool JSONL from `ingest`.
        #[arg(long)]
        pool: PathBuf,
        /// Output question set JSONL.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderFlags,
    },
    /// Paraphrase sampled knowledge-base questions with the chat model.
    Synthetic {
        /// Knowledge-base corpus JSONL to sample from.
        #[arg(long)]
        corpus: PathBuf,
        /// How many questions to synthesize.
        #[arg(long, short = 'n')]
        count: usize,
        /// Output question set JSONL.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        providers: ProviderFlags,
    },
}

#[derive(Debug, Parser)]
#[command(
    name = "sorag",
    version,
    about = "Retrieval-augmented answering over a developer Q&A dump",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a Stack Exchange dump into a cleaned QA corpus.
    Ingest(IngestArgs),
    /// Embed a corpus into the three-collection search index.
    Index(IndexArgs),
    /// Answer one question against a built index.
    Ask(AskArgs),
    /// Run an experiment spec and write its report files.
    Experiment(ExperimentArgs),
    /// Build evaluation question sets.
    Questions(QuestionsArgs),
}

fn print_json<T: serde::Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        Ok(text) => println!("{text}"),
        Err(err) => log::error!("cannot serialize output: {err}"),
    }
}

/// Runs one parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Ingest(args) => cmd_ingest(&args).map(|m| print_json(&m)),
        Command::Index(args) => cmd_index(&args).map(|s| print_json(&s)),
        Command::Ask(args) => cmd_ask(&args).map(|out| {
            println!("{}", out.answer);
            println!();
            print_json(&out.provenance);
        }),
        Command::Experiment(args) => cmd_experiment(&args).map(|m| print_json(&m)),
        Command::Questions(args) => cmd_questions(&args).map(|s| print_json(&s)),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.code()
        }
    }
}
