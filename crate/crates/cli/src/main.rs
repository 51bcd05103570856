//! `svqa`: corpus preparation, QA generation, evaluation and reader-study
//! tooling for retinal OCT vision-language experiments.

mod config;
mod corpus_cmd;
mod ctx;
mod eval_cmd;
mod qa_cmd;
mod study_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use crate::config::FileConfig;
use crate::ctx::{Ctx, Outcome};

const DEFAULT_SEED: u64 = 0;

#[derive(Parser)]
#[command(
    name = "svqa",
    version,
    about = "OCT report QA generation and evaluation pipeline"
)]
struct Cli {
    /// Directory every relative path is resolved against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    /// Config file (default: <workdir>/svqa.toml when present).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Concurrent requests for generate-qa and evaluate.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Timestamp written wherever the wall clock would be (RFC 3339).
    #[arg(long, global = true)]
    frozen_time: Option<DateTime<Utc>>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate image metadata and reports into corpus/.
    Ingest(corpus_cmd::IngestArgs),
    /// Build tabular reports from cluster labels and demographics.
    Synthesize(corpus_cmd::SynthesizeArgs),
    /// Assign patients to train/val/test.
    Split(corpus_cmd::SplitArgs),
    /// Instantiate prompts and collect QA transcripts from a backend.
    GenerateQa(qa_cmd::GenerateArgs),
    /// Parse and validate transcripts into a curriculum dataset.
    Assemble(qa_cmd::AssembleArgs),
    /// Run the two-phase protocol against a model endpoint.
    Evaluate(eval_cmd::EvaluateArgs),
    /// Score evaluation runs and compare pairs of them.
    Metrics(eval_cmd::MetricsArgs),
    /// Blinded report grading.
    #[command(subcommand)]
    ReaderStudy(study_cmd::StudyCommand),
    /// Serve an oracle or adversarial endpoint over HTTP.
    ServeMock(eval_cmd::ServeArgs),
}

fn resolve(cli: &Cli) -> Result<Ctx> {
    let (file, config_path) = FileConfig::load(&cli.workdir, cli.config.as_deref())?;
    Ok(Ctx {
        workdir: cli.workdir.clone(),
        seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        parallel: cli.parallel.or(file.parallel).unwrap_or(1).max(1),
        frozen_time: cli.frozen_time.or(file.frozen_time),
        config_path,
        file,
    })
}

fn run(cli: Cli) -> Result<Outcome> {
    let ctx = resolve(&cli)?;
    match cli.command {
        Command::Ingest(a) => corpus_cmd::ingest(&ctx, a),
        Command::Synthesize(a) => corpus_cmd::synthesize(&ctx, a),
        Command::Split(a) => corpus_cmd::split(&ctx, a),
        Command::GenerateQa(a) => qa_cmd::generate(&ctx, a),
        Command::Assemble(a) => qa_cmd::assemble(&ctx, a),
        Command::Evaluate(a) => eval_cmd::evaluate(&ctx, a),
        Command::Metrics(a) => eval_cmd::metrics(&ctx, a),
        Command::ReaderStudy(c) => study_cmd::run(&ctx, c),
        Command::ServeMock(a) => eval_cmd::serve_mock(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("finished with record-level errors; see the manifest");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
