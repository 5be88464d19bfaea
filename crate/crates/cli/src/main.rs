//! Pipeline driver: ingest knowledge stores, generate validated synthetic
//! corpora, re-validate existing files, compute diversity reports, and
//! score predictions against a golden dataset.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{Overrides, PipelineConfig};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => msg,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "queryforge",
    version,
    about = "Synthetic function-calling data pipeline: generate, validate, report, eval"
)]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker lanes; 1 keeps output byte-reproducible.
    #[arg(long, global = true)]
    lanes: Option<usize>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the knowledge stores and print their shape.
    Ingest,
    /// Generate a validated dataset with its manifest.
    Generate {
        /// Number of accepted records to produce.
        #[arg(short = 'n', long)]
        n_records: Option<usize>,
    },
    /// Filter an existing record file against the validation policy.
    Validate {
        /// Line-delimited record file.
        input: PathBuf,
        /// Policy file override.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Compute diversity metrics and CSV series for a corpus.
    Report {
        /// Line-delimited record file.
        corpus: PathBuf,
        /// Reference distribution file override.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Score a prediction file against a golden dataset.
    Eval {
        /// Line-delimited predictions: {query, raw_model_output}.
        preds: PathBuf,
        /// Line-delimited golden rows: {query, function, content_type, subprompt}.
        golden: PathBuf,
        /// Subprompt similarity provider.
        #[arg(long, default_value = "lexical-cosine")]
        provider: String,
    },
}

fn require_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config is required for this command".to_string()))?;
    let overrides = Overrides {
        seed: cli.seed,
        lanes: cli.lanes,
        out: cli.out.clone(),
        n_records: match &cli.command {
            Command::Generate { n_records } => *n_records,
            _ => None,
        },
    };
    PipelineConfig::load(path, &overrides)
}

fn out_dir_for(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest => commands::ingest(&require_config(cli)?),
        Command::Generate { .. } => commands::generate::run(&require_config(cli)?),
        Command::Validate { input, policy } => {
            commands::validate(input, policy.as_deref(), &out_dir_for(cli))
        }
        Command::Report { corpus, reference } => {
            commands::report(corpus, reference.as_deref(), &out_dir_for(cli))
        }
        Command::Eval {
            preds,
            golden,
            provider,
        } => commands::eval(preds, golden, provider, &out_dir_for(cli)),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
