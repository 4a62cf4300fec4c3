mod codec;
mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BdrateArgs, CurveArgs, SearchArgs, SelectArgs, TraceExportArgs, TrainArgs};

/// Encoder-side GoP and skip-mode control for machine-oriented video coding.
#[derive(Debug, Parser)]
#[command(name = "gopctl", version)]
struct Cli {
    /// JSON file with default option values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; every random component derives its own stream from it
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel search and λ sweeps
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find or score a GoP structure
    Search(SearchArgs),
    /// Predict a GoP structure from pre-analysis with trained weights
    Select(SelectArgs),
    /// Train selector weights
    TrainSelector(TrainArgs),
    /// Sweep λ and write a rate-metric curve
    Curve(CurveArgs),
    /// BD-rate between two curves
    Bdrate(BdrateArgs),
    /// Entropy-code latent tensors with skip masks
    #[command(subcommand)]
    CodecSim(codec::CodecCommand),
    /// Record every reachable frame cost of a backend into a trace file
    TraceExport(TraceExportArgs),
}

/// Invalid combination of otherwise well-formed arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Global settings after merging flags with the config file.
pub struct Globals {
    pub seed: u64,
    pub jobs: usize,
    pub file: config::FileConfig,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    let backend = err
        .chain()
        .filter_map(|e| e.downcast_ref::<gopctl_core::Error>())
        .any(gopctl_core::Error::is_backend);
    if backend {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = config::FileConfig::load(cli.config.as_deref())?;
    let globals = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        jobs: cli.jobs.or(file.jobs).unwrap_or(1).max(1),
        file,
    };
    match cli.command {
        Command::Search(a) => commands::search(&globals, a),
        Command::Select(a) => commands::select(&globals, a),
        Command::TrainSelector(a) => commands::train(&globals, a),
        Command::Curve(a) => commands::curve(&globals, a),
        Command::Bdrate(a) => commands::bdrate(a),
        Command::CodecSim(c) => codec::run(&globals, c),
        Command::TraceExport(a) => commands::trace_export(&globals, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
