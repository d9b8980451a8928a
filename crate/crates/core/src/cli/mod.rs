//! Command-line harness: dataset synthesis, model training, evaluation,
//! sweeps, and the composite comparison report. One experiment is one JSON
//! config file plus CLI overrides, with precedence CLI > file > defaults.
//! Every artifact embeds the hash of its resolved configuration and the
//! seed; re-running a config reproduces outputs bit for bit apart from
//! timestamps in metadata sidecars.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
//! 4 I/O error.

mod commands;
mod config;

pub use config::{FileConfig, ModelConfig, TrainFileConfig};

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use crate::checkpoint::CheckpointError;
use crate::events::DataError;
use crate::experiment::PipelineError;
use crate::processes::ProcessError;
use crate::unipoint::TrainError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Divergence(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Divergence(m) => write!(f, "numerical divergence: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::BadFractions(..) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<ProcessError> for CliError {
    fn from(e: ProcessError) -> Self {
        match e {
            ProcessError::Runaway(_) => CliError::Divergence(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } => CliError::Divergence(e.to_string()),
            TrainError::EmptySplit(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Data(d) => d.into(),
            PipelineError::Process(p) => p.into(),
            PipelineError::Train(t) => t.into(),
            PipelineError::Basis(b) => CliError::Config(b.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "unipoint", version, about = "Temporal point process experiments: simulate, train, evaluate, sweep, report")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; mandatory (directly or via the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (simulate) or directory (other commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Concurrent sweep cells (child processes); 1 = run cells in-process.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Significant digits for floats in CSV outputs.
    #[arg(long, global = true)]
    precision: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw event sequences from a parametric generator into a JSONL file.
    Simulate(SimulateArgs),
    /// Train a model on a JSONL dataset (split, normalization, training,
    /// best checkpoint).
    Train(TrainArgs),
    /// Score a saved checkpoint on a dataset split.
    Evaluate(EvaluateArgs),
    /// Re-train across basis counts or re-evaluate across Monte-Carlo
    /// sample counts.
    Sweep(SweepArgs),
    /// Composite run: all UNIPoint variants plus the three baselines on
    /// the three synthetic generators, with a comparison table.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct SimulateArgs {
    /// One of: self-correcting, exp-hawkes, pl-hawkes, decaying-sine.
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    sequences: Option<usize>,
    /// Events per sequence (the horizon becomes the last event time).
    #[arg(long)]
    events: Option<usize>,
    /// Fixed horizon alternative to --events.
    #[arg(long)]
    t_end: Option<f64>,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    /// One of: unipoint, rmtpp, exphawkes, plhawkes.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Basis kind: EXP, PL, COS, SIG, RELU, or MIXED(PL32+RELU32).
    #[arg(long)]
    basis: Option<String>,
    /// Transfer function: SOFTPLUS or MAXSIG.
    #[arg(long)]
    transfer: Option<String>,
    /// Number of basis functions.
    #[arg(long = "J", visible_alias = "j")]
    j: Option<usize>,
    /// Hidden state size.
    #[arg(long)]
    hidden: Option<usize>,
    /// Recurrent cell: rnn or lstm.
    #[arg(long)]
    cell: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    mc_train: Option<usize>,
    #[arg(long)]
    mc_eval: Option<usize>,
    #[arg(long)]
    early_stop_delta: Option<f64>,
    /// Patience in mini-batches.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Divide intensity-evaluation times by the training std.
    #[arg(long)]
    normalize_eval_times: bool,
    /// Train/val/test fractions, e.g. 0.6,0.2,0.2.
    #[arg(long)]
    fractions: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Which split to score: test, val, train, or all.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    fractions: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    /// Sweep axis: J (re-train) or mc_samples (re-evaluate).
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated values, e.g. 1,2,4,8,16,32,64.
    #[arg(long)]
    values: Option<String>,
    /// Reference sample count for the mc_samples axis.
    #[arg(long)]
    reference: Option<usize>,
    /// Checkpoint to re-evaluate (mc_samples axis).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args, Debug, Clone)]
struct ReportArgs {
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    events: Option<usize>,
    #[command(flatten)]
    train: TrainArgs,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = config::load_file(cli.config.as_deref())?;
    let ctx = commands::Ctx::resolve(
        &file,
        cli.seed,
        cli.out.clone(),
        cli.jobs,
        cli.precision,
    )?;
    match cli.command {
        Command::Simulate(args) => commands::simulate(&ctx, &args, &file),
        Command::Train(args) => commands::train(&ctx, &args, &file).map(|_| ()),
        Command::Evaluate(args) => commands::evaluate(&ctx, &args, &file),
        Command::Sweep(args) => commands::sweep(&ctx, &args, &file),
        Command::Report(args) => commands::report(&ctx, &args, &file),
    }
}
