//! The `hsk` command line: simulate, matched-filter, train, evaluate,
//! benchmark and convert, each writing a `run.json` manifest next to its
//! outputs.

use std::ffi::OsString;

use clap::{Parser, Subcommand};
use hsk_core::{Error, ErrorKind};

mod bench;
mod config;
mod convert;
mod eval;
pub mod manifest;
mod mf;
mod simulate;
mod train;

pub use bench::BenchArgs;
pub use convert::ConvertCommand;
pub use eval::{EvalArgs, EvalConfig};
pub use manifest::{OutputFile, RunManifest, MANIFEST_FILE};
pub use mf::{MfArgs, MfConfig};
pub use simulate::{BandSet, SimulateArgs, SimulateConfig};
pub use train::{TrainArgs, TrainCliConfig};

/// Signature shipped with the tool and used when `--signature` is absent.
pub const DEFAULT_SIGNATURE: &str = include_str!("../assets/methane_signature.txt");

#[derive(Debug, Parser)]
#[command(
    name = "hsk",
    version,
    about = "Hyperspectral methane and mineral segmentation pipelines"
)]
pub struct Cli {
    /// Worker threads for tile-level work (bench: timing pool size, default 1).
    #[arg(long, global = true, env = "HSK_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic plume dataset.
    Simulate(SimulateArgs),
    /// Run the iterative matched filter with thresholding and opening.
    Mf(MfArgs),
    /// Train a segmentation model, resuming from `last.ckpt` when present.
    Train(TrainArgs),
    /// Score predictions against a dataset split.
    Eval(EvalArgs),
    /// Time pipelines over a granule and project daily processing hours.
    Bench(BenchArgs),
    /// Band selection, tiling and binarization utilities.
    #[command(subcommand)]
    Convert(ConvertCommand),
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.kind() {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

/// Parses `args` and runs the command. Argument errors are returned as
/// clap errors so callers can print them with clap's formatting.
pub fn run_args<I, T>(args: I) -> Result<(), RunError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(RunError::Clap)?;
    run(cli).map_err(RunError::Hsk)
}

#[derive(Debug)]
pub enum RunError {
    Clap(clap::Error),
    Hsk(Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Clap(e) if !e.use_stderr() => 0,
            RunError::Clap(_) => 2,
            RunError::Hsk(e) => exit_code(e),
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Clap(e) => write!(f, "{e}"),
            RunError::Hsk(e) => write!(f, "error: {e}"),
        }
    }
}

pub fn run(cli: Cli) -> hsk_core::Result<()> {
    if let Command::Bench(args) = cli.command {
        return bench::run(args, cli.threads.unwrap_or(1));
    }
    if let Some(n) = cli.threads {
        init_pool(n)?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Mf(a) => mf::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Convert(c) => convert::run(c),
        Command::Bench(_) => unreachable!(),
    }
}

fn init_pool(threads: usize) -> hsk_core::Result<()> {
    if threads == 0 {
        return Err(Error::InvalidArgument(
            "--threads must be at least 1".into(),
        ));
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}
