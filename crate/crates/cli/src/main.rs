//! `curvetext`: detect, train, evaluate and inspect from the command line.
//!
//! Exit codes: 0 success, 1 when every input of a batch failed, 2 for usage
//! and configuration errors.

mod detect;
mod eval;
mod inspect;
mod records;
mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use curvetext::PipelineConfig;

#[derive(Parser, Debug)]
#[command(
    name = "curvetext",
    version,
    about = "Multi-oriented and curved scene text detection"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Pipeline configuration, `key = value` lines or a flat JSON object.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice (training initialisation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect text regions and write one regions JSON per image.
    Detect(detect::DetectArgs),
    /// Train the text and non-text models from directories of strips.
    Train(train::TrainArgs),
    /// Score detections against ground truth.
    Eval(eval::EvalArgs),
    /// Write one intermediate stage of the detector as an image.
    Inspect(inspect::InspectArgs),
}

/// An error in how the tool was invoked: exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl GlobalArgs {
    /// The configuration file (if any) with `--seed` applied on top.
    pub fn pipeline_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }
}

/// Image files (PNG / PGM / PNM) directly inside `dir`, sorted by name.
pub fn image_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "pgm" | "pnm")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    let config_error = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<curvetext::Error>(), Some(curvetext::Error::Config(_))));
    if err.downcast_ref::<UsageError>().is_some() || config_error {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(jobs) = cli.global.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Detect(args) => detect::run(args, &cli.global),
        Command::Train(args) => train::run(args, &cli.global),
        Command::Eval(args) => eval::run(args),
        Command::Inspect(args) => inspect::run(args, &cli.global),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
