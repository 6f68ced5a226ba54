use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use curvetext::phog::extract_sequence_any_height;
use curvetext::{load_gray, train_pair, FeatureSequence, TrainReport};
use rayon::prelude::*;

use crate::{image_files, usage, GlobalArgs};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Rectified text strips (any height; rescaled to the window height).
    #[arg(long, value_name = "DIR")]
    text_dir: PathBuf,
    /// Rectified non-text strips.
    #[arg(long, value_name = "DIR")]
    nontext_dir: PathBuf,
    /// Hidden states per model [default: 6, or the config file's value].
    #[arg(long)]
    states: Option<usize>,
    /// Gaussian mixtures per state [default: 32, or the config file's value].
    #[arg(long)]
    mixtures: Option<usize>,
    /// Output directory for `text.hmm`, `nontext.hmm` and `train_log.tsv`.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

pub fn run(args: &TrainArgs, global: &GlobalArgs) -> anyhow::Result<ExitCode> {
    let mut params = global.pipeline_config()?.train;
    if let Some(s) = args.states {
        params.states = s;
    }
    if let Some(m) = args.mixtures {
        params.mixtures = m;
    }
    params.validate().map_err(|e| usage(e.to_string()))?;
    let text = load_sequences(&args.text_dir)?;
    let nontext = load_sequences(&args.nontext_dir)?;
    log::info!(
        "training on {} text and {} non-text strips ({} states, {} mixtures)",
        text.len(),
        nontext.len(),
        params.states,
        params.mixtures
    );
    let (models, rt, rn) = train_pair(&text, &nontext, &params)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    models.save_dir(&args.out)?;
    let log_path = args.out.join("train_log.tsv");
    std::fs::write(&log_path, train_log(&rt, &rn)).with_context(|| format!("writing {}", log_path.display()))?;
    for (name, r) in [("text", &rt), ("nontext", &rn)] {
        println!(
            "{name}: {} sequences ({} skipped), {} iterations, converged: {}, final log-likelihood {:.3}",
            r.used,
            r.skipped,
            r.iterations,
            r.converged,
            r.log_likelihoods.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn load_sequences(dir: &Path) -> anyhow::Result<Vec<FeatureSequence>> {
    let files = image_files(dir)?;
    if files.is_empty() {
        return Err(usage(format!("no PNG or PGM strips in {}", dir.display())));
    }
    files
        .par_iter()
        .map(|p| {
            let strip = load_gray(p)?;
            extract_sequence_any_height(&strip).with_context(|| format!("features of {}", p.display()))
        })
        .collect()
}

/// `class  iteration  log_likelihood`, one row per EM iteration.
pub fn train_log(text: &TrainReport, nontext: &TrainReport) -> String {
    let mut out = String::from("class\titeration\tlog_likelihood\n");
    for (name, r) in [("text", text), ("nontext", nontext)] {
        for (i, ll) in r.log_likelihoods.iter().enumerate() {
            let _ = writeln!(out, "{name}\t{i}\t{ll}");
        }
    }
    out
}
