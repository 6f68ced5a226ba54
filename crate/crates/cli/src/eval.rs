use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use curvetext::raster::rasterize_polygon;
use curvetext::{load_gray, match_blocks, metrics, BinaryMask, EvalCounts, EvalReport, GroundTruth, MatchParams};
use serde::Serialize;

use crate::records::ImageRecord;
use crate::{file_stem, usage};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Region files written by `detect` (`<stem>.json`).
    #[arg(long, value_name = "DIR")]
    detections: PathBuf,
    /// Ground-truth files with the same stems.
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    /// Use the `<stem>_r<k>.png` masks from `detect --mask-dir` instead of
    /// rasterising the region polygons.
    #[arg(long, value_name = "DIR")]
    mask_dir: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long, value_name = "FILE", default_value = "eval_report.json")]
    report: PathBuf,
    /// Fraction of a block a detection must cover to count as true.
    #[arg(long, default_value_t = MatchParams::default().min_overlap)]
    min_overlap: f64,
    /// Fraction of a matched block that may stay uncovered.
    #[arg(long, default_value_t = MatchParams::default().max_missed)]
    max_missed: f64,
}

#[derive(Serialize)]
struct ImageEval {
    image: String,
    counts: EvalCounts,
}

#[derive(Serialize)]
struct Report {
    params: MatchParams,
    overall: EvalReport,
    images: Vec<ImageEval>,
}

fn json_stems(dir: &Path) -> anyhow::Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| usage(format!("cannot read directory {}: {e}", dir.display())))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            stems.insert(file_stem(&path));
        }
    }
    Ok(stems)
}

pub fn run(args: &EvalArgs) -> anyhow::Result<ExitCode> {
    for (name, v) in [("--min-overlap", args.min_overlap), ("--max-missed", args.max_missed)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(usage(format!("{name} must lie in [0, 1]; got {v}")));
        }
    }
    let params = MatchParams {
        min_overlap: args.min_overlap,
        max_missed: args.max_missed,
    };
    let det = json_stems(&args.detections)?;
    let gt = json_stems(&args.gt)?;
    let orphans: Vec<String> = det
        .symmetric_difference(&gt)
        .map(|s| {
            let side = if det.contains(s) {
                "no ground truth"
            } else {
                "no detections"
            };
            format!("{s}.json ({side})")
        })
        .collect();
    if !orphans.is_empty() {
        return Err(usage(format!("unpaired files: {}", orphans.join(", "))));
    }
    if det.is_empty() {
        return Err(usage(format!("no .json files in {}", args.detections.display())));
    }

    let mut images = Vec::new();
    for stem in &det {
        let record_path = args.detections.join(format!("{stem}.json"));
        let text =
            std::fs::read_to_string(&record_path).with_context(|| format!("reading {}", record_path.display()))?;
        let record: ImageRecord =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", record_path.display()))?;
        let truth = GroundTruth::load(args.gt.join(format!("{stem}.json")))?;
        let masks = detection_masks(&record, stem, args.mask_dir.as_deref())?;
        let counts = match_blocks(&masks, &truth, &params).with_context(|| format!("matching {stem}"))?;
        images.push(ImageEval {
            image: stem.clone(),
            counts,
        });
    }
    let overall = metrics(images.iter().map(|i| i.counts).sum());
    print!("{}", overall.to_table());
    let report = Report {
        params,
        overall,
        images,
    };
    std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing {}", args.report.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn detection_masks(record: &ImageRecord, stem: &str, mask_dir: Option<&Path>) -> anyhow::Result<Vec<BinaryMask>> {
    (0..record.regions.len())
        .map(|k| match mask_dir {
            Some(dir) => {
                let path = dir.join(format!("{stem}_r{k}.png"));
                let img = load_gray(&path)?;
                if img.width() != record.width || img.height() != record.height {
                    anyhow::bail!("{}: mask size differs from the image", path.display());
                }
                Ok(BinaryMask::from_fn(img.width(), img.height(), |r, c| {
                    img.get(r, c) >= 128.0
                }))
            }
            None => Ok(rasterize_polygon(
                &record.regions[k].polygon,
                record.width,
                record.height,
            )),
        })
        .collect()
}
