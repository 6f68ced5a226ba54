use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, ValueEnum};
use curvetext::pipeline::candidate_patches;
use curvetext::skeleton::render_classified;
use curvetext::{load_gray, rectify, save_png, segment, GrayImage};

use crate::GlobalArgs;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    /// Frequency-domain LoG response, rescaled to 0..255.
    Filtered,
    /// Maximum-difference map, rescaled to 0..255 (constant maps are black).
    Mdmap,
    /// Text cluster after the opening, white on black.
    Cluster,
    /// Pruned skeletons: paths white, endpoints red, junctions blue.
    Skeleton,
    /// Rectified candidate strips stacked top to bottom.
    Patches,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long, value_name = "FILE")]
    image: PathBuf,
    #[arg(long, value_enum)]
    stage: Stage,
    /// Output PNG.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

pub fn run(args: &InspectArgs, global: &GlobalArgs) -> anyhow::Result<ExitCode> {
    let cfg = global.pipeline_config()?;
    let img = load_gray(&args.image)?;
    match args.stage {
        Stage::Filtered | Stage::Mdmap | Stage::Cluster => {
            let stages = segment(&img, &cfg)?;
            let out = match args.stage {
                Stage::Filtered => stages.filtered.normalized(),
                Stage::Mdmap => stages.md.to_image().normalized(),
                _ => stages.opened.to_gray(),
            };
            save_png(&out, &args.out)?;
        }
        Stage::Skeleton => {
            let stages = segment(&img, &cfg)?;
            render_classified(img.width(), img.height(), &stages.skeletons)
                .save_with_format(&args.out, image::ImageFormat::Png)
                .with_context(|| format!("writing {}", args.out.display()))?;
        }
        Stage::Patches => {
            let strips: Vec<GrayImage> = candidate_patches(&img, &cfg)?
                .iter()
                .filter_map(|p| rectify(p).map_err(|e| log::warn!("skipping a patch: {e}")).ok())
                .collect();
            save_png(&stack(&strips), &args.out)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Strips one above the other with a 2-px gap; an empty list gives a 1x1 image.
fn stack(strips: &[GrayImage]) -> GrayImage {
    const GAP: usize = 2;
    let width = strips.iter().map(GrayImage::width).max().unwrap_or(1).max(1);
    let height = strips.iter().map(|s| s.height() + GAP).sum::<usize>().max(1);
    let mut out = GrayImage::new(width, height);
    let mut top = 0;
    for s in strips {
        for r in 0..s.height() {
            for c in 0..s.width() {
                out.set(top + r, c, s.get(r, c));
            }
        }
        top += s.height() + GAP;
    }
    out
}
