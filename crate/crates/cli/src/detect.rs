use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Args;
use curvetext::{detect, load_gray, save_png, BinaryMask, DetectionResult, GrayImage, ModelPair, PipelineConfig};
use rayon::prelude::*;

use crate::records::ImageRecord;
use crate::{file_stem, image_files, usage, GlobalArgs};

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// A single input image (PNG or PGM).
    #[arg(long, conflicts_with = "image_dir", required_unless_present = "image_dir")]
    image: Option<PathBuf>,
    /// Every PNG/PGM directly inside this directory.
    #[arg(long, value_name = "DIR")]
    image_dir: Option<PathBuf>,
    /// Trained text model.
    #[arg(long, value_name = "FILE")]
    model_text: PathBuf,
    /// Trained non-text model.
    #[arg(long, value_name = "FILE")]
    model_nontext: PathBuf,
    /// Output directory for `<stem>.json` region files.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Region outlines drawn over the input: a PNG path for `--image`, a
    /// directory for `--image-dir`.
    #[arg(long, value_name = "PATH")]
    overlay: Option<PathBuf>,
    /// Also write each region mask as `<stem>_r<k>.png`.
    #[arg(long, value_name = "DIR")]
    mask_dir: Option<PathBuf>,
}

pub fn run(args: &DetectArgs, global: &GlobalArgs) -> anyhow::Result<ExitCode> {
    let cfg = global.pipeline_config()?;
    // Without both models nothing can run: treat like a bad invocation.
    let load = |path: &PathBuf, class: &str| {
        curvetext::HmmModel::load(path).map_err(|e| usage(format!("cannot load {class} model {}: {e}", path.display())))
    };
    let models = ModelPair {
        text: load(&args.model_text, "text")?,
        nontext: load(&args.model_nontext, "non-text")?,
    };
    let (inputs, overlay_is_dir) = match (&args.image, &args.image_dir) {
        (Some(img), _) => (vec![img.clone()], false),
        (None, Some(dir)) => {
            let files = image_files(dir)?;
            if files.is_empty() {
                return Err(usage(format!("no PNG or PGM images in {}", dir.display())));
            }
            (files, true)
        }
        (None, None) => return Err(usage("one of --image or --image-dir is required")),
    };
    for dir in [
        Some(&args.out),
        args.mask_dir.as_ref(),
        args.overlay.as_ref().filter(|_| overlay_is_dir),
    ]
    .into_iter()
    .flatten()
    {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let outcomes: Vec<anyhow::Result<usize>> = inputs
        .par_iter()
        .map(|path| process(path, &models, &cfg, args, overlay_is_dir))
        .collect();
    let mut failed = 0;
    for (path, outcome) in inputs.iter().zip(&outcomes) {
        match outcome {
            Ok(n) => log::info!("{}: {n} regions", path.display()),
            Err(e) => {
                failed += 1;
                eprintln!("warning: {}: {e:#}", path.display());
            }
        }
    }
    if failed == inputs.len() {
        eprintln!("error: all {failed} inputs failed");
        return Ok(ExitCode::from(1));
    }
    if failed > 0 {
        eprintln!("{failed} of {} inputs failed", inputs.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn process(
    path: &Path,
    models: &ModelPair,
    cfg: &PipelineConfig,
    args: &DetectArgs,
    overlay_is_dir: bool,
) -> anyhow::Result<usize> {
    let img = load_gray(path)?;
    let result = detect(&img, models, cfg)?;
    let stem = file_stem(path);
    let record = ImageRecord::new(path.display().to_string(), &result);
    let out = args.out.join(format!("{stem}.json"));
    std::fs::write(&out, serde_json::to_string_pretty(&record)?)
        .with_context(|| format!("writing {}", out.display()))?;
    if let Some(dir) = &args.mask_dir {
        for (k, region) in result.regions.iter().enumerate() {
            save_png(&mask_image(&region.mask), dir.join(format!("{stem}_r{k}.png")))?;
        }
    }
    if let Some(overlay) = &args.overlay {
        let target = if overlay_is_dir {
            overlay.join(format!("{stem}.png"))
        } else {
            overlay.clone()
        };
        render_overlay(&img, &result)
            .save_with_format(&target, image::ImageFormat::Png)
            .with_context(|| format!("writing {}", target.display()))?;
    }
    Ok(result.regions.len())
}

fn mask_image(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(
        mask.width(),
        mask.height(),
        |r, c| if mask.get(r, c) { 255.0 } else { 0.0 },
    )
}

/// The input in gray with each region's border painted in a cycling colour.
pub fn render_overlay(img: &GrayImage, result: &DetectionResult) -> image::RgbImage {
    const COLORS: [[u8; 3]; 4] = [[40, 220, 40], [255, 60, 60], [60, 140, 255], [255, 200, 0]];
    let gray = img.to_u8();
    let (w, h) = (img.width(), img.height());
    let mut out = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = gray[y as usize * w + x as usize];
        image::Rgb([v, v, v])
    });
    for (k, region) in result.regions.iter().enumerate() {
        let m = &region.mask;
        for r in 0..h {
            for c in 0..w {
                let (ri, ci) = (r as isize, c as isize);
                let border = m.get(r, c)
                    && [(-1, 0), (1, 0), (0, -1), (0, 1)]
                        .iter()
                        .any(|&(dr, dc)| !m.get_signed(ri + dr, ci + dc));
                if border {
                    out.put_pixel(c as u32, r as u32, image::Rgb(COLORS[k % COLORS.len()]));
                }
            }
        }
    }
    out
}
