//! Pyramid histogram of oriented gradients over a sliding window.
//!
//! A rectified strip is scanned left to right by a window as tall as the
//! strip and [`WINDOW_WIDTH`] pixels wide. Each window contributes one
//! 168-dimensional frame: 8 orientation bins over a 1x1, 2x2 and 4x4 grid of
//! cells, each pyramid level normalised to unit L1 mass.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patchgeom::{normalize_strip_height, STRIP_HEIGHT};
use crate::raster::GrayImage;

pub const WINDOW_WIDTH: usize = 8;
pub const WINDOW_STRIDE: usize = 4;
pub const ORIENTATION_BINS: usize = 8;
pub const PYRAMID_LEVELS: usize = 3;
/// `8 * (1 + 4 + 16)`.
pub const FEATURE_DIM: usize = ORIENTATION_BINS * 21;

const MAGIC: &[u8; 6] = b"PHOGS1";

/// Per-window PHOG descriptors of one strip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub dim: usize,
    pub frames: Vec<Vec<f64>>,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Little-endian binary form: magic, `u32` frame count, `u32` dimension,
    /// then the frames as `f64`.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.frames.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for f in &self.frames {
            for v in f {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<FeatureSequence> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)
            .map_err(|_| Error::Format("truncated feature file".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a feature sequence file".into()));
        }
        let mut word = [0u8; 4];
        let mut next_u32 = |r: &mut dyn Read| -> Result<usize> {
            r.read_exact(&mut word)
                .map_err(|_| Error::Format("truncated feature header".into()))?;
            Ok(u32::from_le_bytes(word) as usize)
        };
        let n = next_u32(&mut r)?;
        let dim = next_u32(&mut r)?;
        let mut frames = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            let mut f = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut buf)
                    .map_err(|_| Error::Format("truncated feature data".into()))?;
                f.push(f64::from_le_bytes(buf));
            }
            frames.push(f);
        }
        Ok(FeatureSequence { dim, frames })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FeatureSequence> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

/// Sobel gradient magnitude and orientation in `[0, 2pi)`, borders
/// replicated.
pub fn gradient(img: &GrayImage) -> Result<(GrayImage, GrayImage)> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::Dimension(format!(
            "{}x{} image is too small for a 3x3 gradient",
            img.width(),
            img.height()
        )));
    }
    Ok(gradients(img))
}

fn gradients(img: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = (img.width(), img.height());
    let at = |r: isize, c: isize| img.get(r.clamp(0, h as isize - 1) as usize, c.clamp(0, w as isize - 1) as usize);
    let mut mag = GrayImage::new(w, h);
    let mut ori = GrayImage::new(w, h);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            mag.set(r as usize, c as usize, (gx * gx + gy * gy).sqrt());
            ori.set(r as usize, c as usize, gy.atan2(gx).rem_euclid(std::f64::consts::TAU));
        }
    }
    (mag, ori)
}

#[inline]
fn orientation_bin(theta: f64) -> usize {
    ((theta / std::f64::consts::TAU * ORIENTATION_BINS as f64) as usize).min(ORIENTATION_BINS - 1)
}

/// Number of windows a strip of the given width yields.
pub fn window_count(width: usize) -> usize {
    if width < WINDOW_WIDTH {
        0
    } else {
        (width - WINDOW_WIDTH) / WINDOW_STRIDE + 1
    }
}

/// How histogram mass is normalised within a descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Each pyramid level scaled to unit L1 mass on its own.
    #[default]
    PerLevel,
    /// The whole 168-vector scaled to unit L1 mass.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PhogParams {
    pub normalization: Normalization,
}

/// Descriptor of the window whose left edge is column `c0`.
fn window_descriptor(mag: &GrayImage, ori: &GrayImage, c0: usize, params: &PhogParams) -> Vec<f64> {
    let h = mag.height();
    let mut out = Vec::with_capacity(FEATURE_DIM);
    for level in 0..PYRAMID_LEVELS {
        let cells = 1usize << level;
        let start = out.len();
        for cy in 0..cells {
            let (r0, r1) = (cy * h / cells, (cy + 1) * h / cells);
            for cx in 0..cells {
                let (x0, x1) = (cx * WINDOW_WIDTH / cells, (cx + 1) * WINDOW_WIDTH / cells);
                let mut hist = [0.0; ORIENTATION_BINS];
                for r in r0..r1 {
                    for c in c0 + x0..c0 + x1 {
                        hist[orientation_bin(ori.get(r, c))] += mag.get(r, c);
                    }
                }
                out.extend_from_slice(&hist);
            }
        }
        if params.normalization == Normalization::PerLevel {
            l1_normalize(&mut out[start..]);
        }
    }
    if params.normalization == Normalization::Global {
        l1_normalize(&mut out);
    }
    out
}

fn l1_normalize(v: &mut [f64]) {
    let mass: f64 = v.iter().sum();
    if mass > 0.0 {
        v.iter_mut().for_each(|x| *x /= mass);
    }
}

/// PHOG descriptor of a single 40x8 window. Gradients are taken within the
/// window itself, borders replicated.
pub fn phog_window(win: &GrayImage, params: &PhogParams) -> Result<Vec<f64>> {
    if win.width() != WINDOW_WIDTH || win.height() != STRIP_HEIGHT {
        return Err(Error::Dimension(format!(
            "window is {}x{}, expected {WINDOW_WIDTH}x{STRIP_HEIGHT}",
            win.width(),
            win.height()
        )));
    }
    let (mag, ori) = gradients(win);
    Ok(window_descriptor(&mag, &ori, 0, params))
}

/// Frame sequence of a strip already [`STRIP_HEIGHT`] rows tall, with the
/// default parameters.
pub fn extract_sequence(strip: &GrayImage) -> Result<FeatureSequence> {
    extract_sequence_with(strip, &PhogParams::default())
}

/// Frame sequence of a strip already [`STRIP_HEIGHT`] rows tall. Gradients
/// are computed over the whole strip, so window borders see their true
/// neighbours.
pub fn extract_sequence_with(strip: &GrayImage, params: &PhogParams) -> Result<FeatureSequence> {
    if strip.height() != STRIP_HEIGHT {
        return Err(Error::Dimension(format!(
            "strip is {} rows tall, expected {STRIP_HEIGHT}",
            strip.height()
        )));
    }
    if strip.width() < WINDOW_WIDTH {
        return Err(Error::Dimension(format!(
            "strip is {} px wide, narrower than the {WINDOW_WIDTH} px window",
            strip.width()
        )));
    }
    let (mag, ori) = gradients(strip);
    let frames = (0..window_count(strip.width()))
        .map(|i| window_descriptor(&mag, &ori, i * WINDOW_STRIDE, params))
        .collect();
    Ok(FeatureSequence {
        dim: FEATURE_DIM,
        frames,
    })
}

/// Height-normalises an arbitrary strip, then extracts its frames.
pub fn extract_sequence_any_height(strip: &GrayImage) -> Result<FeatureSequence> {
    if strip.height() == STRIP_HEIGHT {
        extract_sequence(strip)
    } else if strip.height() == 0 || strip.width() == 0 {
        Err(Error::Dimension("empty strip".into()))
    } else {
        extract_sequence(&normalize_strip_height(strip))
    }
}
