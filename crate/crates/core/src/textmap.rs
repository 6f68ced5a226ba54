//! Maximum-difference map, two-cluster K-means and binary opening: turns the
//! filtered response into a text/non-text mask.

use serde::{Deserialize, Serialize};

use crate::raster::{BinaryMask, GrayImage};

/// Smallest MD window length in pixels.
pub const MD_WINDOW_FLOOR: usize = 7;

/// Maximum-difference map: each pixel carries the `max - min` of the
/// horizontal `1 x N` window it falls in.
#[derive(Debug, Clone, PartialEq)]
pub struct MdMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub window_length: usize,
}

impl MdMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage::from_vec(self.width, self.height, self.values.clone()).expect("md map dimensions are valid")
    }
}

/// Window length `max(floor(max(h, w) / 20), floor)`.
pub fn md_window_length(width: usize, height: usize, floor: usize) -> usize {
    (width.max(height) / 20).max(floor)
}

/// MD map with the default window length.
pub fn md_map(img: &GrayImage) -> MdMap {
    md_map_with_window(img, md_window_length(img.width(), img.height(), MD_WINDOW_FLOOR))
}

/// MD map scanned row by row with non-overlapping windows of `n` pixels.
/// The trailing window of a row shrinks to whatever pixels remain.
pub fn md_map_with_window(img: &GrayImage, n: usize) -> MdMap {
    assert!(n >= 1, "window length must be positive");
    let (w, h) = (img.width(), img.height());
    let mut values = vec![0.0; w * h];
    for r in 0..h {
        let row = &img.data()[r * w..(r + 1) * w];
        for (chunk_idx, chunk) in row.chunks(n).enumerate() {
            let (lo, hi) = chunk.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            let start = r * w + chunk_idx * n;
            values[start..start + chunk.len()].fill(hi - lo);
        }
    }
    MdMap {
        width: w,
        height: h,
        values,
        window_length: n,
    }
}

/// Two-way split of the MD values.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// `true` marks the text cluster.
    pub mask: BinaryMask,
    pub nontext_center: f64,
    pub text_center: f64,
    pub iterations: usize,
}

/// Lloyd iterations on scalars with centres seeded at the extremes; returns
/// the threshold separating the clusters and the two centres.
///
/// In one dimension a Lloyd fixpoint is a split of the sorted values, so the
/// result is then compared against every sorted split and the partition with
/// the lowest within-cluster sum of squares wins.
fn two_means(values: &[f64], max_iter: usize) -> Option<(f64, f64, f64, usize)> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let (lo, hi) = (*sorted.first()?, *sorted.last()?);
    if lo == hi {
        return None;
    }
    let n = sorted.len();
    let mut prefix = Vec::with_capacity(n + 1);
    let mut prefix_sq = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    prefix_sq.push(0.0);
    for &v in &sorted {
        prefix.push(prefix.last().unwrap() + v);
        prefix_sq.push(prefix_sq.last().unwrap() + v * v);
    }
    // Cost of the partition {sorted[..k]}, {sorted[k..]}.
    let cost = |k: usize| -> f64 {
        let sse = |a: usize, b: usize| {
            let m = (b - a) as f64;
            let s = prefix[b] - prefix[a];
            prefix_sq[b] - prefix_sq[a] - s * s / m
        };
        sse(0, k) + sse(k, n)
    };
    let means = |k: usize| (prefix[k] / k as f64, (prefix[n] - prefix[k]) / (n - k) as f64);

    // Lloyd: low cluster is sorted[..k].
    let (mut c0, mut c1) = (lo, hi);
    let mut k = 0;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let mid = 0.5 * (c0 + c1);
        // Ties go to the low cluster.
        let new_k = sorted.partition_point(|&v| v <= mid);
        if new_k == k {
            break;
        }
        k = new_k;
        (c0, c1) = means(k);
    }
    let mut best_k = k;
    let mut best = cost(k);
    for cand in 1..n {
        if sorted[cand - 1] == sorted[cand] {
            continue;
        }
        let c = cost(cand);
        if c < best - 1e-12 * best.abs().max(1.0) {
            best = c;
            best_k = cand;
        }
    }
    let (c0, c1) = means(best_k);
    Some((sorted[best_k - 1], c0, c1, iterations))
}

/// Clusters MD values into non-text (low) and text (high).
///
/// A map where every value is equal has no contrast to split on and is
/// labeled entirely non-text.
pub fn kmeans_2(md: &MdMap) -> ClusterResult {
    match two_means(&md.values, 100) {
        None => {
            let c = md.values.first().copied().unwrap_or(0.0);
            ClusterResult {
                mask: BinaryMask::new(md.width, md.height),
                nontext_center: c,
                text_center: c,
                iterations: 0,
            }
        }
        Some((threshold, c0, c1, iterations)) => {
            let bits = md.values.iter().map(|&v| v > threshold).collect();
            ClusterResult {
                mask: BinaryMask::from_vec(md.width, md.height, bits).expect("same dims"),
                nontext_center: c0,
                text_center: c1,
                iterations,
            }
        }
    }
}

/// Square structuring element of side `2 * radius + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub radius: usize,
}

impl Default for StructuringElement {
    fn default() -> Self {
        Self { radius: 1 }
    }
}

/// Erosion with a square element; pixels outside the raster count as
/// background.
pub fn erode(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    let r = se.radius as isize;
    BinaryMask::from_fn(mask.width(), mask.height(), |row, col| {
        (-r..=r).all(|dr| (-r..=r).all(|dc| mask.get_signed(row as isize + dr, col as isize + dc)))
    })
}

pub fn dilate(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    let r = se.radius as isize;
    BinaryMask::from_fn(mask.width(), mask.height(), |row, col| {
        (-r..=r).any(|dr| (-r..=r).any(|dc| mask.get_signed(row as isize + dr, col as isize + dc)))
    })
}

/// Opening with the default 3x3 element.
pub fn morph_open(mask: &BinaryMask) -> BinaryMask {
    morph_open_with(mask, StructuringElement::default())
}

pub fn morph_open_with(mask: &BinaryMask, se: StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}
