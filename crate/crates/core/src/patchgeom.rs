//! Patch geometry: stroke-band width from symmetric branch endpoints,
//! skeleton thickening, region extraction, quartic curve fitting and
//! rectification of curved patches into straight fixed-height strips.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, GrayImage, Pixel};
use crate::skeleton::{side_branches, SkeletonGraph};

/// Height of a rectified strip, matching the sliding-window height.
pub const STRIP_HEIGHT: usize = 40;

/// Euclidean distance between two points.
#[inline]
pub fn euclidean(p1: (f64, f64), p2: (f64, f64)) -> f64 {
    ((p1.0 - p2.0).powi(2) + (p1.1 - p2.1).powi(2)).sqrt()
}

#[inline]
fn px(p: Pixel) -> (f64, f64) {
    (p.0 as f64, p.1 as f64)
}

/// How two branch endpoints are tested for symmetry about the main axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryTest {
    /// `|da-db|/max(da,db) < 0.05 max(da,db)` and
    /// `|(da+db)-dab|/max(da+db,dab) < 0.05 max(da+db,dab)`, exactly as
    /// written; the right-hand sides grow with distance.
    #[default]
    Verbatim,
    /// Both ratios compared against a plain 5 %.
    Relative,
}

/// Symmetry test in its verbatim form.
pub fn is_symmetric(d_a: f64, d_b: f64, d_ab: f64) -> bool {
    is_symmetric_with(SymmetryTest::Verbatim, d_a, d_b, d_ab)
}

pub fn is_symmetric_with(test: SymmetryTest, d_a: f64, d_b: f64, d_ab: f64) -> bool {
    let m1 = d_a.max(d_b);
    let m2 = (d_a + d_b).max(d_ab);
    if m1 <= 0.0 || m2 <= 0.0 {
        return false;
    }
    let r1 = (d_a - d_b).abs() / m1;
    let r2 = ((d_a + d_b) - d_ab).abs() / m2;
    match test {
        SymmetryTest::Verbatim => r1 < 0.05 * m1 && r2 < 0.05 * m2,
        SymmetryTest::Relative => r1 < 0.05 && r2 < 0.05,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthSource {
    SymmetricMax,
    DoubledLoneBranch,
    ThirdOfLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricPair {
    pub a: Pixel,
    pub b: Pixel,
    pub d_a: f64,
    pub d_b: f64,
    pub d_ab: f64,
}

/// Band width of a skeleton and how it was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub w: f64,
    pub symmetric_pairs: Vec<SymmetricPair>,
    pub source: WidthSource,
}

/// A side-branch endpoint with the main-axis pixel its branch starts from.
#[derive(Debug, Clone, Copy)]
struct BranchTip {
    tip: Pixel,
    junction: Pixel,
    /// Signed side of the main axis (cross product sign).
    side: f64,
    dist: f64,
    branch: usize,
}

fn branch_tips(sk: &SkeletonGraph) -> Vec<BranchTip> {
    let axis = sk.main_axis();
    let axis_pos = |p: Pixel| axis.iter().position(|&q| q == p);
    let mut tips = Vec::new();
    for (bi, b) in side_branches(sk).iter().enumerate() {
        for &tip in b.pixels.iter().filter(|&&p| sk.degree(p) == Some(1)) {
            // Attachment nearest to the tip.
            let junction = *b
                .attachments
                .iter()
                .min_by(|&&x, &&y| {
                    euclidean(px(tip), px(x))
                        .total_cmp(&euclidean(px(tip), px(y)))
                        .then(x.cmp(&y))
                })
                .expect("side branches touch the axis");
            let i = axis_pos(junction).unwrap_or(0);
            let lo = axis[i.saturating_sub(2)];
            let hi = axis[(i + 2).min(axis.len() - 1)];
            let (ty, tx) = (hi.0 as f64 - lo.0 as f64, hi.1 as f64 - lo.1 as f64);
            let (vy, vx) = (tip.0 as f64 - junction.0 as f64, tip.1 as f64 - junction.1 as f64);
            tips.push(BranchTip {
                tip,
                junction,
                side: (tx * vy - ty * vx).signum(),
                dist: euclidean(px(tip), px(junction)),
                branch: bi,
            });
        }
    }
    tips
}

/// Width of the band a skeleton stands for.
///
/// Branch endpoints lying on opposite sides of the main axis, attached within
/// reach of each other, are paired when they pass the symmetry test; `W` is
/// the largest pair separation. Endpoints without a partner count twice their
/// distance to the axis. A skeleton with no side branches gets a third of its
/// length.
pub fn compute_width(sk: &SkeletonGraph, test: SymmetryTest) -> WidthEstimate {
    let tips = branch_tips(sk);
    if tips.is_empty() {
        return WidthEstimate {
            w: (sk.length() as f64 / 3.0).max(1.0),
            symmetric_pairs: Vec::new(),
            source: WidthSource::ThirdOfLength,
        };
    }
    let mut paired = vec![false; tips.len()];
    let mut pairs = Vec::new();
    for i in 0..tips.len() {
        for j in i + 1..tips.len() {
            let (a, b) = (&tips[i], &tips[j]);
            if a.branch == b.branch && a.junction != b.junction {
                continue;
            }
            if a.side * b.side >= 0.0 {
                continue;
            }
            if euclidean(px(a.junction), px(b.junction)) > a.dist.max(b.dist) {
                continue;
            }
            let d_ab = euclidean(px(a.tip), px(b.tip));
            if a.dist > 0.0 && b.dist > 0.0 && is_symmetric_with(test, a.dist, b.dist, d_ab) {
                paired[i] = true;
                paired[j] = true;
                pairs.push(SymmetricPair {
                    a: a.tip,
                    b: b.tip,
                    d_a: a.dist,
                    d_b: b.dist,
                    d_ab,
                });
            }
        }
    }
    let sym_max = pairs.iter().map(|p| p.d_ab).fold(0.0, f64::max);
    let lone_max = tips
        .iter()
        .zip(&paired)
        .filter(|(_, &p)| !p)
        .map(|(t, _)| 2.0 * t.dist)
        .fold(0.0, f64::max);
    let (w, source) = if !pairs.is_empty() && sym_max >= lone_max {
        (sym_max, WidthSource::SymmetricMax)
    } else {
        (lone_max, WidthSource::DoubledLoneBranch)
    };
    WidthEstimate {
        w: w.max(1.0),
        symmetric_pairs: pairs,
        source,
    }
}

/// Integer radius of the odd-diameter digital disk closest to width `w`.
pub fn disk_radius(w: f64) -> usize {
    (((w - 1.0) / 2.0).round().max(0.0)) as usize
}

/// Dilates the skeleton with a disk of diameter `W`, clipped to the raster.
pub fn thicken(sk: &SkeletonGraph, w: &WidthEstimate, width: usize, height: usize) -> BinaryMask {
    let r = disk_radius(w.w) as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dr| (-r..=r).map(move |dc| (dr, dc)))
        .filter(|&(dr, dc)| dr * dr + dc * dc <= r * r + r)
        .collect();
    let mut m = BinaryMask::new(width, height);
    for &(pr, pc) in sk.pixels() {
        for &(dr, dc) in &offsets {
            let (rr, cc) = (pr as isize + dr, pc as isize + dc);
            if rr >= 0 && cc >= 0 && (rr as usize) < height && (cc as usize) < width {
                m.set(rr as usize, cc as usize, true);
            }
        }
    }
    m
}

/// Grayscale pixels under a mask, cropped to the mask's bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionStrip {
    /// Top-left corner of the crop in image coordinates.
    pub origin: Pixel,
    pub mask: BinaryMask,
    /// Image intensities where the mask is set, 0 elsewhere.
    pub gray: GrayImage,
}

pub fn extract_region(img: &GrayImage, mask: &BinaryMask) -> Result<RegionStrip> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::Dimension(format!(
            "mask {}x{} vs image {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    let (r0, c0, r1, c1) = mask.bounding_box().ok_or(Error::Empty("region mask"))?;
    let cropped = mask.crop(r0, c0, r1, c1);
    let gray = GrayImage::from_fn(c1 - c0 + 1, r1 - r0 + 1, |r, c| {
        if cropped.get(r, c) {
            img.get(r0 + r, c0 + c)
        } else {
            0.0
        }
    });
    Ok(RegionStrip {
        origin: (r0, c0),
        mask: cropped,
        gray,
    })
}

/// Polynomial `y = sum a_k x^k` with its fitted domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    /// `a_0 .. a_n`, lowest order first.
    pub coefficients: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
}

impl Polynomial {
    pub fn degree(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &a)| acc * x + k as f64 * a)
    }

    pub fn residual(&self, points: &[(f64, f64)]) -> f64 {
        points.iter().map(|&(x, y)| (self.eval(x) - y).powi(2)).sum()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Unconstrained least-squares polynomial fit.
///
/// The degree drops to `distinct_x - 1` when there are too few distinct
/// abscissae. The fit runs on centred and scaled abscissae through an SVD and
/// the coefficients are expanded back into the original variable.
pub fn fit_polynomial(points: &[(f64, f64)], degree: usize) -> Result<Polynomial> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!("{} points for a curve fit", points.len())));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_unstable_by(f64::total_cmp);
    xs.dedup();
    let degree = degree.min(xs.len() - 1);
    let (x_min, x_max) = (xs[0], *xs.last().unwrap());
    let center = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let scale = ((x_max - x_min) / 2.0).max(1e-12);
    let n = degree + 1;
    let design = DMatrix::from_fn(points.len(), n, |i, k| ((points[i].0 - center) / scale).powi(k as i32));
    let rhs = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let svd = design.svd(true, true);
    let b = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Degenerate(format!("least squares: {e}")))?;
    // sum_k b_k ((x - m)/s)^k  ->  sum_j a_j x^j
    let mut coefficients = vec![0.0; n];
    for k in 0..n {
        let bk = b[k] / scale.powi(k as i32);
        for (j, a) in coefficients.iter_mut().enumerate().take(k + 1) {
            *a += bk * binomial(k, j) * (-center).powi((k - j) as i32);
        }
    }
    Ok(Polynomial {
        coefficients,
        x_min,
        x_max,
    })
}

/// A quartic expressed in a frame whose x axis runs along the skeleton's
/// main-axis chord.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialCurve {
    pub poly: Polynomial,
    /// Frame origin in image coordinates `(x = col, y = row)`.
    pub origin: (f64, f64),
    /// Unit chord direction in image coordinates.
    pub direction: (f64, f64),
    /// Mean band height measured across the curve.
    pub mean_height: f64,
}

impl PolynomialCurve {
    /// Frame normal, pointing down for a left-to-right chord.
    pub fn normal(&self) -> (f64, f64) {
        (-self.direction.1, self.direction.0)
    }

    /// Image point `(x, y)` for frame coordinates `(s, t)`.
    pub fn to_image(&self, s: f64, t: f64) -> (f64, f64) {
        let (ux, uy) = self.direction;
        let (nx, ny) = self.normal();
        (self.origin.0 + s * ux + t * nx, self.origin.1 + s * uy + t * ny)
    }

    pub fn to_frame(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.origin.0, y - self.origin.1);
        let (nx, ny) = self.normal();
        (dx * self.direction.0 + dy * self.direction.1, dx * nx + dy * ny)
    }

    /// Point on the curve at frame abscissa `s`, in image coordinates.
    pub fn point(&self, s: f64) -> (f64, f64) {
        self.to_image(s, self.poly.eval(s))
    }

    /// Unit tangent and normal at `s`, in image coordinates.
    pub fn local_frame(&self, s: f64) -> ((f64, f64), (f64, f64)) {
        let d = self.poly.derivative(s);
        let norm = (1.0 + d * d).sqrt();
        let (ux, uy) = self.direction;
        let (nx, ny) = self.normal();
        let tangent = ((ux + d * nx) / norm, (uy + d * ny) / norm);
        (tangent, (-tangent.1, tangent.0))
    }

    /// Abscissae spaced one unit of arc length apart over the domain.
    pub fn arc_samples(&self) -> Vec<f64> {
        let (a, b) = (self.poly.x_min, self.poly.x_max);
        if b <= a {
            return Vec::new();
        }
        let steps = (((b - a) * 8.0).ceil() as usize).max(1);
        let h = (b - a) / steps as f64;
        let mut out = vec![a];
        let mut acc = 0.0;
        let mut next = 1.0;
        let mut prev = self.point(a);
        for i in 1..=steps {
            let s = a + h * i as f64;
            let p = self.point(s);
            let seg = euclidean(prev, p);
            while acc + seg >= next {
                let f = (next - acc) / seg;
                out.push(s - h + f * h);
                next += 1.0;
            }
            acc += seg;
            prev = p;
        }
        out
    }

    pub fn arc_length(&self) -> f64 {
        let (a, b) = (self.poly.x_min, self.poly.x_max);
        let steps = (((b - a) * 8.0).ceil() as usize).max(1);
        let h = (b - a) / steps as f64;
        (0..steps)
            .map(|i| euclidean(self.point(a + h * i as f64), self.point(a + h * (i + 1) as f64)))
            .sum()
    }
}

/// Fits the band's centre-line curve from the skeleton's main axis.
///
/// The frame x axis is the chord between the axis endpoints, oriented left
/// to right (top to bottom for vertical chords). Axis pixels within `W / 2`
/// of either end are left out of the fit when enough remain, since those
/// run into the corner spurs of a thinned band.
pub fn fit_curve(sk: &SkeletonGraph, width: &WidthEstimate, mask: Option<&BinaryMask>) -> PolynomialCurve {
    let axis = sk.main_axis();
    let first = axis[0];
    let last = *axis.last().unwrap();
    let (mut a, mut b) = ((first.1 as f64, first.0 as f64), (last.1 as f64, last.0 as f64));
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        std::mem::swap(&mut a, &mut b);
    }
    let chord = euclidean(a, b);
    let direction = if chord > 0.0 {
        ((b.0 - a.0) / chord, (b.1 - a.1) / chord)
    } else {
        (1.0, 0.0)
    };
    let mut curve = PolynomialCurve {
        poly: Polynomial {
            coefficients: vec![0.0],
            x_min: 0.0,
            x_max: chord,
        },
        origin: a,
        direction,
        mean_height: width.w.max(1.0),
    };
    let frame_pts: Vec<(f64, f64)> = axis.iter().map(|&(r, c)| curve.to_frame(c as f64, r as f64)).collect();
    let trim = width.w / 2.0;
    let (s_lo, s_hi) = frame_pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    let core: Vec<(f64, f64)> = frame_pts
        .iter()
        .copied()
        .filter(|p| p.0 >= s_lo + trim && p.0 <= s_hi - trim)
        .collect();
    let fit_pts = if core.len() >= 10 { &core } else { &frame_pts };
    // A quartic through a short or trimmed axis can swing far off the band
    // once evaluated over the whole axis; fall back to lower degrees until
    // the curve stays within half a band width of the data.
    let bound = frame_pts.iter().fold(0.0f64, |m, p| m.max(p.1.abs())) + width.w / 2.0;
    let stays_close = |poly: &Polynomial| {
        let n = ((s_hi - s_lo).ceil() as usize).max(1);
        (0..=n).all(|i| poly.eval(s_lo + (s_hi - s_lo) * i as f64 / n as f64).abs() <= bound)
    };
    curve.poly.x_min = s_lo;
    curve.poly.x_max = s_hi;
    for degree in (1..=4).rev() {
        if let Ok(mut poly) = fit_polynomial(fit_pts, degree) {
            poly.x_min = s_lo;
            poly.x_max = s_hi;
            if stays_close(&poly) {
                curve.poly = poly;
                break;
            }
        }
    }
    if let Some(mask) = mask {
        if let Some(h) = measure_mean_height(&curve, mask) {
            curve.mean_height = h;
        }
    }
    curve
}

/// Average extent of `mask` across the curve, sampled at unit arc steps.
fn measure_mean_height(curve: &PolynomialCurve, mask: &BinaryMask) -> Option<f64> {
    let inside = |x: f64, y: f64| mask.get_signed(y.round() as isize, x.round() as isize);
    let limit = (mask.width() + mask.height()) as f64;
    let mut heights = Vec::new();
    for s in curve.arc_samples() {
        let (x, y) = curve.point(s);
        if !inside(x, y) {
            continue;
        }
        let (_, (nx, ny)) = curve.local_frame(s);
        let mut extent = 0.0;
        for sign in [-1.0, 1.0] {
            let mut t = 0.5;
            while t < limit && inside(x + sign * t * nx, y + sign * t * ny) {
                t += 0.5;
            }
            extent += t - 0.25;
        }
        heights.push(extent);
    }
    if heights.is_empty() {
        None
    } else {
        Some(heights.iter().sum::<f64>() / heights.len() as f64)
    }
}

/// A thickened candidate region ready for verification.
#[derive(Debug, Clone)]
pub struct TextPatch {
    /// Top-left of `mask` and `gray` in image coordinates.
    pub origin: Pixel,
    pub mask: BinaryMask,
    pub gray: GrayImage,
    pub skeleton: SkeletonGraph,
    pub width: WidthEstimate,
    pub curve: PolynomialCurve,
}

impl TextPatch {
    /// Width estimation, thickening, extraction and curve fitting for one
    /// skeleton of `img`.
    pub fn build(img: &GrayImage, sk: &SkeletonGraph, test: SymmetryTest) -> Result<TextPatch> {
        let width = compute_width(sk, test);
        Self::build_with_width(img, sk, width)
    }

    pub fn build_with_width(img: &GrayImage, sk: &SkeletonGraph, width: WidthEstimate) -> Result<TextPatch> {
        let full = thicken(sk, &width, img.width(), img.height());
        let region = extract_region(img, &full)?;
        let curve = fit_curve(sk, &width, Some(&full));
        Ok(TextPatch {
            origin: region.origin,
            mask: region.mask,
            gray: region.gray,
            skeleton: sk.clone(),
            width,
            curve,
        })
    }

    /// The patch mask placed back into a full-size raster.
    pub fn full_mask(&self, width: usize, height: usize) -> BinaryMask {
        let mut m = BinaryMask::new(width, height);
        for (r, c) in self.mask.pixels() {
            let (rr, cc) = (r + self.origin.0, c + self.origin.1);
            if rr < height && cc < width {
                m.set(rr, cc, true);
            }
        }
        m
    }
}

/// Bilinear resize.
pub fn resize_bilinear(img: &GrayImage, width: usize, height: usize) -> GrayImage {
    let sy = img.height() as f64 / height as f64;
    let sx = img.width() as f64 / width as f64;
    GrayImage::from_fn(width, height, |r, c| {
        let y = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height() - 1) as f64);
        let x = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width() - 1) as f64);
        img.sample_bilinear(y, x, 0.0)
    })
}

/// Scales a strip to [`STRIP_HEIGHT`] rows, preserving aspect ratio.
pub fn normalize_strip_height(strip: &GrayImage) -> GrayImage {
    let w = ((strip.width() as f64 * STRIP_HEIGHT as f64 / strip.height() as f64).round() as usize).max(1);
    resize_bilinear(strip, w, STRIP_HEIGHT)
}

/// Straightens a patch along its curve.
///
/// Columns are taken at unit arc-length steps; each column samples the patch
/// across the local normal over the mean band height. The strip is then
/// scaled to exactly [`STRIP_HEIGHT`] rows with its aspect ratio preserved.
pub fn rectify(patch: &TextPatch) -> Result<GrayImage> {
    let curve = &patch.curve;
    let samples = curve.arc_samples();
    if samples.len() < 2 {
        return Err(Error::Degenerate("curve has zero arc length".into()));
    }
    let rows = (curve.mean_height.round() as usize).max(1);
    let h = curve.mean_height.max(1.0);
    let (or, oc) = (patch.origin.0 as f64, patch.origin.1 as f64);
    let mut strip = GrayImage::new(samples.len(), rows);
    for (col, &s) in samples.iter().enumerate() {
        let (x, y) = curve.point(s);
        let (_, (nx, ny)) = curve.local_frame(s);
        for row in 0..rows {
            let t = -h / 2.0 + (row as f64 + 0.5) * h / rows as f64;
            let (sx, sy) = (x + t * nx, y + t * ny);
            strip.set(row, col, patch.gray.sample_bilinear(sy - or, sx - oc, 0.0));
        }
    }
    Ok(normalize_strip_height(&strip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn euclidean_cases() {
        assert_eq!(euclidean((0.0, 0.0), (3.0, 4.0)), 5.0);
        assert_eq!(euclidean((2.5, -1.0), (2.5, -1.0)), 0.0);
        assert_eq!(euclidean((1.0, 1.0), (4.0, 5.0)), 5.0);
    }

    #[test]
    fn symmetry_regressions() {
        assert!(is_symmetric(10.0, 10.0, 20.0));
        // The verbatim inequality is loose: a 0.5 ratio passes against 0.05 * 20.
        assert!(is_symmetric(10.0, 10.0, 10.0));
        assert!(!is_symmetric(1.0, 10.0, 11.0));
        assert!(!is_symmetric_with(SymmetryTest::Relative, 10.0, 10.0, 10.0));
        assert!(is_symmetric_with(SymmetryTest::Relative, 10.0, 10.2, 20.1));
    }

    proptest! {
        #[test]
        fn symmetry_test_ignores_argument_order(a in 0.1f64..50.0, b in 0.1f64..50.0, ab in 0.0f64..100.0) {
            prop_assert_eq!(is_symmetric(a, b, ab), is_symmetric(b, a, ab));
            prop_assert_eq!(
                is_symmetric_with(SymmetryTest::Relative, a, b, ab),
                is_symmetric_with(SymmetryTest::Relative, b, a, ab)
            );
        }
    }

    fn hline(row: usize, c0: usize, c1: usize) -> Vec<Pixel> {
        (c0..=c1).map(|c| (row, c)).collect()
    }

    fn vline(col: usize, r0: usize, r1: usize) -> Vec<Pixel> {
        (r0..=r1).map(|r| (r, col)).collect()
    }

    /// Horizontal axis with a vertical cross-bar of `up` pixels above and
    /// `down` pixels below column 15.
    fn barred(up: usize, down: usize) -> SkeletonGraph {
        let mut px = hline(20, 0, 30);
        if up > 0 {
            px.extend(vline(15, 20 - up, 19));
        }
        if down > 0 {
            px.extend(vline(15, 21, 20 + down));
        }
        SkeletonGraph::from_pixels(px)
    }

    #[test]
    fn width_rule_table() {
        let sym = compute_width(&barred(5, 5), SymmetryTest::Verbatim);
        assert_eq!(sym.source, WidthSource::SymmetricMax);
        assert_eq!(sym.w, 10.0);
        assert_eq!(sym.symmetric_pairs.len(), 1);

        let lone = compute_width(&barred(4, 0), SymmetryTest::Verbatim);
        assert_eq!(lone.source, WidthSource::DoubledLoneBranch);
        assert_eq!(lone.w, 8.0);

        let bare = SkeletonGraph::from_pixels(hline(3, 0, 30));
        let third = compute_width(&bare, SymmetryTest::Verbatim);
        assert_eq!(third.source, WidthSource::ThirdOfLength);
        assert_eq!(third.w, 10.0);
    }

    #[test]
    fn width_invariant_under_translation_and_quarter_turn() {
        let base = barred(5, 3);
        let w0 = compute_width(&base, SymmetryTest::Verbatim).w;
        let moved = SkeletonGraph::from_pixels(base.pixels().iter().map(|&(r, c)| (r + 7, c + 11)));
        assert_eq!(compute_width(&moved, SymmetryTest::Verbatim).w, w0);
        let turned = SkeletonGraph::from_pixels(base.pixels().iter().map(|&(r, c)| (c, 40 - r)));
        assert_eq!(compute_width(&turned, SymmetryTest::Verbatim).w, w0);
    }

    #[test]
    fn thicken_cases() {
        let line = SkeletonGraph::from_pixels(hline(5, 3, 12));
        let w3 = WidthEstimate {
            w: 3.0,
            symmetric_pairs: vec![],
            source: WidthSource::ThirdOfLength,
        };
        let m = thicken(&line, &w3, 20, 11);
        let rows: Vec<usize> = (0..11).filter(|&r| m.get(r, 8)).collect();
        assert_eq!(rows, vec![4, 5, 6]);

        let w1 = WidthEstimate { w: 1.0, ..w3.clone() };
        assert_eq!(thicken(&line, &w1, 20, 11), line.to_mask(20, 11));

        let diag = SkeletonGraph::from_pixels((0..15).map(|i| (i + 2, i + 2)));
        let w5 = WidthEstimate { w: 5.0, ..w3 };
        let m = thicken(&diag, &w5, 20, 20);
        for &(r, c) in diag.pixels() {
            for (dr, dc) in [(-2, 0), (2, 0), (0, -2), (0, 2), (-1, -1), (1, 1)] {
                if let (Some(rr), Some(cc)) = (r.checked_add_signed(dr), c.checked_add_signed(dc)) {
                    if rr < 20 && cc < 20 {
                        assert!(m.get(rr, cc));
                    }
                }
            }
        }
        assert!(m.count() >= diag.len());
    }

    #[test]
    fn thicken_area_is_monotone() {
        let sk = barred(3, 2);
        let mut prev = 0;
        for w in 1..12 {
            let est = WidthEstimate {
                w: w as f64,
                symmetric_pairs: vec![],
                source: WidthSource::ThirdOfLength,
            };
            let m = thicken(&sk, &est, 50, 50);
            assert!(sk.pixels().iter().all(|&(r, c)| m.get(r, c)));
            assert!(m.count() >= prev);
            prev = m.count();
        }
    }

    #[test]
    fn extract_region_cases() {
        let img = GrayImage::from_fn(6, 4, |r, c| (r * 10 + c) as f64);
        let full = BinaryMask::from_fn(6, 4, |_, _| true);
        assert_eq!(extract_region(&img, &full).unwrap().gray, img);

        let one = BinaryMask::from_pixels(6, 4, &[(2, 3)]);
        let strip = extract_region(&img, &one).unwrap();
        assert_eq!(strip.gray.data(), &[23.0]);
        assert_eq!(strip.origin, (2, 3));

        assert!(matches!(
            extract_region(&img, &BinaryMask::new(6, 4)),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            extract_region(&img, &BinaryMask::new(5, 4)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn band_extraction_matches_masked_pixels() {
        let img = crate::synth::render_text_image(80, 40, "AB", 3, 10.0, 8.0, 30.0, 220.0);
        let mask = BinaryMask::from_fn(80, 40, |r, _| (6..32).contains(&r));
        let strip = extract_region(&img, &mask).unwrap();
        for r in 0..40 {
            for c in 0..80 {
                if mask.get(r, c) {
                    assert_eq!(strip.gray.get(r - 6, c), img.get(r, c));
                }
            }
        }
        assert_eq!((strip.gray.width(), strip.gray.height()), (80, 26));
    }

    #[test]
    fn fit_exact_cases() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
        let p = fit_polynomial(&line, 4).unwrap();
        for (k, &a) in p.coefficients.iter().enumerate() {
            let want = if k == 1 { 1.0 } else { 0.0 };
            assert!((a - want).abs() < 1e-9, "a{k} = {a}");
        }

        let five = [(0.0, 1.0), (1.0, -2.0), (2.0, 0.5), (3.5, 4.0), (5.0, 0.0)];
        let p = fit_polynomial(&five, 4).unwrap();
        assert!(p.residual(&five) < 1e-9);

        let quartic: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let x = -2.0 + 4.0 * i as f64 / 49.0;
                (x, 2.0 * x.powi(4) - x + 3.0)
            })
            .collect();
        let p = fit_polynomial(&quartic, 4).unwrap();
        for (got, want) in p.coefficients.iter().zip([3.0, -1.0, 0.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-6);
        }

        assert!(fit_polynomial(&[(1.0, 1.0)], 4).is_err());
        let p = fit_polynomial(&[(1.0, 1.0), (1.0, 3.0), (2.0, 2.0)], 4).unwrap();
        assert_eq!(p.degree(), 1);
    }

    #[test]
    fn fit_beats_random_quartics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(f64, f64)> = (0..40)
            .map(|i| (i as f64 * 2.0, rng.random_range(-5.0..5.0) + 0.01 * (i * i) as f64))
            .collect();
        let best = fit_polynomial(&pts, 4).unwrap();
        let r = best.residual(&pts);
        for _ in 0..200 {
            let mut cand = best.clone();
            for a in cand.coefficients.iter_mut() {
                *a += rng.random_range(-1e-3..1e-3) * a.abs().max(1e-6);
            }
            assert!(r <= cand.residual(&pts) + 1e-9);
        }
    }

    fn band_patch(img: &GrayImage, sk: &SkeletonGraph, w: f64) -> TextPatch {
        let est = WidthEstimate {
            w,
            symmetric_pairs: vec![],
            source: WidthSource::ThirdOfLength,
        };
        TextPatch::build_with_width(img, sk, est).unwrap()
    }

    #[test]
    fn rectified_height_is_fixed() {
        let img = GrayImage::from_fn(120, 60, |r, c| ((r * 7 + c * 3) % 50) as f64);
        let sk = SkeletonGraph::from_pixels(hline(30, 10, 100));
        for w in [9.0, 21.0, 41.0] {
            let strip = rectify(&band_patch(&img, &sk, w)).unwrap();
            assert_eq!(strip.height(), STRIP_HEIGHT);
        }
    }

    #[test]
    fn horizontal_patch_rectifies_to_scaled_original() {
        let img = GrayImage::from_fn(140, 80, |r, c| {
            100.0 + 60.0 * ((r as f64) / 5.0).sin() * ((c as f64) / 9.0).cos()
        });
        let sk = SkeletonGraph::from_pixels(hline(40, 20, 119));
        let patch = band_patch(&img, &sk, 41.0);
        assert!((patch.curve.mean_height - 41.0).abs() < 1.0);
        let strip = rectify(&patch).unwrap();
        let reference = normalize_strip_height(&img.crop(20, 20, 60, 119));
        let n = strip.width().min(reference.width());
        let mut err = 0.0;
        for r in 0..STRIP_HEIGHT {
            for c in 0..n {
                err += (strip.get(r, c) - reference.get(r, c)).abs();
            }
        }
        assert!(
            err / (n * STRIP_HEIGHT) as f64 <= 5.0,
            "mean abs error {}",
            err / (n * STRIP_HEIGHT) as f64
        );
    }

    #[test]
    fn semicircle_strip_width_follows_arc_length() {
        let img = GrayImage::filled(200, 120, 128.0);
        let radius = 60.0f64;
        let mut px = Vec::new();
        for i in 0..=2000 {
            let th = std::f64::consts::PI * i as f64 / 2000.0;
            let (r, c) = (100.0 - radius * th.sin(), 100.0 - radius * th.cos());
            px.push((r.round() as usize, c.round() as usize));
        }
        let sk = SkeletonGraph::from_pixels(px);
        let patch = band_patch(&img, &sk, 1.0);
        let mut curve = patch.curve.clone();
        curve.mean_height = STRIP_HEIGHT as f64;
        let patch = TextPatch { curve, ..patch };
        let strip = rectify(&patch).unwrap();
        let arc = patch.curve.arc_length();
        assert!(
            (strip.width() as f64 - arc).abs() <= 2.0,
            "width {} vs arc {arc}",
            strip.width()
        );
        // A quartic cannot follow the vertical tangents at the ends of a
        // semicircle, so its arc falls somewhat short of pi * r.
        let half_turn = std::f64::consts::PI * radius;
        assert!(arc < half_turn && arc > 0.85 * half_turn, "arc {arc}");
    }

    #[test]
    fn zero_length_curve_is_rejected() {
        let img = GrayImage::filled(10, 10, 1.0);
        let sk = SkeletonGraph::from_pixels([(5, 5)]);
        let patch = band_patch(&img, &sk, 1.0);
        assert!(matches!(rectify(&patch), Err(Error::Degenerate(_))));
    }
}
