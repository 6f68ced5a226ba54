//! Raster primitives: real-valued grayscale images, binary masks, 8-connected
//! components, image I/O, and conversion between masks and boundary polygons.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::error::{Error, Result};

/// A pixel coordinate as `(row, col)`.
pub type Pixel = (usize, usize);

/// 8-neighbourhood offsets in clockwise order starting north.
pub(crate) const NEIGHBORS8: [(isize, isize); 8] =
    [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

/// Row-major grayscale raster with intensities kept as `f64` in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("{width}x{height} image")));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::new(width, height);
        for r in 0..height {
            for c in 0..width {
                img.data[r * width + c] = f(r, c);
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Bilinear sample at sub-pixel `(row, col)`; coordinates outside the
    /// raster read as `outside`.
    pub fn sample_bilinear(&self, row: f64, col: f64, outside: f64) -> f64 {
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = row - r0;
        let fc = col - c0;
        let fetch = |r: f64, c: f64| -> f64 {
            if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
                outside
            } else {
                self.get(r as usize, c as usize)
            }
        };
        let top = fetch(r0, c0) * (1.0 - fc) + fetch(r0, c0 + 1.0) * fc;
        let bottom = fetch(r0 + 1.0, c0) * (1.0 - fc) + fetch(r0 + 1.0, c0 + 1.0) * fc;
        top * (1.0 - fr) + bottom * fr
    }

    /// Crops the inclusive rectangle `[r0, r1] x [c0, c1]`.
    pub fn crop(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> GrayImage {
        GrayImage::from_fn(c1 - c0 + 1, r1 - r0 + 1, |r, c| self.get(r0 + r, c0 + c))
    }

    /// Quantizes to 8 bits, clamping to `[0, 255]`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Linear min-max rescale to `[0, 255]`; a constant image maps to zero.
    pub fn normalized(&self) -> GrayImage {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        let data = if span > 0.0 {
            self.data.iter().map(|v| (v - lo) / span * 255.0).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        GrayImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be positive");
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} bits for a {width}x{height} mask",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for r in 0..height {
            for c in 0..width {
                m.bits[r * width + c] = f(r, c);
            }
        }
        m
    }

    pub fn from_pixels(width: usize, height: usize, pixels: &[Pixel]) -> Self {
        let mut m = Self::new(width, height);
        for &(r, c) in pixels {
            m.set(r, c, true);
        }
        m
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    /// Like [`get`](Self::get) but out-of-bounds coordinates read as background.
    #[inline]
    pub fn get_signed(&self, row: isize, col: isize) -> bool {
        row >= 0
            && col >= 0
            && (row as usize) < self.height
            && (col as usize) < self.width
            && self.bits[row as usize * self.width + col as usize]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixels in row-major order.
    pub fn pixels(&self) -> Vec<Pixel> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i / self.width, i % self.width))
            .collect()
    }

    /// Inclusive bounding box `(min_row, min_col, max_row, max_col)`.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        bounds_of(self.pixels().iter().copied())
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| **a && **b).count()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    pub fn crop(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> BinaryMask {
        BinaryMask::from_fn(c1 - c0 + 1, r1 - r0 + 1, |r, c| self.get(r0 + r, c0 + c))
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |r, c| if self.get(r, c) { 255.0 } else { 0.0 })
    }
}

pub(crate) fn bounds_of(pixels: impl Iterator<Item = Pixel>) -> Option<(usize, usize, usize, usize)> {
    pixels.fold(None, |acc, (r, c)| match acc {
        None => Some((r, c, r, c)),
        Some((r0, c0, r1, c1)) => Some((r0.min(r), c0.min(c), r1.max(r), c1.max(c))),
    })
}

/// An 8-connected set of foreground pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: usize,
    /// Pixels in row-major order.
    pub pixels: Vec<Pixel>,
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

impl Component {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Labels the 8-connected foreground components of `mask`.
///
/// Components are numbered in the order their first pixel appears in a
/// row-major scan.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            pixels.push((r, c));
            for (dr, dc) in NEIGHBORS8 {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if mask.get_signed(nr, nc) {
                    let j = nr as usize * w + nc as usize;
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        pixels.sort_unstable();
        let (min_row, min_col, max_row, max_col) =
            bounds_of(pixels.iter().copied()).expect("component has a seed pixel");
        out.push(Component {
            id: out.len(),
            pixels,
            min_row,
            min_col,
            max_row,
            max_col,
        });
    }
    out
}

#[inline]
fn luma(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round()
}

fn dynamic_to_gray(img: DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| f64::from(p.0[0])).collect(),
        DynamicImage::ImageLuma16(buf) => buf
            .into_raw()
            .into_iter()
            .map(|v| (f64::from(v) / 257.0).round())
            .collect(),
        other => other.to_rgb8().pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
    };
    GrayImage::from_vec(w, h, data)
}

/// Decodes a PNG or binary PGM file into a grayscale raster.
///
/// Colour inputs are converted with luma weights `0.299 R + 0.587 G + 0.114 B`.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Pnm) => {}
        other => {
            return Err(Error::Format(format!(
                "{}: expected PNG or PGM, found {other:?}",
                path.display()
            )))
        }
    }
    let img = reader
        .decode()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    dynamic_to_gray(img)
}

/// Decodes an in-memory PNG or PGM.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Format(e.to_string()))?;
    dynamic_to_gray(img)
}

/// Writes an 8-bit grayscale PNG (values clamped to `[0, 255]`).
pub fn save_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Format(other.to_string()),
        })
}

/// Writes a binary (P5) PGM.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend(img.to_u8());
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Traces the outer boundary of the largest 4-connected foreground region of
/// `mask` along pixel edges.
///
/// Vertices are `[x, y]` pixel-corner coordinates (`x` = column), so the
/// pixel `(r, c)` is inside the polygon iff its centre `(c + 0.5, r + 0.5)`
/// is. Collinear vertices are dropped. Returns `None` for an empty mask.
pub fn mask_outline(mask: &BinaryMask) -> Option<Vec<[f64; 2]>> {
    use std::collections::HashMap;
    let fg = |r: isize, c: isize| mask.get_signed(r, c);
    // Directed boundary edges keep the foreground on the right when walking
    // in image coordinates (y down), which makes outer loops clockwise.
    let mut next: HashMap<(isize, isize), Vec<(isize, isize)>> = HashMap::new();
    for (r, c) in mask.pixels() {
        let (r, c) = (r as isize, c as isize);
        if !fg(r - 1, c) {
            next.entry((c, r)).or_default().push((c + 1, r));
        }
        if !fg(r, c + 1) {
            next.entry((c + 1, r)).or_default().push((c + 1, r + 1));
        }
        if !fg(r + 1, c) {
            next.entry((c + 1, r + 1)).or_default().push((c, r + 1));
        }
        if !fg(r, c - 1) {
            next.entry((c, r + 1)).or_default().push((c, r));
        }
    }
    if next.is_empty() {
        return None;
    }
    let mut starts: Vec<(isize, isize)> = next.keys().copied().collect();
    starts.sort_unstable_by_key(|&(x, y)| (y, x));
    let mut best: Option<(f64, Vec<(isize, isize)>)> = None;
    for start in starts {
        if next.get(&start).is_none_or(|v| v.is_empty()) {
            continue;
        }
        let mut loop_pts = vec![start];
        let mut cur = start;
        let mut prev_dir: Option<(isize, isize)> = None;
        loop {
            let outs = next.get_mut(&cur).expect("every vertex on a loop has an exit");
            // At a pinch vertex (two pixels touching diagonally) prefer the
            // right turn so 4-connected regions trace separately.
            let pick = if outs.len() > 1 {
                let pd = prev_dir.unwrap_or((1, 0));
                let right = (-pd.1, pd.0);
                outs.iter()
                    .position(|&(x, y)| (x - cur.0, y - cur.1) == right)
                    .unwrap_or(0)
            } else {
                0
            };
            let nxt = outs.swap_remove(pick);
            prev_dir = Some((nxt.0 - cur.0, nxt.1 - cur.1));
            cur = nxt;
            if cur == start {
                break;
            }
            loop_pts.push(cur);
        }
        let area = shoelace(&loop_pts);
        if best.as_ref().is_none_or(|(a, _)| area > *a) {
            best = Some((area, loop_pts));
        }
    }
    let (_, pts) = best?;
    let n = pts.len();
    let simplified: Vec<[f64; 2]> = (0..n)
        .filter(|&i| {
            let a = pts[(i + n - 1) % n];
            let b = pts[i];
            let c = pts[(i + 1) % n];
            (b.0 - a.0) * (c.1 - b.1) - (b.1 - a.1) * (c.0 - b.0) != 0
        })
        .map(|i| [pts[i].0 as f64, pts[i].1 as f64])
        .collect();
    Some(simplified)
}

fn shoelace(pts: &[(isize, isize)]) -> f64 {
    let n = pts.len();
    let twice: isize = (0..n)
        .map(|i| {
            let (x0, y0) = pts[i];
            let (x1, y1) = pts[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice as f64 / 2.0
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(x: f64, y: f64, poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Rasterizes a polygon given in `[x, y]` coordinates by testing pixel centres.
pub fn rasterize_polygon(poly: &[[f64; 2]], width: usize, height: usize) -> BinaryMask {
    let mut m = BinaryMask::new(width, height);
    if poly.len() < 3 {
        return m;
    }
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in poly {
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let r0 = (ymin - 0.5).ceil().max(0.0) as usize;
    let r1 = ((ymax - 0.5).floor().max(-1.0) + 1.0).min(height as f64) as usize;
    for r in r0..r1 {
        for c in 0..width {
            if point_in_polygon(c as f64 + 0.5, r as f64 + 0.5, poly) {
                m.set(r, c, true);
            }
        }
    }
    m
}
