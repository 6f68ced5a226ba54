//! Synthetic scene text: words in a built-in 5x7 bitmap font rendered
//! straight, rotated or along quadratic arcs over textured backgrounds, with
//! ground-truth polygons. Used by the tests, the benchmark and the CLI's
//! `synth` helpers.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::error::Result;
use crate::evalproto::{GroundTruth, GtBlock};
use crate::patchgeom::{normalize_strip_height, rectify};
use crate::phog::{extract_sequence_with, FeatureSequence};
use crate::pipeline::{candidate_patches, PipelineConfig};
use crate::raster::{rasterize_polygon, BinaryMask, GrayImage};

pub const GLYPH_W: usize = 5;
pub const GLYPH_H: usize = 7;
/// Horizontal advance per character, in font units.
pub const ADVANCE: usize = GLYPH_W + 1;

const FONT: &[(char, [&str; GLYPH_H])] = &[
    ('A', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('B', ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."]),
    ('C', [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."]),
    ('D', ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('G', [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"]),
    ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('I', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"]),
    ('J', ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."]),
    ('K', ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"]),
    ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('M', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    ('N', ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('P', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('Q', [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"]),
    ('R', ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"]),
    ('S', [".####", "#....", "#....", ".###.", "....#", "....#", "####."]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('U', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('V', ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('W', ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."]),
    ('X', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
    ('Y', ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."]),
    ('Z', ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"]),
    ('0', [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."]),
    ('1', ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('2', [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"]),
    ('3', ["####.", "....#", "....#", ".###.", "....#", "....#", "####."]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('5', ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."]),
    ('6', [".###.", "#....", "#....", "####.", "#...#", "#...#", ".###."]),
    ('7', ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."]),
    ('8', [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."]),
    ('9', [".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."]),
];

/// Whether font cell `(row, col)` of `ch` is inked. Unknown characters and
/// space are blank; lowercase maps to uppercase.
pub fn glyph_bit(ch: char, row: usize, col: usize) -> bool {
    let ch = ch.to_ascii_uppercase();
    FONT.iter()
        .find(|(c, _)| *c == ch)
        .is_some_and(|(_, rows)| rows[row].as_bytes()[col] == b'#')
}

/// Ink test in text-line units: `u` along the line from the first glyph's
/// left edge, `v` down from the top, both in font cells.
fn ink_at(text: &[char], u: f64, v: f64) -> bool {
    if u < 0.0 || v < 0.0 || v >= GLYPH_H as f64 {
        return false;
    }
    let cell = u.floor() as usize;
    let (i, col) = (cell / ADVANCE, cell % ADVANCE);
    i < text.len() && col < GLYPH_W && glyph_bit(text[i], v.floor() as usize, col)
}

/// Axis-aligned text, each font cell `scale` pixels square, top-left corner at
/// `(x, y)`, ink `fg` on a flat `bg`.
#[allow(clippy::too_many_arguments)]
pub fn render_text_image(
    width: usize,
    height: usize,
    text: &str,
    scale: usize,
    x: f64,
    y: f64,
    fg: f64,
    bg: f64,
) -> GrayImage {
    let chars: Vec<char> = text.chars().collect();
    let s = scale.max(1) as f64;
    GrayImage::from_fn(width, height, |r, c| {
        if ink_at(&chars, (c as f64 - x) / s, (r as f64 - y) / s) {
            fg
        } else {
            bg
        }
    })
}

/// Renders a word on a flat background, already upright and `height` pixels
/// tall, with a margin of one font cell on each side.
pub fn render_word_strip(text: &str, height: usize, fg: f64, bg: f64) -> GrayImage {
    let chars: Vec<char> = text.chars().collect();
    let cells_h = GLYPH_H as f64 + 2.0;
    let s = height as f64 / cells_h;
    let cells_w = (chars.len() * ADVANCE) as f64 + 1.0;
    let width = ((cells_w * s).round() as usize).max(1);
    supersample(width, height, |x, y| ink_at(&chars, x / s - 1.0, y / s - 1.0), fg, bg)
}

fn supersample(width: usize, height: usize, ink: impl Fn(f64, f64) -> bool, fg: f64, bg: f64) -> GrayImage {
    const OFFS: [f64; 3] = [1.0 / 6.0, 0.5, 5.0 / 6.0];
    GrayImage::from_fn(width, height, |r, c| {
        let mut hits = 0;
        for oy in OFFS {
            for ox in OFFS {
                if ink(c as f64 + ox, r as f64 + oy) {
                    hits += 1;
                }
            }
        }
        let a = hits as f64 / 9.0;
        bg + a * (fg - bg)
    })
}

/// Path a word's baseline follows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextPath {
    /// Straight line through `(x, y)` (the word's start, mid-height) at
    /// `angle_deg` counter-clockwise from the x axis.
    Line { x: f64, y: f64, angle_deg: f64 },
    /// Quadratic arc: in the frame of a `Line`, the mid-line is displaced
    /// across the line by `curvature * (u - center)^2`. Glyphs are sheared
    /// along the cross direction, so their verticals stay parallel.
    Quadratic {
        x: f64,
        y: f64,
        angle_deg: f64,
        curvature: f64,
        center: f64,
    },
}

/// A word placed in a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpec {
    pub text: String,
    /// Pixels per font cell.
    pub scale: f64,
    pub path: TextPath,
    pub fg: f64,
}

impl WordSpec {
    /// Length along the path and height of the word, in pixels.
    pub fn extent(&self) -> (f64, f64) {
        let n = self.text.chars().count();
        (((n * ADVANCE) as f64 - 1.0) * self.scale, GLYPH_H as f64 * self.scale)
    }

    /// Maps image point `(x, y)` to word coordinates `(u, v)` in pixels:
    /// `u` along the path from the start, `v` across it from mid-height,
    /// positive downwards.
    pub fn to_word(&self, x: f64, y: f64) -> (f64, f64) {
        match self.path {
            TextPath::Line {
                x: x0,
                y: y0,
                angle_deg,
            } => {
                let a = angle_deg.to_radians();
                let (ux, uy) = (a.cos(), -a.sin());
                let (dx, dy) = (x - x0, y - y0);
                (dx * ux + dy * uy, -dx * uy + dy * ux)
            }
            TextPath::Quadratic {
                x: x0,
                y: y0,
                angle_deg,
                curvature,
                center,
            } => {
                let a = angle_deg.to_radians();
                let (ux, uy) = (a.cos(), -a.sin());
                let (dx, dy) = (x - x0, y - y0);
                let u = dx * ux + dy * uy;
                (u, -dx * uy + dy * ux - curvature * (u - center).powi(2))
            }
        }
    }

    /// Inverse of [`WordSpec::to_word`].
    pub fn to_image(&self, u: f64, v: f64) -> (f64, f64) {
        match self.path {
            TextPath::Line {
                x: x0,
                y: y0,
                angle_deg,
            } => {
                let a = angle_deg.to_radians();
                let (ux, uy) = (a.cos(), -a.sin());
                (x0 + u * ux - v * uy, y0 + u * uy + v * ux)
            }
            TextPath::Quadratic {
                x: x0,
                y: y0,
                angle_deg,
                curvature,
                center,
            } => {
                let a = angle_deg.to_radians();
                let (ux, uy) = (a.cos(), -a.sin());
                let w = v + curvature * (u - center).powi(2);
                (x0 + u * ux - w * uy, y0 + u * uy + w * ux)
            }
        }
    }

    fn ink(&self, chars: &[char], x: f64, y: f64) -> bool {
        let (u, v) = self.to_word(x, y);
        let (_, h) = self.extent();
        ink_at(chars, u / self.scale, (v + h / 2.0) / self.scale)
    }

    /// Ground-truth outline: the word's box padded by `pad` pixels, traced
    /// through the path mapping (curved paths are sampled every few pixels).
    pub fn polygon(&self, pad: f64) -> Vec<[f64; 2]> {
        let (len, h) = self.extent();
        let (u0, u1, v0, v1) = (-pad, len + pad, -h / 2.0 - pad, h / 2.0 + pad);
        let steps = match self.path {
            TextPath::Line { .. } => 1,
            TextPath::Quadratic { .. } => ((u1 - u0) / 4.0).ceil().max(2.0) as usize,
        };
        let mut poly = Vec::with_capacity(2 * steps + 2);
        for i in 0..=steps {
            let u = u0 + (u1 - u0) * i as f64 / steps as f64;
            let (x, y) = self.to_image(u, v0);
            poly.push([x, y]);
        }
        for i in (0..=steps).rev() {
            let u = u0 + (u1 - u0) * i as f64 / steps as f64;
            let (x, y) = self.to_image(u, v1);
            poly.push([x, y]);
        }
        poly
    }
}

/// Non-text clutter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distractor {
    /// Sinusoidal grating inside an axis-aligned box.
    Stripes {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        period: f64,
        angle_deg: f64,
        contrast: f64,
    },
    /// Filled disc.
    Disc { cx: f64, cy: f64, r: f64, value: f64 },
    /// Filled rectangle.
    Block { x: f64, y: f64, w: f64, h: f64, value: f64 },
}

/// Ground truth for one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRegion {
    pub text: String,
    pub polygon: Vec<[f64; 2]>,
    pub char_count: usize,
}

impl GtRegion {
    pub fn mask(&self, width: usize, height: usize) -> BinaryMask {
        rasterize_polygon(&self.polygon, width, height)
    }
}

/// Everything needed to render a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Background level at the left and right edges (linear ramp).
    pub background: (f64, f64),
    pub noise_sigma: f64,
    pub words: Vec<WordSpec>,
    pub distractors: Vec<Distractor>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub image: GrayImage,
    pub regions: Vec<GtRegion>,
}

/// Padding around each word in its ground-truth polygon, in font cells.
pub const GT_PAD_CELLS: f64 = 1.0;

impl SceneSpec {
    pub fn render(&self) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5ce4e);
        let (b0, b1) = self.background;
        let w = self.width.max(2) as f64 - 1.0;
        let mut img = GrayImage::from_fn(self.width, self.height, |_, c| b0 + (b1 - b0) * c as f64 / w);
        for d in &self.distractors {
            paint_distractor(&mut img, d);
        }
        for word in &self.words {
            paint_word(&mut img, word);
        }
        if self.noise_sigma > 0.0 {
            for v in img.data_mut() {
                // Sum of uniforms: close enough to Gaussian for texture.
                let n: f64 = (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * 0.866;
                *v += n * self.noise_sigma;
            }
        }
        for v in img.data_mut() {
            *v = v.clamp(0.0, 255.0);
        }
        let regions = self
            .words
            .iter()
            .map(|w| GtRegion {
                text: w.text.clone(),
                polygon: w.polygon(GT_PAD_CELLS * w.scale),
                char_count: w.text.chars().filter(|c| !c.is_whitespace()).count(),
            })
            .collect();
        Scene {
            spec: self.clone(),
            image: img,
            regions,
        }
    }
}

fn paint_word(img: &mut GrayImage, word: &WordSpec) {
    let chars: Vec<char> = word.text.chars().collect();
    let poly = word.polygon(word.scale);
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &poly {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let c0 = x0.floor().max(0.0) as usize;
    let r0 = y0.floor().max(0.0) as usize;
    let c1 = (x1.ceil().max(0.0) as usize).min(img.width().saturating_sub(1));
    let r1 = (y1.ceil().max(0.0) as usize).min(img.height().saturating_sub(1));
    const OFFS: [f64; 3] = [1.0 / 6.0, 0.5, 5.0 / 6.0];
    for r in r0..=r1 {
        for c in c0..=c1 {
            let mut hits = 0;
            for oy in OFFS {
                for ox in OFFS {
                    if word.ink(&chars, c as f64 + ox - 0.5, r as f64 + oy - 0.5) {
                        hits += 1;
                    }
                }
            }
            if hits > 0 {
                let a = hits as f64 / 9.0;
                let bg = img.get(r, c);
                img.set(r, c, bg + a * (word.fg - bg));
            }
        }
    }
}

fn paint_distractor(img: &mut GrayImage, d: &Distractor) {
    let (w, h) = (img.width(), img.height());
    match *d {
        Distractor::Stripes {
            x,
            y,
            w: bw,
            h: bh,
            period,
            angle_deg,
            contrast,
        } => {
            let a = angle_deg.to_radians();
            let (ca, sa) = (a.cos(), a.sin());
            for r in 0..h {
                for c in 0..w {
                    let (fx, fy) = (c as f64, r as f64);
                    if fx >= x && fx < x + bw && fy >= y && fy < y + bh {
                        let t = fx * ca + fy * sa;
                        let v = img.get(r, c) + contrast * (std::f64::consts::TAU * t / period).sin();
                        img.set(r, c, v);
                    }
                }
            }
        }
        Distractor::Disc { cx, cy, r: rad, value } => {
            for r in 0..h {
                for c in 0..w {
                    if (c as f64 - cx).powi(2) + (r as f64 - cy).powi(2) <= rad * rad {
                        img.set(r, c, value);
                    }
                }
            }
        }
        Distractor::Block {
            x,
            y,
            w: bw,
            h: bh,
            value,
        } => {
            for r in 0..h {
                for c in 0..w {
                    let (fx, fy) = (c as f64, r as f64);
                    if fx >= x && fx < x + bw && fy >= y && fy < y + bh {
                        img.set(r, c, value);
                    }
                }
            }
        }
    }
}

const WORDS: &[&str] = &[
    "OPEN", "EXIT", "CAFE", "HOTEL", "SALE", "BANK", "PARK", "STOP", "TAXI", "BOOKS", "PIZZA", "MUSIC", "SHOP", "BAR",
    "FOOD", "NEWS", "CITY", "ROAD", "MARKET", "BAKERY", "CINEMA", "POST", "GATE", "HALL", "SUSHI", "DELI", "TOYS",
    "GIFTS", "WINE", "TEA", "BUS", "ZONE", "NORTH", "WEST", "KEYS", "LAMP", "CLUB", "2024", "1987", "24H",
];

/// Shape of a generated word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Straight0,
    Straight30,
    Straight60,
    Curved,
}

/// Knobs for random scene generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGenConfig {
    pub width: usize,
    pub height: usize,
    pub max_words: usize,
    pub scale_range: (f64, f64),
    pub max_distractors: usize,
    pub noise_sigma: f64,
    pub layouts: Vec<Layout>,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            width: 320,
            height: 240,
            max_words: 2,
            scale_range: (2.0, 3.0),
            max_distractors: 2,
            noise_sigma: 3.0,
            layouts: vec![
                Layout::Straight0,
                Layout::Straight30,
                Layout::Straight60,
                Layout::Curved,
            ],
        }
    }
}

fn boxes_overlap(a: &[[f64; 2]], b: &[[f64; 2]], gap: f64) -> bool {
    let bb = |p: &[[f64; 2]]| {
        p.iter()
            .fold((f64::MAX, f64::MAX, f64::MIN, f64::MIN), |(x0, y0, x1, y1), q| {
                (x0.min(q[0]), y0.min(q[1]), x1.max(q[0]), y1.max(q[1]))
            })
    };
    let (ax0, ay0, ax1, ay1) = bb(a);
    let (bx0, by0, bx1, by1) = bb(b);
    ax0 - gap < bx1 && bx0 - gap < ax1 && ay0 - gap < by1 && by0 - gap < ay1
}

fn inside(poly: &[[f64; 2]], w: usize, h: usize, margin: f64) -> bool {
    poly.iter()
        .all(|p| p[0] >= margin && p[1] >= margin && p[0] <= w as f64 - 1.0 - margin && p[1] <= h as f64 - 1.0 - margin)
}

/// Draws a random scene. Words never overlap each other or distractors; the
/// same `seed` always produces the same scene.
pub fn random_scene(cfg: &SceneGenConfig, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let light = rng.random_bool(0.5);
    let base = if light {
        rng.random_range(150.0..210.0)
    } else {
        rng.random_range(40.0..90.0)
    };
    let background = (base, base + rng.random_range(-25.0..25.0));
    let mut occupied: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut words = Vec::new();
    let n_words = rng.random_range(1..=cfg.max_words.max(1));
    let layouts = if cfg.layouts.is_empty() {
        vec![Layout::Straight0]
    } else {
        cfg.layouts.clone()
    };
    for _ in 0..n_words {
        for _attempt in 0..60 {
            let text = WORDS.choose(&mut rng).unwrap().to_string();
            let scale = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1).round().max(1.0);
            let contrast = rng.random_range(70.0..130.0);
            let fg = if light { base - contrast } else { base + contrast };
            let layout = *layouts.choose(&mut rng).unwrap();
            let n = text.chars().count() as f64;
            let len = (n * ADVANCE as f64 - 1.0) * scale;
            let path = match layout {
                Layout::Curved => {
                    // Sag of 12-20 % of the word length; end slopes stay
                    // below about 40 degrees.
                    let sag = rng.random_range(0.12..0.2) * len;
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    TextPath::Quadratic {
                        x: rng.random_range(0.0..cfg.width as f64),
                        y: rng.random_range(0.0..cfg.height as f64),
                        angle_deg: rng.random_range(-20.0..20.0),
                        curvature: sign * sag / (len / 2.0).powi(2),
                        center: len / 2.0,
                    }
                }
                other => {
                    let mut angle = match other {
                        Layout::Straight0 => 0.0,
                        Layout::Straight30 => 30.0,
                        _ => 60.0,
                    };
                    if rng.random_bool(0.5) {
                        angle = -angle;
                    }
                    TextPath::Line {
                        x: rng.random_range(0.0..cfg.width as f64),
                        y: rng.random_range(0.0..cfg.height as f64),
                        angle_deg: angle,
                    }
                }
            };
            let word = WordSpec { text, scale, path, fg };
            let poly = word.polygon(2.0 * scale);
            if !inside(&poly, cfg.width, cfg.height, 2.0) {
                continue;
            }
            if occupied.iter().any(|o| boxes_overlap(o, &poly, 4.0 * scale)) {
                continue;
            }
            occupied.push(poly);
            words.push(word);
            break;
        }
    }
    let mut distractors = Vec::new();
    let n_d = rng.random_range(0..=cfg.max_distractors);
    for _ in 0..n_d {
        for _attempt in 0..40 {
            let kind = rng.random_range(0..3);
            let d = match kind {
                0 => {
                    let (w, h) = (rng.random_range(20.0..70.0), rng.random_range(20.0..70.0));
                    Distractor::Stripes {
                        x: rng.random_range(0.0..cfg.width as f64 - w),
                        y: rng.random_range(0.0..cfg.height as f64 - h),
                        w,
                        h,
                        period: rng.random_range(4.0..12.0),
                        angle_deg: rng.random_range(0.0..180.0),
                        contrast: rng.random_range(20.0..50.0),
                    }
                }
                1 => {
                    let r = rng.random_range(6.0..25.0);
                    Distractor::Disc {
                        cx: rng.random_range(r..cfg.width as f64 - r),
                        cy: rng.random_range(r..cfg.height as f64 - r),
                        r,
                        value: rng.random_range(0.0..255.0),
                    }
                }
                _ => {
                    let (w, h) = (rng.random_range(10.0..60.0), rng.random_range(10.0..60.0));
                    Distractor::Block {
                        x: rng.random_range(0.0..cfg.width as f64 - w),
                        y: rng.random_range(0.0..cfg.height as f64 - h),
                        w,
                        h,
                        value: rng.random_range(0.0..255.0),
                    }
                }
            };
            let poly = distractor_box(&d);
            if occupied.iter().any(|o| boxes_overlap(o, &poly, 6.0)) {
                continue;
            }
            occupied.push(poly);
            distractors.push(d);
            break;
        }
    }
    SceneSpec {
        width: cfg.width,
        height: cfg.height,
        background,
        noise_sigma: cfg.noise_sigma,
        words,
        distractors,
        seed,
    }
}

fn distractor_box(d: &Distractor) -> Vec<[f64; 2]> {
    let (x0, y0, x1, y1) = match *d {
        Distractor::Stripes { x, y, w, h, .. } | Distractor::Block { x, y, w, h, .. } => (x, y, x + w, y + h),
        Distractor::Disc { cx, cy, r, .. } => (cx - r, cy - r, cx + r, cy + r),
    };
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

impl Scene {
    /// Ground truth in the evaluation format, with character counts.
    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            blocks: self
                .regions
                .iter()
                .map(|r| GtBlock {
                    polygon: r.polygon.clone(),
                    char_count: Some(r.char_count),
                })
                .collect(),
        }
    }
}

/// How candidates from synthetic scenes are labelled for training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestParams {
    /// A candidate is text when at least this share of its mask lies in one
    /// ground-truth polygon.
    pub text_overlap: f64,
    /// A candidate is non-text when less than this share does; candidates in
    /// between are ambiguous and skipped.
    pub nontext_overlap: f64,
    /// Random background crops away from every word, per scene, added as
    /// non-text.
    pub background_crops: usize,
}

impl Default for HarvestParams {
    fn default() -> Self {
        HarvestParams {
            text_overlap: 0.5,
            nontext_overlap: 0.05,
            background_crops: 1,
        }
    }
}

/// Labelled feature sequences for HMM training.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub text: Vec<FeatureSequence>,
    pub nontext: Vec<FeatureSequence>,
}

fn harvest_scene(scene: &Scene, cfg: &PipelineConfig, hp: &HarvestParams) -> Result<TrainingSet> {
    let img = &scene.image;
    let (w, h) = (img.width(), img.height());
    let gts: Vec<BinaryMask> = scene.regions.iter().map(|r| r.mask(w, h)).collect();
    let mut set = TrainingSet::default();
    for patch in candidate_patches(img, cfg)? {
        let mask = patch.full_mask(w, h);
        let area = mask.count().max(1) as f64;
        let inside = gts
            .iter()
            .map(|g| g.intersection_count(&mask) as f64 / area)
            .fold(0.0, f64::max);
        let label = if inside >= hp.text_overlap {
            &mut set.text
        } else if inside < hp.nontext_overlap {
            &mut set.nontext
        } else {
            continue;
        };
        // Candidates too small for a single window carry no features.
        if let Ok(seq) = rectify(&patch).and_then(|strip| extract_sequence_with(&strip, &cfg.phog)) {
            label.push(seq);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scene.spec.seed ^ 0xba5e);
    let mut added = 0;
    for _attempt in 0..50 * hp.background_crops {
        if added == hp.background_crops {
            break;
        }
        let ch = rng.random_range(12..40usize).min(h);
        let cw = rng.random_range(40..160usize).min(w);
        let (r0, c0) = (rng.random_range(0..=h - ch), rng.random_range(0..=w - cw));
        let crop = BinaryMask::from_fn(w, h, |r, c| (r0..r0 + ch).contains(&r) && (c0..c0 + cw).contains(&c));
        if gts.iter().any(|g| g.intersection_count(&crop) > 0) {
            continue;
        }
        let strip = normalize_strip_height(&img.crop(r0, c0, r0 + ch - 1, c0 + cw - 1));
        set.nontext.push(extract_sequence_with(&strip, &cfg.phog)?);
        added += 1;
    }
    Ok(set)
}

/// Runs the unverified detector over the scenes drawn from `seeds` and
/// labels every candidate patch by its overlap with the ground truth.
/// Output order follows the seeds, so the set is reproducible.
pub fn harvest_training_set(
    gen: &SceneGenConfig,
    seeds: std::ops::Range<u64>,
    cfg: &PipelineConfig,
    hp: &HarvestParams,
) -> Result<TrainingSet> {
    let parts: Vec<TrainingSet> = seeds
        .into_par_iter()
        .map(|seed| harvest_scene(&random_scene(gen, seed).render(), cfg, hp))
        .collect::<Result<_>>()?;
    let mut set = TrainingSet::default();
    for p in parts {
        set.text.extend(p.text);
        set.nontext.extend(p.nontext);
    }
    Ok(set)
}
