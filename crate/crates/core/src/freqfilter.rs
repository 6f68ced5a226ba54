//! Frequency-domain filtering: 2-D DFT, ideal low-pass and Laplacian of
//! Gaussian applied as multiplicative masks.
//!
//! All filtering is circular (periodic boundaries) because it happens on the
//! DFT grid. Frequencies are expressed on the centred grid: bin `k` of an
//! axis of length `n` maps to `k / n` cycles per pixel for `k <= n / 2` and to
//! `(k - n) / n` otherwise.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::raster::GrayImage;

/// 2-D spectrum, row-major, DC at index `(0, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    width: usize,
    height: usize,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.coeffs[row * self.width + col]
    }

    /// Applies a real frequency response `h(fy, fx)` (cycles per pixel).
    fn map_response(&self, h: impl Fn(f64, f64) -> f64) -> Spectrum {
        let mut coeffs = self.coeffs.clone();
        for r in 0..self.height {
            let fy = centered_frequency(r, self.height);
            for c in 0..self.width {
                let fx = centered_frequency(c, self.width);
                coeffs[r * self.width + c] *= h(fy, fx);
            }
        }
        Spectrum {
            width: self.width,
            height: self.height,
            coeffs,
        }
    }

    /// Log-magnitude view with DC shifted to the centre, for debug dumps.
    pub fn log_magnitude_image(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        GrayImage::from_fn(w, h, |r, c| {
            let sr = (r + h - h / 2) % h;
            let sc = (c + w - w / 2) % w;
            (1.0 + self.get(sr, sc).norm()).ln()
        })
        .normalized()
    }
}

/// Signed frequency in cycles per pixel of DFT bin `k` on an axis of length `n`.
#[inline]
pub fn centered_frequency(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64 / n as f64
    } else {
        (k as f64 - n as f64) / n as f64
    }
}

/// Parameters of the Fourier-LoG stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Ideal low-pass cutoff as a fraction of the largest radial frequency on
    /// the sampling grid, in `(0, 1]`. `1.0` passes every bin.
    pub lowpass_radius: f64,
    /// Gaussian scale of the LoG mask in pixels.
    pub log_sigma: f64,
    /// How the image is extended beyond its borders.
    pub boundary: Boundary,
}

/// Image extension assumed by the frequency-domain filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Plain DFT: the image wraps around, so unequal opposite borders
    /// respond like an edge.
    Periodic,
    /// The image is mirrored to twice its size before transforming, which
    /// removes the wrap-around seams.
    #[default]
    Mirror,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            lowpass_radius: 0.5,
            log_sigma: 2.0,
            boundary: Boundary::Mirror,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.lowpass_radius > 0.0 && self.lowpass_radius <= 1.0) {
            return Err(crate::Error::Config(format!(
                "lowpass_radius {} outside (0, 1]",
                self.lowpass_radius
            )));
        }
        if self.log_sigma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(crate::Error::Config(format!(
                "log_sigma {} must be positive",
                self.log_sigma
            )));
        }
        Ok(())
    }
}

fn transform_2d(width: usize, height: usize, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    row_fft.process(data);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_fft.process(&mut column);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
    if inverse {
        let scale = 1.0 / (width * height) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Forward 2-D DFT of an image of any size.
pub fn fft2(img: &GrayImage) -> Spectrum {
    let (width, height) = (img.width(), img.height());
    let mut coeffs: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    transform_2d(width, height, &mut coeffs, false);
    Spectrum { width, height, coeffs }
}

/// Inverse 2-D DFT, normalized so that `ifft2(fft2(x)) == x`.
pub fn ifft2(spec: &Spectrum) -> Vec<Complex64> {
    let mut data = spec.coeffs.clone();
    transform_2d(spec.width, spec.height, &mut data, true);
    data
}

/// Real part of the inverse transform as an image.
pub fn ifft2_real(spec: &Spectrum) -> GrayImage {
    let data = ifft2(spec).into_iter().map(|z| z.re).collect();
    GrayImage::from_vec(spec.width, spec.height, data).expect("spectrum dimensions are valid")
}

/// Zeroes every coefficient whose radial frequency exceeds
/// `lowpass_radius` times the grid's largest radial frequency.
pub fn ideal_lowpass(spec: &Spectrum, params: &FilterParams) -> Spectrum {
    let max_radial = (max_abs_frequency(spec.height).powi(2) + max_abs_frequency(spec.width).powi(2))
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let cutoff = params.lowpass_radius * max_radial;
    spec.map_response(|fy, fx| {
        if (fy * fy + fx * fx).sqrt() > cutoff * (1.0 + 1e-12) {
            0.0
        } else {
            1.0
        }
    })
}

fn max_abs_frequency(n: usize) -> f64 {
    (n / 2) as f64 / n as f64
}

/// Frequency response of the continuous LoG at angular frequency `(v, u)`:
/// `-(u^2 + v^2) exp(-(u^2 + v^2) sigma^2 / 2)`.
#[inline]
pub fn log_response(fy: f64, fx: f64, sigma: f64) -> f64 {
    let w2 = (2.0 * PI).powi(2) * (fx * fx + fy * fy);
    -w2 * (-w2 * sigma * sigma / 2.0).exp()
}

/// Multiplies by the LoG response and returns the real part of the inverse.
pub fn log_filter(spec: &Spectrum, params: &FilterParams) -> GrayImage {
    let sigma = params.log_sigma;
    ifft2_real(&spec.map_response(|fy, fx| log_response(fy, fx, sigma)))
}

/// Plain Laplacian `-(u^2 + v^2)` in the frequency domain. Reference mode
/// only; the detector always uses [`log_filter`].
pub fn laplacian_filter(spec: &Spectrum) -> GrayImage {
    ifft2_real(&spec.map_response(|fy, fx| -(2.0 * PI).powi(2) * (fx * fx + fy * fy)))
}

/// Signed Fourier-LoG response: low-pass, LoG, inverse transform.
pub fn fourier_log_raw(img: &GrayImage, params: &FilterParams) -> GrayImage {
    match params.boundary {
        Boundary::Periodic => log_filter(&ideal_lowpass(&fft2(img), params), params),
        Boundary::Mirror => {
            let (w, h) = (img.width(), img.height());
            let mirrored = GrayImage::from_fn(2 * w, 2 * h, |r, c| {
                let rr = if r < h { r } else { 2 * h - 1 - r };
                let cc = if c < w { c } else { 2 * w - 1 - c };
                img.get(rr, cc)
            });
            let full = log_filter(&ideal_lowpass(&fft2(&mirrored), params), params);
            full.crop(0, 0, h - 1, w - 1)
        }
    }
}

/// Fourier-LoG response magnitude rescaled to `[0, 255]`.
///
/// Text produces positive and negative peaks alike, so the magnitude is kept
/// before min-max normalization. A flat response maps to all zeros.
pub fn fourier_log(img: &GrayImage, params: &FilterParams) -> GrayImage {
    let mut raw = fourier_log_raw(img, params);
    // Residual round-off on flat inputs must not be stretched to full range.
    let scale = img.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for v in raw.data_mut() {
        *v = v.abs();
        if *v < 1e-9 * scale {
            *v = 0.0;
        }
    }
    raw.normalized()
}
