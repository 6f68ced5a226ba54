//! On-disk form of detection results.

use curvetext::patchgeom::{PolynomialCurve, WidthSource};
use curvetext::pipeline::{DetectionResult, Diagnostics};
use serde::{Deserialize, Serialize};

/// One detected region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionRecord {
    /// Boundary of the region mask, `[x, y]` on pixel corners.
    pub polygon: Vec<[f64; 2]>,
    /// Text posterior from verification.
    pub score: f64,
    /// Band width `W` used for thickening.
    pub width: f64,
    pub width_source: WidthSource,
    /// Centre-line curve; `curve.poly.coefficients` are `a_0 .. a_4`.
    pub curve: PolynomialCurve,
}

/// Everything detected in one image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub regions: Vec<RegionRecord>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl ImageRecord {
    pub fn new(image: String, result: &DetectionResult) -> Self {
        ImageRecord {
            image,
            width: result.width,
            height: result.height,
            regions: result
                .regions
                .iter()
                .map(|r| RegionRecord {
                    polygon: r.polygon(),
                    score: r.score,
                    width: r.width.w,
                    width_source: r.width.source,
                    curve: r.curve.clone(),
                })
                .collect(),
            diagnostics: result.diagnostics.clone(),
        }
    }
}
