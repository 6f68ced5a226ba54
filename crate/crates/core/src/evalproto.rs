//! Block-level evaluation: truly detected, falsely detected and missing-data
//! blocks, and recall / precision / F-measure.

use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rasterize_polygon, BinaryMask};

/// One annotated text block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBlock {
    /// Vertices `[x, y]` in pixel coordinates.
    pub polygon: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_count: Option<usize>,
}

/// Ground truth of one image.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroundTruth {
    pub blocks: Vec<GtBlock>,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.blocks.iter().enumerate() {
            if b.polygon.len() < 3 {
                return Err(Error::Format(format!(
                    "ground-truth block {i} has fewer than 3 vertices"
                )));
            }
        }
        Ok(())
    }

    /// Reads the JSON form: a list of `{polygon: [[x, y], ...], char_count?}`.
    pub fn load(path: impl AsRef<Path>) -> Result<GroundTruth> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let gt: GroundTruth =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        gt.validate()?;
        Ok(gt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Fraction of a block's area a detection must cover to count as
    /// containing it.
    pub min_overlap: f64,
    /// A matched block missing more than this fraction of its characters
    /// (or area) is a missing-data block.
    pub max_missed: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            min_overlap: 0.10,
            max_missed: 0.20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tdb: usize,
    pub fdb: usize,
    pub mdb: usize,
    pub atb: usize,
}

impl Add for EvalCounts {
    type Output = EvalCounts;

    fn add(self, o: EvalCounts) -> EvalCounts {
        EvalCounts {
            tdb: self.tdb + o.tdb,
            fdb: self.fdb + o.fdb,
            mdb: self.mdb + o.mdb,
            atb: self.atb + o.atb,
        }
    }
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, o: EvalCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for EvalCounts {
    fn sum<I: Iterator<Item = EvalCounts>>(iter: I) -> EvalCounts {
        iter.fold(EvalCounts::default(), Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall: f64,
    pub precision: f64,
    pub f_measure: f64,
    pub counts: EvalCounts,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let c = &self.counts;
        format!(
            "{:<10}{:>8}\n{:<10}{:>8}\n{:<10}{:>8}\n{:<10}{:>8}\n{:<10}{:>8.4}\n{:<10}{:>8.4}\n{:<10}{:>8.4}\n",
            "ATB",
            c.atb,
            "TDB",
            c.tdb,
            "FDB",
            c.fdb,
            "MDB",
            c.mdb,
            "Recall",
            self.recall,
            "Precision",
            self.precision,
            "F",
            self.f_measure
        )
    }
}

/// Classifies every detection as truly or falsely detected, and flags
/// matched blocks whose combined coverage misses too much.
///
/// A detection is a TDB when it covers at least `min_overlap` of some block's
/// area, and an FDB otherwise. A block hit by one or more TDBs is an MDB when
/// the union of those detections leaves more than `max_missed` of it
/// uncovered; with a character count the uncovered share is converted to a
/// whole number of characters first.
pub fn match_blocks(detections: &[BinaryMask], gt: &GroundTruth, p: &MatchParams) -> Result<EvalCounts> {
    let Some(first) = detections.first() else {
        return Ok(EvalCounts {
            atb: gt.blocks.len(),
            ..EvalCounts::default()
        });
    };
    let (w, h) = (first.width(), first.height());
    if let Some(d) = detections.iter().find(|d| d.width() != w || d.height() != h) {
        return Err(Error::Dimension(format!(
            "detection masks differ in size: {}x{} vs {w}x{h}",
            d.width(),
            d.height()
        )));
    }
    let gt_masks: Vec<BinaryMask> = gt.blocks.iter().map(|b| rasterize_polygon(&b.polygon, w, h)).collect();
    match_masks(detections, &gt_masks, gt, p)
}

/// [`match_blocks`] with the ground-truth blocks already rasterised.
pub fn match_masks(
    detections: &[BinaryMask],
    gt_masks: &[BinaryMask],
    gt: &GroundTruth,
    p: &MatchParams,
) -> Result<EvalCounts> {
    let mut counts = EvalCounts {
        atb: gt.blocks.len(),
        ..EvalCounts::default()
    };
    let mut covering: Vec<Vec<usize>> = vec![Vec::new(); gt_masks.len()];
    for (di, d) in detections.iter().enumerate() {
        let mut is_true = false;
        for (gi, g) in gt_masks.iter().enumerate() {
            if g.width() != d.width() || g.height() != d.height() {
                return Err(Error::Dimension("detection and ground truth differ in size".into()));
            }
            let area = g.count();
            if area > 0 && d.intersection_count(g) as f64 >= p.min_overlap * area as f64 {
                is_true = true;
                covering[gi].push(di);
            }
        }
        if is_true {
            counts.tdb += 1;
        } else {
            counts.fdb += 1;
        }
    }
    for (gi, g) in gt_masks.iter().enumerate() {
        if covering[gi].is_empty() {
            continue;
        }
        let area = g.count();
        let mut union = BinaryMask::new(g.width(), g.height());
        for &di in &covering[gi] {
            union.union_with(&detections[di]);
        }
        let missed = 1.0 - union.intersection_count(g) as f64 / area as f64;
        let is_mdb = match gt.blocks[gi].char_count {
            Some(n) if n > 0 => (missed * n as f64).round() > p.max_missed * n as f64,
            _ => missed > p.max_missed,
        };
        if is_mdb {
            counts.mdb += 1;
        }
    }
    Ok(counts)
}

/// Recall `TDB / ATB` (capped at 1 when several detections share a block),
/// precision `TDB / (TDB + FDB)`, F their harmonic mean; 0/0 is 0.
pub fn metrics(c: EvalCounts) -> EvalReport {
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let recall = ratio(c.tdb.min(c.atb) as f64, c.atb as f64);
    let precision = ratio(c.tdb as f64, (c.tdb + c.fdb) as f64);
    let f_measure = ratio(2.0 * precision * recall, precision + recall);
    EvalReport {
        recall,
        precision,
        f_measure,
        counts: c,
    }
}
