//! Candidate verification: rectify, describe and score a patch against the
//! text / non-text models, and pick the best continuation at ambiguous
//! skeleton junctions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{ModelPair, ScoreMode};
use crate::patchgeom::{rectify, SymmetryTest, TextPatch};
use crate::phog::{extract_sequence_with, PhogParams};
use crate::raster::{GrayImage, Pixel};
use crate::skeleton::{merge_skeletons, SkeletonGraph};

/// Acceptance threshold on the text posterior.
pub const DEFAULT_T_V: f64 = 0.44;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyParams {
    pub t_v: f64,
    pub score_mode: ScoreMode,
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            t_v: DEFAULT_T_V,
            score_mode: ScoreMode::LengthNormalized,
        }
    }
}

impl VerifyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_v > 0.0 && self.t_v < 1.0) {
            return Err(Error::Config(format!("t_v = {} must lie in (0, 1)", self.t_v)));
        }
        Ok(())
    }

    pub fn accepts(&self, score: f64) -> bool {
        score >= self.t_v
    }
}

/// A scored candidate.
#[derive(Debug, Clone)]
pub struct VerifiedRegion {
    pub patch: TextPatch,
    pub score: f64,
    pub accepted: bool,
    /// Why the patch could not be scored, when it could not.
    pub reason: Option<String>,
}

/// Posterior `P(text | patch)`, or the reason the patch cannot be scored.
pub fn score_patch(patch: &TextPatch, models: &ModelPair, phog: &PhogParams, mode: ScoreMode) -> Result<f64> {
    let strip = rectify(patch)?;
    let seq = extract_sequence_with(&strip, phog)?;
    Ok(models.classify(&seq, mode)?.score)
}

/// Scores a patch and applies the threshold. Patches that cannot be
/// rectified or are narrower than one window get score 0.
pub fn verify_patch(patch: TextPatch, models: &ModelPair, phog: &PhogParams, params: &VerifyParams) -> VerifiedRegion {
    match score_patch(&patch, models, phog, params.score_mode) {
        Ok(score) => VerifiedRegion {
            accepted: params.accepts(score),
            patch,
            score,
            reason: None,
        },
        Err(e) => VerifiedRegion {
            patch,
            score: 0.0,
            accepted: false,
            reason: Some(e.to_string()),
        },
    }
}

/// Closest endpoint pair between two skeletons (ties: row-major).
fn closest_endpoints(a: &SkeletonGraph, b: &SkeletonGraph) -> (Pixel, Pixel) {
    let d2 = |p: Pixel, q: Pixel| p.0.abs_diff(q.0).pow(2) + p.1.abs_diff(q.1).pow(2);
    let (ea, eb) = (a.endpoints(), b.endpoints());
    let ea = if ea.is_empty() { vec![a.start()] } else { ea };
    let eb = if eb.is_empty() { vec![b.start()] } else { eb };
    ea.iter()
        .flat_map(|&p| eb.iter().map(move |&q| (p, q)))
        .min_by_key(|&(p, q)| (d2(p, q), p, q))
        .unwrap()
}

/// The selection rule on already scored skeletons: drop scores below `t_v`;
/// join the two best (ties by longer skeleton, then row-major start) with a
/// straight segment between their closest endpoints; a single survivor is
/// returned alone; none gives `None`.
pub fn resolve_scored(scored: &[(SkeletonGraph, f64)], t_v: f64) -> Option<SkeletonGraph> {
    let mut alive: Vec<&(SkeletonGraph, f64)> = scored.iter().filter(|(_, s)| *s >= t_v).collect();
    alive.sort_by(|(a, sa), (b, sb)| {
        sb.total_cmp(sa)
            .then(b.length().cmp(&a.length()))
            .then(a.start().cmp(&b.start()))
    });
    match alive.as_slice() {
        [] => None,
        [(only, _)] => Some(only.clone()),
        [(a, _), (b, _), ..] => {
            let (pa, pb) = closest_endpoints(a, b);
            Some(merge_skeletons(a, pa, b, pb))
        }
    }
}

/// Resolves an ambiguous junction: `base` and each candidate are thickened,
/// extracted and scored on their own, then [`resolve_scored`] picks the
/// result.
pub fn resolve_junction(
    candidates: &[SkeletonGraph],
    base: &SkeletonGraph,
    img: &GrayImage,
    models: &ModelPair,
    phog: &PhogParams,
    symmetry: SymmetryTest,
    params: &VerifyParams,
) -> Option<SkeletonGraph> {
    let scored: Vec<(SkeletonGraph, f64)> = std::iter::once(base)
        .chain(candidates)
        .map(|sk| {
            let score = TextPatch::build(img, sk, symmetry)
                .and_then(|p| score_patch(&p, models, phog, params.score_mode))
                .unwrap_or(0.0);
            (sk.clone(), score)
        })
        .collect();
    resolve_scored(&scored, params.t_v)
}
