//! End-to-end detection: Fourier-LoG filtering, MD map, clustering,
//! component skeletons, skeleton algebra, width estimation, thickening and
//! HMM verification.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqfilter::{fourier_log, FilterParams};
use crate::hmm::{ModelPair, ScoreMode, Topology, TrainParams};
use crate::patchgeom::{PolynomialCurve, SymmetryTest, TextPatch, WidthEstimate, STRIP_HEIGHT};
use crate::phog::{Normalization, PhogParams, ORIENTATION_BINS, PYRAMID_LEVELS, WINDOW_STRIDE, WINDOW_WIDTH};
use crate::raster::{connected_components, mask_outline, BinaryMask, GrayImage};
use crate::skeleton::{join_nearby, prune_fragments, split_long_branches, thin, PruneParams, SkeletonGraph};
use crate::textmap::{
    kmeans_2, md_map_with_window, md_window_length, morph_open_with, ClusterResult, MdMap, StructuringElement,
    MD_WINDOW_FLOOR,
};
use crate::verify::{resolve_scored, score_patch, VerifyParams};

/// Every tunable of the detector, with the published values as defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub filter: FilterParams,
    pub md_window_floor: usize,
    pub opening: StructuringElement,
    pub prune: PruneParams,
    pub symmetry: SymmetryTest,
    pub phog: PhogParams,
    pub verify: VerifyParams,
    pub train: TrainParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            filter: FilterParams::default(),
            md_window_floor: MD_WINDOW_FLOOR,
            opening: StructuringElement::default(),
            prune: PruneParams::default(),
            symmetry: SymmetryTest::default(),
            phog: PhogParams::default(),
            verify: VerifyParams::default(),
            train: TrainParams::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn fixed(key: &str, v: &str, expected: f64) -> Result<()> {
    let got: f64 = parse_num(key, v)?;
    if (got - expected).abs() > 1e-12 {
        return Err(Error::Config(format!("{key} is fixed at {expected}; got {got}")));
    }
    Ok(())
}

impl PipelineConfig {
    /// Names accepted by [`PipelineConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "lowpass_radius",
        "log_sigma",
        "md_window_floor",
        "open_radius",
        "branch_ratio",
        "fragment_ratio",
        "fragment_floor",
        "join_ratio",
        "symmetry_test",
        "window_height",
        "window_width",
        "window_overlap",
        "pyramid_levels",
        "orientation_bins",
        "phog_normalization",
        "states",
        "mixtures",
        "topology",
        "max_iterations",
        "em_tolerance",
        "variance_floor_ratio",
        "t_v",
        "score_mode",
        "seed",
    ];

    /// Sets one parameter by name. Window geometry, pyramid depth and bin
    /// count are fixed by the feature layout and only accept their defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "lowpass_radius" => self.filter.lowpass_radius = parse_num(key, v)?,
            "log_sigma" => self.filter.log_sigma = parse_num(key, v)?,
            "md_window_floor" => self.md_window_floor = parse_num(key, v)?,
            "open_radius" => self.opening.radius = parse_num(key, v)?,
            "branch_ratio" => self.prune.branch_ratio = parse_num(key, v)?,
            "fragment_ratio" => self.prune.fragment_ratio = parse_num(key, v)?,
            "fragment_floor" => self.prune.fragment_floor = parse_num(key, v)?,
            "join_ratio" => self.prune.join_ratio = parse_num(key, v)?,
            "symmetry_test" => {
                self.symmetry = match v {
                    "verbatim" => SymmetryTest::Verbatim,
                    "relative" => SymmetryTest::Relative,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected verbatim or relative, got {v:?}"
                        )))
                    }
                }
            }
            "window_height" => fixed(key, v, STRIP_HEIGHT as f64)?,
            "window_width" => fixed(key, v, WINDOW_WIDTH as f64)?,
            "window_overlap" => fixed(key, v, 1.0 - WINDOW_STRIDE as f64 / WINDOW_WIDTH as f64)?,
            "pyramid_levels" => fixed(key, v, (PYRAMID_LEVELS - 1) as f64)?,
            "orientation_bins" => fixed(key, v, ORIENTATION_BINS as f64)?,
            "phog_normalization" => {
                self.phog.normalization = match v {
                    "per_level" => Normalization::PerLevel,
                    "global" => Normalization::Global,
                    _ => return Err(Error::Config(format!("{key}: expected per_level or global, got {v:?}"))),
                }
            }
            "states" => self.train.states = parse_num(key, v)?,
            "mixtures" => self.train.mixtures = parse_num(key, v)?,
            "topology" => {
                self.train.topology = match v {
                    "left_to_right" => Topology::LeftToRight,
                    "ergodic" => Topology::Ergodic,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected left_to_right or ergodic, got {v:?}"
                        )))
                    }
                }
            }
            "max_iterations" => self.train.max_iterations = parse_num(key, v)?,
            "em_tolerance" => self.train.tolerance = parse_num(key, v)?,
            "variance_floor_ratio" => self.train.variance_floor_ratio = parse_num(key, v)?,
            "t_v" => self.verify.t_v = parse_num(key, v)?,
            "score_mode" => {
                self.verify.score_mode = match v {
                    "length_normalized" => ScoreMode::LengthNormalized,
                    "raw" => ScoreMode::Raw,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected length_normalized or raw, got {v:?}"
                        )))
                    }
                }
            }
            "seed" => self.train.seed = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown parameter {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a flat JSON object with the same keys as the key=value form.
    pub fn from_json(text: &str) -> Result<PipelineConfig> {
        let map: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        let mut cfg = PipelineConfig::default();
        for (k, v) in map {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                other => return Err(Error::Config(format!("{k}: unsupported value {other}"))),
            };
            cfg.set(&k, &s)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads JSON when the file starts with `{`, key=value otherwise.
    pub fn load(path: impl AsRef<Path>) -> Result<PipelineConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text)
        } else {
            Self::from_key_values(&text)
        }
    }

    /// The configuration in key=value form, every key present.
    pub fn to_key_values(&self) -> String {
        let sym = match self.symmetry {
            SymmetryTest::Verbatim => "verbatim",
            SymmetryTest::Relative => "relative",
        };
        let norm = match self.phog.normalization {
            Normalization::PerLevel => "per_level",
            Normalization::Global => "global",
        };
        let topo = match self.train.topology {
            Topology::LeftToRight => "left_to_right",
            Topology::Ergodic => "ergodic",
        };
        let mode = match self.verify.score_mode {
            ScoreMode::LengthNormalized => "length_normalized",
            ScoreMode::Raw => "raw",
        };
        let values: Vec<String> = vec![
            self.filter.lowpass_radius.to_string(),
            self.filter.log_sigma.to_string(),
            self.md_window_floor.to_string(),
            self.opening.radius.to_string(),
            self.prune.branch_ratio.to_string(),
            self.prune.fragment_ratio.to_string(),
            self.prune.fragment_floor.to_string(),
            self.prune.join_ratio.to_string(),
            sym.into(),
            STRIP_HEIGHT.to_string(),
            WINDOW_WIDTH.to_string(),
            (1.0 - WINDOW_STRIDE as f64 / WINDOW_WIDTH as f64).to_string(),
            (PYRAMID_LEVELS - 1).to_string(),
            ORIENTATION_BINS.to_string(),
            norm.into(),
            self.train.states.to_string(),
            self.train.mixtures.to_string(),
            topo.into(),
            self.train.max_iterations.to_string(),
            self.train.tolerance.to_string(),
            self.train.variance_floor_ratio.to_string(),
            self.verify.t_v.to_string(),
            mode.into(),
            self.train.seed.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.prune.validate()?;
        self.verify.validate()?;
        self.train.validate()?;
        if self.md_window_floor == 0 {
            return Err(Error::Config("md_window_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Intermediate products up to the pruned skeletons.
#[derive(Debug, Clone)]
pub struct Stages {
    pub filtered: GrayImage,
    pub md: MdMap,
    pub cluster: ClusterResult,
    pub opened: BinaryMask,
    /// One skeleton per connected component.
    pub thinned: Vec<SkeletonGraph>,
    /// After long-branch splitting and fragment pruning, row-major order.
    pub skeletons: Vec<SkeletonGraph>,
}

/// Runs the segmentation half of the detector.
pub fn segment(img: &GrayImage, cfg: &PipelineConfig) -> Result<Stages> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Empty("image"));
    }
    let filtered = fourier_log(img, &cfg.filter);
    let n = md_window_length(img.width(), img.height(), cfg.md_window_floor);
    let md = md_map_with_window(&filtered, n);
    let cluster = kmeans_2(&md);
    let opened = morph_open_with(&cluster.mask, cfg.opening);
    let thinned: Vec<SkeletonGraph> = connected_components(&opened).iter().map(thin).collect();
    let split: Vec<SkeletonGraph> = thinned
        .iter()
        .flat_map(|s| split_long_branches(s, &cfg.prune))
        .collect();
    let mut skeletons = prune_fragments(split, &cfg.prune);
    skeletons.sort_by_key(SkeletonGraph::start);
    Ok(Stages {
        filtered,
        md,
        cluster,
        opened,
        thinned,
        skeletons,
    })
}

/// A text region reported by the detector.
#[derive(Debug, Clone)]
pub struct DetectedRegion {
    /// Full-image mask of the thickened band.
    pub mask: BinaryMask,
    pub skeleton: SkeletonGraph,
    pub score: f64,
    pub width: WidthEstimate,
    pub curve: PolynomialCurve,
}

impl DetectedRegion {
    /// Boundary polygon of the mask, `[x, y]` on pixel corners.
    pub fn polygon(&self) -> Vec<[f64; 2]> {
        mask_outline(&self.mask).unwrap_or_default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Skeletons after splitting and pruning.
    pub candidates: usize,
    /// Final skeletons scored below the threshold.
    pub rejected: usize,
    /// Ambiguous junctions settled by score.
    pub junction_resolutions: usize,
    /// Candidates discarded at junctions.
    pub junction_discards: usize,
    /// Per-patch problems that did not stop the image.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub width: usize,
    pub height: usize,
    pub regions: Vec<DetectedRegion>,
    pub diagnostics: Diagnostics,
}

/// Scores skeletons; `None` scores everything 1.
struct Scorer<'a> {
    img: &'a GrayImage,
    models: Option<&'a ModelPair>,
    cfg: &'a PipelineConfig,
}

impl Scorer<'_> {
    fn patch(&self, sk: &SkeletonGraph) -> Result<TextPatch> {
        TextPatch::build(self.img, sk, self.cfg.symmetry)
    }

    fn score(&self, patch: &TextPatch) -> Result<f64> {
        match self.models {
            None => Ok(1.0),
            Some(m) => score_patch(patch, m, &self.cfg.phog, self.cfg.verify.score_mode),
        }
    }

    fn score_skeleton(&self, sk: &SkeletonGraph) -> f64 {
        self.patch(sk).and_then(|p| self.score(&p)).unwrap_or(0.0)
    }
}

/// Endpoint joining in row-major order of skeleton start pixels. Unique
/// candidates are merged directly; ambiguous endpoints are resolved by score
/// with the top-two rule, and candidates scoring below the threshold are
/// dropped for good.
fn join_all(skeletons: Vec<SkeletonGraph>, scorer: &Scorer, diag: &mut Diagnostics) -> Vec<SkeletonGraph> {
    let t_v = scorer.cfg.verify.t_v;
    let mut pool: Vec<Option<SkeletonGraph>> = skeletons.into_iter().map(Some).collect();
    let mut out = Vec::new();
    for i in 0..pool.len() {
        let Some(base) = pool[i].take() else { continue };
        let live: Vec<usize> = (0..pool.len()).filter(|&j| pool[j].is_some()).collect();
        let others: Vec<SkeletonGraph> = live.iter().map(|&j| pool[j].clone().unwrap()).collect();
        let outcome = join_nearby(&base, &others, &scorer.cfg.prune);
        for &m in &outcome.merged {
            pool[live[m]] = None;
        }
        let mut current = Some(outcome.skeleton);
        for (_, cands) in outcome.ambiguous {
            let Some(cur) = current.take() else { break };
            let idx: Vec<usize> = cands
                .iter()
                .map(|c| live[c.pool_index])
                .filter(|&j| pool[j].is_some())
                .collect();
            if idx.is_empty() {
                current = Some(cur);
                continue;
            }
            diag.junction_resolutions += 1;
            let mut scored = vec![(cur.clone(), scorer.score_skeleton(&cur))];
            for &j in &idx {
                let sk = pool[j].clone().unwrap();
                let s = scorer.score_skeleton(&sk);
                scored.push((sk, s));
            }
            let resolved = resolve_scored(&scored, t_v);
            for (k, &j) in idx.iter().enumerate() {
                let (sk, s) = &scored[k + 1];
                let used = resolved.as_ref().is_some_and(|r| r.contains(sk.start()));
                if used || *s < t_v {
                    pool[j] = None;
                    if !used {
                        diag.junction_discards += 1;
                    }
                }
            }
            current = resolved;
        }
        if let Some(sk) = current {
            out.push(sk);
        }
    }
    out
}

fn run(img: &GrayImage, models: Option<&ModelPair>, cfg: &PipelineConfig) -> Result<DetectionResult> {
    cfg.validate()?;
    let stages = segment(img, cfg)?;
    let mut diag = Diagnostics {
        candidates: stages.skeletons.len(),
        ..Diagnostics::default()
    };
    let scorer = Scorer { img, models, cfg };
    let joined = join_all(stages.skeletons, &scorer, &mut diag);
    let mut regions = Vec::new();
    for sk in joined {
        let patch = match scorer.patch(&sk) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("patch at {:?} failed: {e}", sk.start());
                diag.failures.push(format!("skeleton at {:?}: {e}", sk.start()));
                continue;
            }
        };
        let score = match scorer.score(&patch) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("scoring skeleton at {:?} failed: {e}", sk.start());
                diag.failures.push(format!("skeleton at {:?}: {e}", sk.start()));
                0.0
            }
        };
        if models.is_some() && !cfg.verify.accepts(score) {
            diag.rejected += 1;
            continue;
        }
        regions.push(DetectedRegion {
            mask: patch.full_mask(img.width(), img.height()),
            skeleton: sk,
            score,
            width: patch.width,
            curve: patch.curve,
        });
    }
    Ok(DetectionResult {
        width: img.width(),
        height: img.height(),
        regions,
        diagnostics: diag,
    })
}

/// Full detector with HMM verification.
pub fn detect(img: &GrayImage, models: &ModelPair, cfg: &PipelineConfig) -> Result<DetectionResult> {
    run(img, Some(models), cfg)
}

/// The detector with verification bypassed: every candidate is accepted with
/// score 1 and ambiguous junctions join their two longest candidates.
pub fn detect_without_verification(img: &GrayImage, cfg: &PipelineConfig) -> Result<DetectionResult> {
    run(img, None, cfg)
}

/// Unverified candidate patches of an image, for harvesting training data.
pub fn candidate_patches(img: &GrayImage, cfg: &PipelineConfig) -> Result<Vec<TextPatch>> {
    let res = detect_without_verification(img, cfg)?;
    res.regions
        .iter()
        .map(|r| TextPatch::build_with_width(img, &r.skeleton, r.width.clone()))
        .collect()
}
