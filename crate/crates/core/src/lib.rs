//! Detection of multi-oriented and curved text in natural scene images.
//!
//! The detector runs in two halves. Segmentation filters the image with a
//! Laplacian of Gaussian in the frequency domain, turns the response into a
//! maximum-difference map, splits it into text and background with 2-means
//! and cleans the mask with an opening. Each connected component is then
//! thinned to a skeleton, long side branches are split off, small fragments
//! dropped and nearby segments joined. Every surviving skeleton is thickened
//! back to its estimated stroke band, straightened along a fitted quartic,
//! described by a sequence of PHOG windows and verified by a pair of GMM-HMMs
//! (text vs. non-text).
//!
//! ```no_run
//! use curvetext::{detect, load_gray, ModelPair, PipelineConfig};
//!
//! let img = load_gray("sign.png")?;
//! let models = ModelPair::load_dir("models")?;
//! let result = detect(&img, &models, &PipelineConfig::default())?;
//! for region in &result.regions {
//!     println!("score {:.2}, width {:.1}", region.score, region.width.w);
//! }
//! # Ok::<(), curvetext::Error>(())
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evalproto;
pub mod freqfilter;
pub mod hmm;
pub mod patchgeom;
pub mod phog;
pub mod pipeline;
pub mod raster;
pub mod skeleton;
pub mod synth;
pub mod textmap;
pub mod verify;

pub use error::{Error, Result};
pub use evalproto::{match_blocks, metrics, EvalCounts, EvalReport, GroundTruth, GtBlock, MatchParams};
pub use freqfilter::{fourier_log, FilterParams};
pub use hmm::{train, train_pair, HmmModel, ModelPair, ScoreMode, TrainParams, TrainReport};
pub use patchgeom::{rectify, TextPatch, WidthEstimate};
pub use phog::{extract_sequence, FeatureSequence, PhogParams};
pub use pipeline::{detect, detect_without_verification, segment, DetectedRegion, DetectionResult, PipelineConfig};
pub use raster::{load_gray, save_png, BinaryMask, GrayImage};
pub use skeleton::{PruneParams, SkeletonGraph};
pub use verify::VerifyParams;
