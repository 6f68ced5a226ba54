//! Shared fixtures for the stage benchmarks.

use curvetext::phog::extract_sequence_any_height;
use curvetext::synth::{random_scene, render_word_strip, SceneGenConfig};
use curvetext::{train_pair, FeatureSequence, GrayImage, ModelPair, TrainParams};

/// A rendered random scene of the given size.
pub fn scene(width: usize, height: usize, seed: u64) -> GrayImage {
    let cfg = SceneGenConfig {
        width,
        height,
        ..SceneGenConfig::default()
    };
    random_scene(&cfg, seed).render().image
}

/// Feature sequences of a few rendered words.
pub fn word_sequences() -> Vec<FeatureSequence> {
    ["CURVED", "SCENE", "TEXT", "DETECTION", "HOTEL", "MARKET"]
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let (fg, bg) = if i % 2 == 0 { (30.0, 220.0) } else { (230.0, 40.0) };
            extract_sequence_any_height(&render_word_strip(w, 40, fg, bg)).expect("word strip features")
        })
        .collect()
}

/// Feature sequences of smooth, textured non-text strips.
pub fn clutter_sequences() -> Vec<FeatureSequence> {
    (0..6)
        .map(|i| {
            let period = 5.0 + 4.0 * i as f64;
            let strip = GrayImage::from_fn(160, 40, |r, c| {
                128.0 + 70.0 * ((c as f64 + 0.3 * r as f64) / period).sin()
            });
            extract_sequence_any_height(&strip).expect("clutter features")
        })
        .collect()
}

/// A small but fully shaped model pair (6 states, 4 mixtures).
pub fn models() -> ModelPair {
    let p = TrainParams {
        mixtures: 4,
        max_iterations: 10,
        ..TrainParams::default()
    };
    train_pair(&word_sequences(), &clutter_sequences(), &p)
        .expect("training")
        .0
}
