//! Segments a few synthetic scenes without verification and scores the
//! candidates against their ground truth.
//!
//! `cargo run --release --example synthetic -- [scenes]`

use curvetext::synth::{random_scene, SceneGenConfig};
use curvetext::{detect_without_verification, match_blocks, metrics, EvalCounts, MatchParams, PipelineConfig};

fn main() -> curvetext::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let cfg = PipelineConfig::default();
    let mut total = EvalCounts::default();
    for seed in 0..n {
        let scene = random_scene(&SceneGenConfig::default(), seed).render();
        let result = detect_without_verification(&scene.image, &cfg)?;
        let masks: Vec<_> = result.regions.iter().map(|r| r.mask.clone()).collect();
        let counts = match_blocks(&masks, &scene.ground_truth(), &MatchParams::default())?;
        println!(
            "scene {seed}: {} words, {} candidates, {counts:?}",
            scene.regions.len(),
            result.regions.len()
        );
        total += counts;
    }
    print!("{}", metrics(total).to_table());
    Ok(())
}
