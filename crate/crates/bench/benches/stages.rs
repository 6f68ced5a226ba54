use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use curvetext::phog::extract_sequence;
use curvetext::raster::connected_components;
use curvetext::skeleton::thin;
use curvetext::synth::render_word_strip;
use curvetext::textmap::{kmeans_2, md_map};
use curvetext::{detect, fourier_log, FilterParams, PipelineConfig};
use curvetext_bench::{models, scene, word_sequences};

fn segmentation(c: &mut Criterion) {
    let img = scene(256, 256, 1);
    let filtered = fourier_log(&img, &FilterParams::default());
    let md = md_map(&filtered);
    let mask = kmeans_2(&md).mask;
    let comps = connected_components(&mask);

    c.bench_function("fourier_log 256x256", |b| {
        b.iter(|| fourier_log(black_box(&img), &FilterParams::default()))
    });
    c.bench_function("md_map 256x256", |b| b.iter(|| md_map(black_box(&filtered))));
    c.bench_function("kmeans_2 256x256", |b| b.iter(|| kmeans_2(black_box(&md))));
    c.bench_function("thin all components", |b| b.iter(|| comps.iter().map(thin).count()));
}

fn features_and_models(c: &mut Criterion) {
    let strip = render_word_strip("DETECTION", 40, 30.0, 220.0);
    let pair = models();
    let seq = &word_sequences()[3];
    c.bench_function("phog sequence 40px strip", |b| {
        b.iter(|| extract_sequence(black_box(&strip)))
    });
    c.bench_function("forward_loglik 6x4", |b| {
        b.iter(|| pair.text.forward_loglik(black_box(seq)))
    });
}

fn end_to_end(c: &mut Criterion) {
    let img = scene(256, 256, 2);
    let pair = models();
    let cfg = PipelineConfig::default();
    let mut group = c.benchmark_group("detect");
    group.sample_size(20);
    group.bench_function("256x256", |b| b.iter(|| detect(black_box(&img), &pair, &cfg)));
    group.finish();
}

criterion_group!(benches, segmentation, features_and_models, end_to_end);
criterion_main!(benches);
