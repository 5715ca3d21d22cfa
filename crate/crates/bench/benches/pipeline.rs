use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use edgetrack::appearance::{intersection_kernel, ncc_response_map, pyramid_feature, FeatureKind, NccTemplate};
use edgetrack::edgebox::{generate_pool, ProposalConfig};
use edgetrack::imaging::{frame_edges, to_grayscale, DEFAULT_EDGE_THRESHOLD};
use edgetrack::tracker::{Tracker, TrackerConfig};
use edgetrack_bench::frame_pair;

fn proposals(c: &mut Criterion) {
    let ([_, frame], [prev, _]) = frame_pair();
    let cfg = ProposalConfig::default();
    c.bench_function("edges_640x360", |b| b.iter(|| frame_edges(black_box(&frame), DEFAULT_EDGE_THRESHOLD, 640)));
    let (edges, scale) = frame_edges(&frame, DEFAULT_EDGE_THRESHOLD, 640);
    c.bench_function("pool_640x360", |b| b.iter(|| generate_pool(black_box(&edges), &prev.scale(scale), &cfg)));
}

fn features(c: &mut Criterion) {
    let ([frame, _], [b0, _]) = frame_pair();
    c.bench_function("pyramid_2640", |b| {
        b.iter(|| pyramid_feature(black_box(&frame), &b0, FeatureKind::Pyramid2640))
    });
    c.bench_function("pyramid_480", |b| b.iter(|| pyramid_feature(black_box(&frame), &b0, FeatureKind::Gray480)));
    let x = pyramid_feature(&frame, &b0, FeatureKind::Pyramid2640);
    let y = pyramid_feature(&frame, &b0.translate(7.0, 3.0), FeatureKind::Pyramid2640);
    c.bench_function("intersection_kernel_2640", |b| b.iter(|| intersection_kernel(black_box(&x), black_box(&y))));
}

fn ncc(c: &mut Criterion) {
    let ([f0, f1], [b0, _]) = frame_pair();
    let t = NccTemplate::new(&to_grayscale(&f0), &b0).unwrap();
    let gray = to_grayscale(&f1);
    c.bench_function("ncc_map_640x360", |b| b.iter(|| ncc_response_map(black_box(&gray), &t).unwrap()));
}

fn full_step(c: &mut Criterion) {
    let ([f0, f1], [b0, _]) = frame_pair();
    let (tracker, _) = Tracker::init(&f0, &b0, &TrackerConfig::default()).unwrap();
    let mut group = c.benchmark_group("tracker");
    group.sample_size(10);
    group.bench_function("ssvm_step_640x360", |b| {
        b.iter_batched(|| tracker.clone(), |mut t| t.step(&f1).unwrap(), criterion::BatchSize::LargeInput)
    });
    group.finish();
}

criterion_group!(benches, proposals, features, ncc, full_step);
criterion_main!(benches);
