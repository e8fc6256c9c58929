//! Hot kernels, labelled by execution mode. Compare the two with
//!
//! ```text
//! cargo bench -p warpcone
//! cargo bench -p warpcone --no-default-features
//! ```

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use warpcone::par::MODE;
use warpcone::spectral::SpectralOptions;
use warpcone::{
    bourgain_embed, build_markov, mean_zero_norm, CompactSpace, GroupAction, Net, PairMeasure, Point,
    WarpedLevelGraph,
};

fn level(n: usize) -> (Net, GroupAction, WarpedLevelGraph) {
    let net = Net::torus_grid(n, 0.5);
    let action = GroupAction::sl2z();
    let g = WarpedLevelGraph::build(&net, &action, 2.0 * n as f64, 3.0, usize::MAX).unwrap();
    (net, action, g)
}

fn distances(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("distances/{MODE}"));
    group.sample_size(10);
    for n in [32, 64] {
        let (_, _, g) = level(n);
        group.bench_with_input(BenchmarkId::new("dijkstra", g.len()), &g, |b, g| {
            b.iter(|| black_box(g.dijkstra_ticks(&[0])))
        });
        let sources: Vec<usize> = (0..g.len()).step_by(g.len() / 64).collect();
        group.bench_with_input(BenchmarkId::new("all_distances_64", g.len()), &g, |b, g| {
            b.iter(|| black_box(g.all_distances(&sources)))
        });
        group.bench_with_input(BenchmarkId::new("pair_measure_64", g.len()), &g, |b, g| {
            b.iter(|| black_box(PairMeasure::new(g, g.weights(), &sources).unwrap().half_measure_radius()))
        });
    }
    group.finish();
}

fn embedding(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("embedding/{MODE}"));
    group.sample_size(10);
    let (_, _, g) = level(32);
    group.bench_function(BenchmarkId::new("bourgain", g.len()), |b| {
        b.iter(|| black_box(bourgain_embed(&g, 2.0, 7).unwrap()))
    });
    group.finish();
}

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("spectral/{MODE}"));
    group.sample_size(10);
    for n in [32, 64] {
        let (net, action, _) = level(n);
        let op = build_markov(&net, &action).unwrap();
        group.bench_with_input(BenchmarkId::new("power_iteration", op.len()), &op, |b, op| {
            b.iter(|| black_box(mean_zero_norm(op, 2.0, 1, &SpectralOptions::default()).unwrap()))
        });
    }
    group.finish();
}

fn ball_measure(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("ball_measure/{MODE}"));
    let space = CompactSpace::torus2();
    let x = Point::torus(0.3, 0.7);
    group.bench_function("torus_100k", |b| {
        b.iter(|| black_box(space.ball_measure(&x, 0.25, 100_000, 3).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, distances, embedding, spectral, ball_measure);
criterion_main!(benches);
