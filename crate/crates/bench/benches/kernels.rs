use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use paramsens::dissimilarity::{fiber_dissimilarity, hist_euclidean, jensen_shannon, PreparedResult, DEFAULT_POINTS};
use paramsens::embedding::mds;
use paramsens::spatial::{voxelize, GridSpec};
use paramsens_bench::{distance_matrix, histogram_pair, result_pair};

fn histograms(c: &mut Criterion) {
    let (a, b) = histogram_pair(20);
    c.bench_function("jensen_shannon/20", |bench| bench.iter(|| jensen_shannon(black_box(&a), black_box(&b))));
    c.bench_function("hist_euclidean/20", |bench| bench.iter(|| hist_euclidean(black_box(&a), black_box(&b))));
}

fn fibers(c: &mut Criterion) {
    let (a, b) = result_pair(20);
    let (f, g) = (&a.fibers()[0], &b.fibers()[0]);
    c.bench_function("fiber_dissimilarity/500", |bench| bench.iter(|| fiber_dissimilarity(black_box(f), black_box(g), DEFAULT_POINTS)));

    let mut group = c.benchmark_group("result_dissimilarity");
    group.sample_size(10);
    for n in [20, 80] {
        let (a, b) = result_pair(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let pa = PreparedResult::new(&a, DEFAULT_POINTS);
                let pb = PreparedResult::new(&b, DEFAULT_POINTS);
                pa.dissimilarity_to(&pb)
            })
        });
    }
    group.finish();
}

fn voxels(c: &mut Criterion) {
    let (a, _) = result_pair(80);
    let spec = GridSpec::covering(&a.bounds().unwrap(), [64; 3]).unwrap();
    let mut group = c.benchmark_group("voxelize");
    group.sample_size(10);
    group.bench_function("80 fibers/64^3", |bench| bench.iter(|| voxelize(black_box(&a), &spec)));
    group.finish();
}

fn embedding(c: &mut Criterion) {
    let mut group = c.benchmark_group("mds");
    group.sample_size(10);
    for n in [50, 200] {
        let d = distance_matrix(n);
        let ids: Vec<u64> = (0..n as u64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| bench.iter(|| mds(black_box(&d), &ids)));
    }
    group.finish();
}

criterion_group!(benches, histograms, fibers, voxels, embedding);
criterion_main!(benches);
