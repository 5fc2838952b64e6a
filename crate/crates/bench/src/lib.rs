//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use paramsens::dissimilarity::{build_histogram, Histogram};
use paramsens::synth::{generate, SynthConfig};
use paramsens::FiberResult;

pub fn histogram_pair(bins: usize) -> (Histogram, Histogram) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut values = |k: f64| (0..500).map(|_| rng.random::<f64>().powf(k)).collect::<Vec<_>>();
    let (a, b) = (values(1.0), values(2.0));
    (build_histogram(&a, bins, (0.0, 1.0)).unwrap(), build_histogram(&b, bins, (0.0, 1.0)).unwrap())
}

/// Two synthetic results at nearby parameters, as in a star branch.
pub fn result_pair(fibers: usize) -> (FiberResult, FiberResult) {
    let cfg = SynthConfig {
        fiber_count: fibers,
        ..SynthConfig::default()
    };
    let a = generate(0.5, 0.3, &cfg, 0).unwrap().result;
    let b = generate(0.55, 0.3, &cfg, 1).unwrap().result;
    (a, b)
}

/// Distances between `n` random points in the plane plus small noise.
pub fn distance_matrix(n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), 0.05 * rng.random::<f64>()]).collect();
    pts.iter()
        .map(|a| pts.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()).collect())
        .collect()
}
