//! Fixtures shared by the benchmarks.

use cad_core::{LabeledDataset, NeighborSet, Point};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `n` standard normal points in `d` dimensions.
pub fn cloud(n: usize, d: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            Point::new(v).expect("finite")
        })
        .collect();
    LabeledDataset::new(points).expect("non-empty")
}

/// A query at the origin with `k` standard normal neighbors.
pub fn neighborhood(k: usize, d: usize, seed: u64) -> NeighborSet {
    let data = cloud(k, d, seed);
    let rows: Vec<&[f64]> = data.points().iter().map(|p| &**p).collect();
    NeighborSet::from_points(&vec![0.0; d], &rows)
}
