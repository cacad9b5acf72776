//! Exact k-nearest-neighbor search, in input space or in a kernel-induced
//! feature space.

use std::cmp::Ordering;

use crate::dataset::Point;
use crate::error::{Error, Result};
use crate::kernels::{distance_from_kernel, sq_dist, KernelFamily, KernelSpec};

/// The `k` nearest training points of a query and the edge vectors
/// `neighbor - query` pointing at them.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    pub indices: Vec<usize>,
    pub edges: Vec<Vec<f64>>,
}

impl NeighborSet {
    /// Build from explicit neighbor coordinates, mainly for tests and
    /// scoring of hand-made configurations.
    pub fn from_points(query: &[f64], neighbors: &[&[f64]]) -> Self {
        NeighborSet {
            indices: (0..neighbors.len()).collect(),
            edges: neighbors.iter().map(|n| edge(query, n)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn knn_input(
    train: &[Point],
    query: &[f64],
    query_index: Option<usize>,
    k: usize,
) -> Result<NeighborSet> {
    NeighborIndex::new(train, None, None).query(query, query_index, k)
}

pub fn knn_feature(
    spec: &KernelSpec,
    train: &[Point],
    query: &[f64],
    query_index: Option<usize>,
    k: usize,
) -> Result<NeighborSet> {
    NeighborIndex::new(train, Some(*spec), None).query(query, query_index, k)
}

/// Brute-force search structure over a (possibly restricted) training set.
/// With a kernel it caches `k(x, x)` for every training point.
#[derive(Debug, Clone)]
pub(crate) struct NeighborIndex<'a> {
    train: &'a [Point],
    kernel: Option<KernelSpec>,
    self_kernel: &'a [f64],
    candidates: Option<Vec<usize>>,
}

impl<'a> NeighborIndex<'a> {
    /// `kernel = None` searches with the Euclidean metric. `candidates`
    /// restricts the eligible training indices.
    pub(crate) fn new(
        train: &'a [Point],
        kernel: Option<KernelSpec>,
        candidates: Option<Vec<usize>>,
    ) -> Self {
        NeighborIndex {
            train,
            kernel,
            self_kernel: &[],
            candidates,
        }
    }

    /// Reuse precomputed `k(x, x)` values, one per training point.
    pub(crate) fn with_self_kernel(
        train: &'a [Point],
        kernel: Option<KernelSpec>,
        self_kernel: &'a [f64],
        candidates: Option<Vec<usize>>,
    ) -> Self {
        NeighborIndex {
            train,
            kernel,
            self_kernel,
            candidates,
        }
    }

    pub(crate) fn query(&self, query: &[f64], exclude: Option<usize>, k: usize) -> Result<NeighborSet> {
        if k < 2 {
            return Err(Error::KTooSmall(k));
        }
        let dim = self.train.first().map_or(query.len(), |p| p.dim());
        if query.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: query.len(),
            });
        }
        let eligible: Box<dyn Iterator<Item = usize>> = match &self.candidates {
            Some(c) => Box::new(c.iter().copied()),
            None => Box::new(0..self.train.len()),
        };
        let eligible = eligible.filter(|&i| Some(i) != exclude);

        // RBF and Laplacian feature distances are increasing functions of the
        // Euclidean and L1 distances, which keep their order where
        // 2 - 2k(x, y) rounds to 2.
        let mut scored: Vec<(f64, usize)> = match &self.kernel {
            None | Some(KernelSpec { family: KernelFamily::Rbf { .. }, .. }) => {
                eligible.map(|i| (sq_dist(query, &self.train[i]), i)).collect()
            }
            Some(KernelSpec { family: KernelFamily::Laplacian { .. }, .. }) => {
                eligible.map(|i| (l1_dist(query, &self.train[i]), i)).collect()
            }
            Some(spec) => {
                let kqq = spec.eval_raw(query, query)?;
                eligible
                    .map(|i| {
                        let kii = match self.self_kernel.get(i) {
                            Some(&v) => v,
                            None => spec.eval_raw(&self.train[i], &self.train[i])?,
                        };
                        let kqi = spec.eval_raw(query, &self.train[i])?;
                        Ok((distance_from_kernel(kqq, kqi, kii), i))
                    })
                    .collect::<Result<_>>()?
            }
        };
        if k > scored.len() {
            return Err(Error::KTooLarge {
                k,
                available: scored.len(),
            });
        }
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| -> Ordering {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_distance);
            scored.truncate(k);
        }
        scored.sort_unstable_by(by_distance);
        let indices: Vec<usize> = scored.into_iter().map(|(_, i)| i).collect();
        let edges = indices.iter().map(|&i| edge(query, &self.train[i])).collect();
        Ok(NeighborSet { indices, edges })
    }
}

fn l1_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

fn edge(from: &[f64], to: &[f64]) -> Vec<f64> {
    to.iter().zip(from).map(|(t, f)| t - f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::feature_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(rows: &[&[f64]]) -> Vec<Point> {
        rows.iter().map(|r| Point::new(r.to_vec()).unwrap()).collect()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Point> {
        (0..n)
            .map(|_| Point::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap())
            .collect()
    }

    /// Sort everything by the given distance and take the first `k`.
    fn sort_oracle(n: usize, exclude: Option<usize>, k: usize, dist: impl Fn(usize) -> f64) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..n).filter(|&i| Some(i) != exclude).map(|i| (dist(i), i)).collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|(_, i)| i).collect()
    }

    #[test]
    fn ordered_line_excludes_self() {
        let train = pts(&[&[0.0], &[1.0], &[2.0], &[10.0]]);
        let n = knn_input(&train, &[0.0], Some(0), 2).unwrap();
        assert_eq!(n.indices, vec![1, 2]);
        assert_eq!(n.edges, vec![vec![1.0], vec![2.0]]);
    }

    #[test]
    fn duplicate_of_query_is_kept_with_zero_edge() {
        let train = pts(&[&[0.0], &[0.0], &[3.0]]);
        let n = knn_input(&train, &[0.0], Some(0), 2).unwrap();
        assert_eq!(n.indices, vec![1, 2]);
        assert_eq!(n.edges[0], vec![0.0]);
    }

    #[test]
    fn ties_break_by_index() {
        let train = pts(&[&[1.0], &[-1.0], &[1.0], &[-1.0]]);
        let n = knn_input(&train, &[0.0], None, 3).unwrap();
        assert_eq!(n.indices, vec![0, 1, 2]);
    }

    #[test]
    fn k_bounds() {
        let train = pts(&[&[0.0], &[1.0], &[2.0]]);
        assert!(matches!(knn_input(&train, &[0.0], Some(0), 3), Err(Error::KTooLarge { k: 3, available: 2 })));
        assert!(matches!(knn_input(&train, &[0.0], None, 1), Err(Error::KTooSmall(1))));
        assert!(matches!(
            knn_input(&train, &[0.0, 1.0], None, 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matches_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let train = random_points(&mut rng, 50, 3);
            let q = trial % 50;
            let got = knn_input(&train, &train[q], Some(q), 7).unwrap();
            let want = sort_oracle(50, Some(q), 7, |i| sq_dist(&train[q], &train[i]));
            assert_eq!(got.indices, want);
        }
    }

    #[test]
    fn linear_and_rbf_feature_knn_match_input_knn() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rbf = KernelSpec::rbf(Some(0.3)).unwrap();
        for _ in 0..20 {
            let train = random_points(&mut rng, 40, 4);
            let query: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let base = knn_input(&train, &query, None, 6).unwrap();
            assert_eq!(knn_feature(&KernelSpec::linear(), &train, &query, None, 6).unwrap().indices, base.indices);
            assert_eq!(knn_feature(&rbf, &train, &query, None, 6).unwrap().indices, base.indices);
        }
    }

    #[test]
    fn sigmoid_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec: KernelSpec = "sigmoid:gamma=0.5,coef0=0.1".parse().unwrap();
        for _ in 0..10 {
            let train = random_points(&mut rng, 30, 3);
            let got = knn_feature(&spec, &train, &train[4], Some(4), 5).unwrap();
            let want = sort_oracle(30, Some(4), 5, |i| feature_distance(&spec, &train[4], &train[i]).unwrap());
            assert_eq!(got.indices, want);
        }
    }

    #[test]
    fn far_queries_keep_their_order_under_narrow_kernels() {
        let train = pts(&[&[0.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[3.0, 0.0], &[4.0, 0.0]]);
        let q = [40.0, 0.0];
        for spec in ["rbf:gamma=10", "laplacian:gamma=10"] {
            let spec: KernelSpec = spec.parse().unwrap();
            assert_eq!(feature_distance(&spec, &q, &train[0]).unwrap(), feature_distance(&spec, &q, &train[4]).unwrap());
            assert_eq!(knn_feature(&spec, &train, &q, None, 3).unwrap().indices, vec![4, 3, 2]);
        }
    }

    #[test]
    fn laplacian_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec: KernelSpec = "laplacian:gamma=0.2".parse().unwrap();
        for _ in 0..10 {
            let train = random_points(&mut rng, 30, 3);
            let got = knn_feature(&spec, &train, &train[2], Some(2), 5).unwrap();
            let want = sort_oracle(30, Some(2), 5, |i| feature_distance(&spec, &train[2], &train[i]).unwrap());
            assert_eq!(got.indices, want);
        }
    }

    #[test]
    fn restricted_candidates_and_ordering_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = random_points(&mut rng, 30, 2);
        let cands: Vec<usize> = (0..30).filter(|i| i % 3 != 0).collect();
        let idx = NeighborIndex::new(&train, None, Some(cands.clone()));
        let q = [0.1, -0.2];
        let got = idx.query(&q, None, 5).unwrap();
        assert!(got.indices.iter().all(|i| cands.contains(i)));
        let worst = got.indices.iter().map(|&i| sq_dist(&q, &train[i])).fold(0.0, f64::max);
        for &m in cands.iter().filter(|i| !got.indices.contains(i)) {
            assert!(sq_dist(&q, &train[m]) >= worst);
        }
        assert_eq!(idx.query(&q, None, 5).unwrap(), got);
    }
}
