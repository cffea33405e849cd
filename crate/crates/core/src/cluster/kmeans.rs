use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Cluster of each vector. Clusters are numbered by descending size,
    /// ties by lowest member index.
    pub labels: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Per cluster, the member nearest its mean (ties to the lowest index).
    pub centroid_member_indices: Vec<usize>,
    pub effective_k: usize,
    pub requested_k: usize,
    pub iterations: usize,
    /// Objective after each assignment step.
    pub inertia_trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }

    /// True when the trace never rises by more than rounding noise.
    pub fn inertia_non_increasing(&self) -> bool {
        self.inertia_trace
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0))
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distinct_count(vectors: &[Vec<f64>]) -> usize {
    vectors
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

fn nearest(v: &[f64], means: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, m) in means.iter().enumerate() {
        let d = sq_dist(v, m);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn kmeans_pp(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = vectors.iter().map(|v| sq_dist(v, &vectors[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            // Only reachable with fewer distinct points than k, which the caller rules out.
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
        for (i, v) in vectors.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(v, &vectors[pick]));
        }
    }
    chosen.into_iter().map(|i| vectors[i].clone()).collect()
}

fn centroids(vectors: &[Vec<f64>], labels: &[usize], k: usize, fallback: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = vectors[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &l) in vectors.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(v) {
            *s += x;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (s, n))| {
            if n == 0 {
                fallback[c].clone()
            } else {
                s.into_iter().map(|x| x / n as f64).collect()
            }
        })
        .collect()
}

/// Assigns every vector to its nearest mean, then gives each empty cluster
/// the point farthest from its current mean (taken from a cluster that
/// keeps at least one member).
fn assign(vectors: &[Vec<f64>], means: &mut [Vec<f64>]) -> Vec<usize> {
    let k = means.len();
    let mut labels: Vec<usize> = vectors.iter().map(|v| nearest(v, means).0).collect();
    loop {
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return labels;
        };
        let donor = (0..vectors.len())
            .filter(|&i| counts[labels[i]] >= 2)
            .map(|i| (i, sq_dist(&vectors[i], &means[labels[i]])))
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        let Some((i, _)) = donor else {
            return labels;
        };
        labels[i] = empty;
        means[empty] = vectors[i].clone();
    }
}

fn objective(vectors: &[Vec<f64>], labels: &[usize], means: &[Vec<f64>]) -> f64 {
    vectors.iter().zip(labels).map(|(v, &l)| sq_dist(v, &means[l])).sum()
}

/// Lloyd's algorithm with k-means++ seeding. `k` is clamped to the number of
/// distinct vectors; the result never has an empty cluster.
///
/// Panics if `vectors` is empty, `k` is zero or dimensions disagree.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> ClusterAssignment {
    assert!(!vectors.is_empty(), "kmeans needs at least one vector");
    assert!(k >= 1, "kmeans needs k >= 1");
    let dim = vectors[0].len();
    assert!(vectors.iter().all(|v| v.len() == dim), "vectors differ in dimension");

    let effective_k = k.min(distinct_count(vectors));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = kmeans_pp(vectors, effective_k, &mut rng);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut labels;
    loop {
        labels = assign(vectors, &mut means);
        trace.push(objective(vectors, &labels, &means));
        iterations += 1;
        let updated = centroids(vectors, &labels, effective_k, &means);
        let shift = means
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        means = updated;
        if shift < SHIFT_TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    labels = assign(vectors, &mut means);
    trace.push(objective(vectors, &labels, &means));

    // Renumber clusters by descending size, ties by lowest member index.
    let mut order: Vec<(usize, usize, usize)> = (0..effective_k)
        .map(|c| {
            let size = labels.iter().filter(|&&l| l == c).count();
            let first = labels.iter().position(|&l| l == c).unwrap_or(usize::MAX);
            (c, size, first)
        })
        .collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    let mut rename = vec![0; effective_k];
    for (new, (old, _, _)) in order.iter().enumerate() {
        rename[*old] = new;
    }
    let labels: Vec<usize> = labels.iter().map(|&l| rename[l]).collect();
    let means = centroids(vectors, &labels, effective_k, &vec![vec![0.0; dim]; effective_k]);
    let inertia = objective(vectors, &labels, &means);
    let centroid_member_indices = (0..effective_k)
        .map(|c| {
            let mut best = (usize::MAX, f64::INFINITY);
            for (i, v) in vectors.iter().enumerate() {
                if labels[i] == c {
                    let d = sq_dist(v, &means[c]);
                    if d < best.1 {
                        best = (i, d);
                    }
                }
            }
            best.0
        })
        .collect();
    ClusterAssignment {
        labels,
        means,
        inertia,
        centroid_member_indices,
        effective_k,
        requested_k: k,
        iterations,
        inertia_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vector() {
        let a = kmeans(&[vec![0.3, 0.4]], 1, 7);
        assert_eq!(a.labels, [0]);
        assert_eq!(a.means, vec![vec![0.3, 0.4]]);
        assert_eq!(a.inertia, 0.0);
        assert_eq!(a.effective_k, 1);
    }

    #[test]
    fn clamps_to_distinct_points() {
        let v = vec![vec![0.0], vec![1.0], vec![2.0]];
        let a = kmeans(&v, 5, 1);
        assert_eq!(a.effective_k, 3);
        assert_eq!(a.inertia, 0.0);
        let dup = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert_eq!(kmeans(&dup, 3, 1).effective_k, 2);
    }

    /// Exhaustive search over all 2-partitions for the minimum within-cluster SSE.
    fn best_two_partition(v: &[Vec<f64>]) -> Vec<usize> {
        let n = v.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let means = centroids(v, &labels, 2, &[vec![], vec![]]);
            let sse = objective(v, &labels, &means);
            if sse < best.0 {
                best = (sse, labels);
            }
        }
        best.1
    }

    #[test]
    fn two_obvious_groups() {
        let v = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]];
        let oracle = best_two_partition(&v);
        assert_eq!(oracle[0], oracle[1]);
        assert_eq!(oracle[2], oracle[3]);
        assert_ne!(oracle[0], oracle[2]);
        for seed in 0..10 {
            let a = kmeans(&v, 2, seed);
            assert_eq!(a.labels[0], a.labels[1]);
            assert_eq!(a.labels[2], a.labels[3]);
            assert_ne!(a.labels[0], a.labels[2]);
            assert!((a.inertia - 1.0).abs() < 1e-12);
            // Equal sizes: the cluster holding index 0 comes first.
            assert_eq!(a.labels[0], 0);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let v: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect();
        assert_eq!(kmeans(&v, 4, 42), kmeans(&v, 4, 42));
    }

    #[test]
    fn relabelled_by_size() {
        let v = vec![vec![10.0], vec![0.0], vec![0.1], vec![0.2]];
        let a = kmeans(&v, 2, 3);
        assert_eq!(a.labels, [1, 0, 0, 0]);
        assert_eq!(a.centroid_member_indices, [2, 0]);
    }

    proptest::proptest! {
        #[test]
        fn invariants(
            points in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..40),
            k in 1usize..8,
            seed in 0u64..1000,
        ) {
            let a = kmeans(&points, k, seed);
            proptest::prop_assert!(a.inertia_non_increasing(), "{:?}", a.inertia_trace);
            proptest::prop_assert_eq!(a.effective_k, k.min(distinct_count(&points)));
            for c in 0..a.effective_k {
                let members = a.members(c);
                proptest::prop_assert!(!members.is_empty());
                proptest::prop_assert_eq!(a.labels[a.centroid_member_indices[c]], c);
                for (d, &m) in a.means[c].iter().enumerate() {
                    let mean = members.iter().map(|&i| points[i][d]).sum::<f64>() / members.len() as f64;
                    proptest::prop_assert!((mean - m).abs() < 1e-12);
                }
            }
        }
    }
}
