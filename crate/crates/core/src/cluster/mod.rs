//! Embedding, K-means, centroid selection and cluster-count schedules.

mod embed;
mod kmeans;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{EmbeddingProvider, LlmError};

pub use embed::{l2_normalize, tokenize, HashedEmbedder, HASHED_DIM};
pub use kmeans::{distinct_count, kmeans, sq_dist, ClusterAssignment, MAX_ITERATIONS, SHIFT_TOLERANCE};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("nothing to embed")]
    EmptyInput,
    #[error("embedding provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding vectors are empty, non-finite or of mixed dimension")]
    BadVectors,
    #[error("silhouette is undefined for a single cluster")]
    SingleCluster,
    #[error(transparent)]
    Provider(#[from] LlmError),
}

/// Embeds `texts`, optionally scaling each vector to unit length.
pub fn embed(texts: &[String], provider: &dyn EmbeddingProvider, normalize: bool) -> Result<Vec<Vec<f64>>, ClusterError> {
    if texts.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    let mut vectors = provider.embed_texts(texts)?;
    if vectors.len() != texts.len() {
        return Err(ClusterError::CountMismatch {
            expected: texts.len(),
            got: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    if dim == 0 || vectors.iter().any(|v| v.len() != dim || v.iter().any(|x| !x.is_finite())) {
        return Err(ClusterError::BadVectors);
    }
    if normalize {
        for v in &mut vectors {
            l2_normalize(v);
        }
    }
    Ok(vectors)
}

/// Per cluster, the index of the member nearest the cluster mean. Ties go
/// to the lowest `order_key` (sample id, then position within the sample).
pub fn select_centroid_indices(
    assignment: &ClusterAssignment,
    vectors: &[Vec<f64>],
    order_keys: &[(usize, usize)],
) -> Vec<usize> {
    (0..assignment.effective_k)
        .map(|c| {
            let mut best: Option<(f64, (usize, usize), usize)> = None;
            for (i, v) in vectors.iter().enumerate() {
                if assignment.labels[i] != c {
                    continue;
                }
                let d = sq_dist(v, &assignment.means[c]);
                let candidate = (d, order_keys[i], i);
                best = match best {
                    Some(b) if (b.0, b.1) <= (candidate.0, candidate.1) => Some(b),
                    _ => Some(candidate),
                };
            }
            best.expect("final assignment has no empty cluster").2
        })
        .collect()
}

/// Items nearest each cluster mean, in cluster-index order.
pub fn select_centroids<T: Clone>(
    assignment: &ClusterAssignment,
    vectors: &[Vec<f64>],
    items: &[T],
    order_key: impl Fn(&T) -> (usize, usize),
) -> Vec<T> {
    let keys: Vec<(usize, usize)> = items.iter().map(order_key).collect();
    select_centroid_indices(assignment, vectors, &keys)
        .into_iter()
        .map(|i| items[i].clone())
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Mean silhouette coefficient over all points, Euclidean distance.
/// Members of singleton clusters score 0.
pub fn silhouette(assignment: &ClusterAssignment, vectors: &[Vec<f64>]) -> Result<f64, ClusterError> {
    let k = assignment.effective_k;
    if k < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let n = vectors.len();
    let mut sizes = vec![0usize; k];
    for &l in &assignment.labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assignment.labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[assignment.labels[j]] += dist(&vectors[i], &vectors[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Fixed,
    Decreasing,
    Increasing,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterSchedule {
    pub scheme: Scheme,
    pub base_k: usize,
}

impl Default for ClusterSchedule {
    fn default() -> Self {
        Self {
            scheme: Scheme::Fixed,
            base_k: 5,
        }
    }
}

impl ClusterSchedule {
    pub fn validate(&self) -> Result<(), String> {
        if self.base_k == 0 {
            return Err("base_k must be at least 1".into());
        }
        Ok(())
    }
}

/// Number of clusters for revision round `round` (1-based).
///
/// The dynamic scheme picks the k in `[2, base_k + 3]` with the highest
/// silhouette (ties to the smaller k), falling back to `base_k` when there
/// are fewer than three vectors or no k yields two clusters.
pub fn schedule_k(schedule: &ClusterSchedule, round: usize, vectors: Option<&[Vec<f64>]>, seed: u64) -> usize {
    assert!(round >= 1, "revision rounds start at 1");
    let base = schedule.base_k;
    match schedule.scheme {
        Scheme::Fixed => base,
        Scheme::Decreasing => base.saturating_sub(round - 1).max(1),
        Scheme::Increasing => base + (round - 1),
        Scheme::Dynamic => {
            let Some(vectors) = vectors.filter(|v| v.len() >= 3) else {
                return base;
            };
            let mut best: Option<(f64, usize)> = None;
            for k in 2..=base + 3 {
                let a = kmeans(vectors, k, seed);
                let Ok(s) = silhouette(&a, vectors) else {
                    continue;
                };
                if best.is_none_or(|(bs, _)| s > bs) {
                    best = Some((s, k));
                }
            }
            best.map_or(base, |(_, k)| k)
        }
    }
}
