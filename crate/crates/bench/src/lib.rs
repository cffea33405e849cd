//! Input generators shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use codechain_core::exec::{TestOutcome, TestReport, Verdict};

/// `blobs` Gaussian-ish clusters of `per_blob` points in `dim` dimensions.
pub fn blobs(blobs: usize, per_blob: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(blobs * per_blob);
    for b in 0..blobs {
        for _ in 0..per_blob {
            out.push(
                (0..dim)
                    .map(|d| if d % blobs == b { 4.0 } else { 0.0 } + rng.random_range(-0.5..0.5))
                    .collect(),
            );
        }
    }
    out
}

/// Reports for `n` candidates over `tests` tests with a few distinct
/// behaviours, as a filter would see them.
pub fn reports(n: usize, tests: usize, seed: u64) -> Vec<TestReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let behaviour = rng.random_range(0..6u32);
            let per_test = (0..tests)
                .map(|t| {
                    let pass = (behaviour >> (t % 3)) & 1 == 0;
                    TestOutcome {
                        verdict: if pass { Verdict::Pass } else { Verdict::WrongAnswer },
                        actual_output: format!("{}", if pass { t } else { t + behaviour as usize }),
                        stderr_excerpt: String::new(),
                        elapsed_ms: 1,
                    }
                })
                .collect();
            TestReport::new(id, per_test)
        })
        .collect()
}
