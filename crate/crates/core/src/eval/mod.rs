//! pass@k, candidate filters and report aggregation.

mod filter;
mod report;
mod synthetic;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

pub use filter::{consensus_filter, largest_cluster_filter, naive_filter, output_signature, FilterKind};
pub use report::{
    aggregate_report, check_all_reconstruction, filtered_pass_at_k, EvalRecord, Report, ReportRow,
    RoundLabel, ALL_DIFFICULTIES,
};
pub use synthetic::{generate_synthetic_tests, parse_synthetic_tests};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("pass@{k} needs 1 <= k <= n (n = {n})")]
    BadK { n: usize, k: usize },
    #[error("c = {c} exceeds n = {n}")]
    BadC { n: usize, c: usize },
    #[error("no records to aggregate")]
    NoRecords,
}

/// 1 - C(n-c, k) / C(n, k), as an exact fraction.
pub fn pass_at_k_exact(n: usize, c: usize, k: usize) -> Result<BigRational, EvalError> {
    if c > n {
        return Err(EvalError::BadC { n, c });
    }
    if k == 0 || k > n {
        return Err(EvalError::BadK { n, k });
    }
    if n - c < k {
        return Ok(BigRational::one());
    }
    let mut miss = BigRational::one();
    for i in 0..k {
        miss *= BigRational::new(BigInt::from(n - c - i), BigInt::from(n - i));
    }
    Ok(BigRational::one() - miss)
}

/// Unbiased pass@k estimate from n samples of which c are correct.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, EvalError> {
    let exact = pass_at_k_exact(n, c, k)?;
    if exact.is_zero() {
        return Ok(0.0);
    }
    Ok(exact.to_f64().unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert_eq!(pass_at_k(20, 0, 1).unwrap(), 0.0);
        assert_eq!(pass_at_k(7, 7, 3).unwrap(), 1.0);
        assert_eq!(pass_at_k_exact(5, 2, 1).unwrap(), BigRational::new(2.into(), 5.into()));
        assert_eq!(pass_at_k_exact(10, 3, 2).unwrap(), BigRational::new(24.into(), 45.into()));
        assert!((pass_at_k(10, 3, 2).unwrap() - (1.0 - 21.0 / 45.0)).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(pass_at_k(3, 1, 4), Err(EvalError::BadK { n: 3, k: 4 }));
        assert_eq!(pass_at_k(3, 1, 0), Err(EvalError::BadK { n: 3, k: 0 }));
        assert_eq!(pass_at_k(3, 4, 1), Err(EvalError::BadC { n: 3, c: 4 }));
    }

    #[test]
    fn large_n_does_not_overflow() {
        let v = pass_at_k(1000, 1, 500).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert!(pass_at_k(1000, 3, 1000).unwrap() == 1.0);
    }

    proptest::proptest! {
        #[test]
        fn monotone_in_c_and_k(n in 1usize..60, c in 0usize..60, k in 1usize..60) {
            let c = c % (n + 1);
            let k = 1 + (k - 1) % n;
            let base = pass_at_k_exact(n, c, k).unwrap();
            if c < n {
                proptest::prop_assert!(pass_at_k_exact(n, c + 1, k).unwrap() >= base);
            }
            if k < n {
                proptest::prop_assert!(pass_at_k_exact(n, c, k + 1).unwrap() >= base);
            }
            proptest::prop_assert!(base >= BigRational::zero() && base <= BigRational::one());
        }
    }
}
