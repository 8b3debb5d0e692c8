use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Mean squared error.
pub fn mse<F: Scalar>(pred: &[F], actual: &[F]) -> Result<F> {
    if pred.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("mse of zero values".into()));
    }
    let sum: F = pred
        .iter()
        .zip(actual)
        .map(|(&p, &a)| (p - a) * (p - a))
        .sum();
    Ok(sum / F::from_usize_lossy(pred.len()))
}

pub fn accuracy(pred: &[u8], actual: &[u8]) -> f64 {
    let hits = pred.iter().zip(actual).filter(|(a, b)| a == b).count();
    hits as f64 / actual.len().max(1) as f64
}

/// Chance-corrected agreement between two partitions of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same items");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let pairs = |c: u64| c * c.saturating_sub(1) / 2;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: u64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: u64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: u64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64) as f64;
    let expected = sum_a as f64 * sum_b as f64 / total;
    let max = 0.5 * (sum_a + sum_b) as f64;
    if (max - expected).abs() < f64::EPSILON {
        // both partitions trivial (all singletons or one block)
        return if a_matches_b(a, b) { 1.0 } else { 0.0 };
    }
    (index as f64 - expected) / (max - expected)
}

fn a_matches_b(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = HashMap::new();
    let mut bwd = HashMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *bwd.entry(y).or_insert(x) == x)
}
