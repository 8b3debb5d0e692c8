//! kNN imputation of unobserved cells.
//!
//! Distances between two rows use only the columns observed in both:
//! `sqrt(sum of squared differences / number of shared columns)`, on
//! standardized columns when requested. A missing cell (i, j) is filled with
//! the weighted mean of column j over the k nearest rows that observe j.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tabular::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputeParams {
    pub k: usize,
    pub weights: WeightScheme,
    pub standardize: bool,
}

impl Default for ImputeParams {
    fn default() -> Self {
        Self {
            k: 100,
            weights: WeightScheme::InverseDistance,
            standardize: true,
        }
    }
}

const INVERSE_DISTANCE_EPS: f64 = 1e-8;

/// Per-column observed mean and standard deviation; zero deviation maps the
/// column to 0 everywhere.
fn standardized_columns<F: Scalar>(t: &Table<F>) -> Vec<Vec<F>> {
    (0..t.n_cols())
        .map(|j| {
            let obs: Vec<F> = t.observed_values(j).collect();
            let n = F::from_usize_lossy(obs.len().max(1));
            let mean = obs.iter().copied().sum::<F>() / n;
            let var = obs.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let sd = var.sqrt();
            t.column_values(j)
                .iter()
                .map(|&v| {
                    if sd > F::zero() {
                        (v - mean) / sd
                    } else {
                        F::zero()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn knn_impute<F: Scalar>(t: &Table<F>, p: &ImputeParams) -> Result<Table<F>> {
    if p.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let (n, m) = (t.n_rows(), t.n_cols());
    for j in 0..m {
        if t.observed_count(j) == 0 {
            return Err(Error::EmptyColumn(j));
        }
    }
    for i in 0..n {
        if (0..m).all(|j| !t.is_observed(i, j)) {
            return Err(Error::EmptyRow(i));
        }
    }
    if t.is_complete() {
        return Ok(t.clone());
    }

    let scaled = if p.standardize {
        standardized_columns(t)
    } else {
        (0..m).map(|j| t.column_values(j).to_vec()).collect()
    };
    // row-major copies for the distance loop
    let rows: Vec<Vec<F>> = (0..n)
        .map(|i| (0..m).map(|j| scaled[j][i]).collect())
        .collect();
    let masks: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..m).map(|j| t.is_observed(i, j)).collect())
        .collect();

    let incomplete: Vec<usize> = (0..n).filter(|&i| masks[i].iter().any(|&o| !o)).collect();
    let fills: Vec<Result<Vec<(usize, F)>>> = incomplete
        .par_iter()
        .map(|&i| impute_row(t, &rows, &masks, i, p))
        .collect();
    // first failing row in row order, whatever the schedule
    let fills: Vec<Vec<(usize, F)>> = fills.into_iter().collect::<Result<_>>()?;

    let mut out = t.clone();
    for (&i, row_fills) in incomplete.iter().zip(fills) {
        for (j, v) in row_fills {
            out.set_imputed(i, j, v);
        }
    }
    Ok(out)
}

fn impute_row<F: Scalar>(
    t: &Table<F>,
    rows: &[Vec<F>],
    masks: &[Vec<bool>],
    i: usize,
    p: &ImputeParams,
) -> Result<Vec<(usize, F)>> {
    let n = rows.len();
    // distance to every other row; None when no column is shared
    let dist: Vec<Option<F>> = (0..n)
        .map(|r| {
            if r == i {
                return None;
            }
            let (mut sum, mut shared) = (F::zero(), 0usize);
            for ((&a, &b), (&ma, &mb)) in rows[i]
                .iter()
                .zip(&rows[r])
                .zip(masks[i].iter().zip(&masks[r]))
            {
                if ma && mb {
                    let d = a - b;
                    sum += d * d;
                    shared += 1;
                }
            }
            (shared > 0).then(|| (sum / F::from_usize_lossy(shared)).sqrt())
        })
        .collect();

    let eps = F::lit(INVERSE_DISTANCE_EPS);
    let mut fills = Vec::new();
    for j in (0..masks[i].len()).filter(|&j| !masks[i][j]) {
        let mut cands: Vec<(F, usize)> = (0..n)
            .filter(|&r| masks[r][j])
            .filter_map(|r| dist[r].map(|d| (d, r)))
            .collect();
        if cands.is_empty() {
            return Err(Error::NoCandidates { row: i, column: j });
        }
        let k = p.k.min(cands.len());
        let by_dist = |a: &(F, usize), b: &(F, usize)| {
            a.0.partial_cmp(&b.0)
                .expect("finite distance")
                .then(a.1.cmp(&b.1))
        };
        if k < cands.len() {
            cands.select_nth_unstable_by(k - 1, by_dist);
            cands.truncate(k);
        }
        // fixed summation order, independent of the selection algorithm
        cands.sort_by(by_dist);
        let (mut num, mut den) = (F::zero(), F::zero());
        for &(d, r) in &cands {
            let w = match p.weights {
                WeightScheme::Uniform => F::one(),
                WeightScheme::InverseDistance => F::one() / (d + eps),
            };
            num += w * t.column_values(j)[r];
            den += w;
        }
        fills.push((j, num / den));
    }
    Ok(fills)
}

/// Fills each unobserved cell with its column's observed mean. Baseline for
/// comparing imputers.
pub fn mean_impute<F: Scalar>(t: &Table<F>) -> Result<Table<F>> {
    let mut out = t.clone();
    for j in 0..t.n_cols() {
        let obs: Vec<F> = t.observed_values(j).collect();
        if obs.is_empty() {
            return Err(Error::EmptyColumn(j));
        }
        let mean = obs.iter().copied().sum::<F>() / F::from_usize_lossy(obs.len());
        for i in 0..t.n_rows() {
            if !t.is_observed(i, j) {
                out.set_imputed(i, j, mean);
            }
        }
    }
    Ok(out)
}
