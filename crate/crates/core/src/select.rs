//! Feature selection: extra-trees importance, randomized lasso (stability
//! selection), top-k cuts and their intersection.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::forest::sqrt_features;
use crate::learn::tree::{grow_tree_on, Columns};
use crate::learn::{GrowParams, Splitter, Task};
use crate::matrix::Matrix;
use crate::rng::{derive_named, derive_seed, rng_from};
use crate::scalar::{format_sig9, Scalar};
use crate::tabular::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore<F> {
    pub scores: Vec<F>,
    pub method: String,
}

/// Column indices, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub indices: Vec<usize>,
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizedLassoParams {
    pub alpha: f64,
    pub weakness: f64,
    pub n_resamples: usize,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl RandomizedLassoParams {
    pub fn new(alpha: f64, seed: u64) -> Self {
        Self {
            alpha,
            weakness: 0.5,
            n_resamples: 200,
            subsample_fraction: 0.5,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.weakness > 0.0 && self.weakness <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weakness must lie in (0, 1], got {}",
                self.weakness
            )));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        if self.n_resamples == 0 {
            return Err(Error::InvalidParameter(
                "n_resamples must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

pub const LASSO_TOL: f64 = 1e-6;
pub const LASSO_MAX_SWEEPS: usize = 10_000;
pub const SUPPORT_THRESHOLD: f64 = 1e-10;

fn check_inputs<F: Scalar>(x: &Matrix<F>, y: &[F], min_rows: usize) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if x.rows() < min_rows {
        return Err(Error::InsufficientData(format!(
            "need at least {min_rows} rows, got {}",
            x.rows()
        )));
    }
    x.check_finite()?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: i, column: 0 });
    }
    Ok(())
}

/// Mean impurity-decrease importance over `n_trees` extremely randomized
/// regression trees grown on the full sample. Scores sum to 1.
pub fn forest_importance<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    n_trees: usize,
    seed: u64,
) -> Result<FeatureScore<F>> {
    check_inputs(x, y, 2)?;
    if n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::InsufficientData(
            "constant target has no impurity to reduce".into(),
        ));
    }
    let params = GrowParams {
        splitter: Splitter::Random,
        max_features: Some(sqrt_features(x.cols())),
        max_depth: None,
        min_samples_split: 2,
    };
    let rows: Vec<usize> = (0..x.rows()).collect();
    let cols = Columns::new(x);
    let per_tree = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(derive_seed(seed, t as u64));
            let tree = grow_tree_on(&cols, y, &rows, Task::Regression, &params, &mut rng)?;
            let mut dec = tree.impurity_decrease();
            let total: F = dec.iter().copied().sum();
            if total > F::zero() {
                dec.iter_mut().for_each(|d| *d /= total);
            }
            Ok(dec)
        })
        .collect::<Vec<Result<Vec<F>>>>();
    let mut acc = vec![F::zero(); x.cols()];
    for dec in per_tree {
        for (a, d) in acc.iter_mut().zip(dec?) {
            *a += d;
        }
    }
    let total: F = acc.iter().copied().sum();
    if !(total > F::zero()) {
        return Err(Error::Numerical("no tree reduced impurity".into()));
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(FeatureScore {
        scores: acc,
        method: "extra_trees".into(),
    })
}

/// Column-major design for coordinate descent.
struct Design<F> {
    m: usize,
    cols: Vec<Vec<F>>,
    /// `||x_j||^2 / m`
    sq_norm: Vec<F>,
}

/// Lasso on a column-major design, minimizing
/// `0.5 * ||y - X b||^2 / m + alpha * ||b||_1`.
/// Returns the coefficients and the number of sweeps.
fn lasso_cd<F: Scalar>(
    d: &Design<F>,
    y: &[F],
    alpha: F,
    tol: F,
    max_sweeps: usize,
) -> (Vec<F>, usize) {
    let p = d.cols.len();
    let m = F::from_usize_lossy(d.m);
    let mut beta = vec![F::zero(); p];
    let mut resid = y.to_vec();
    let objective = |r: &[F], b: &[F]| {
        let rss: F = r.iter().map(|&v| v * v).sum();
        F::lit(0.5) * rss / m + alpha * b.iter().map(|v| v.abs()).sum::<F>()
    };
    let mut last = objective(&resid, &beta);

    let update = |j: usize, beta: &mut [F], resid: &mut [F]| -> F {
        let c = d.sq_norm[j];
        if c == F::zero() {
            return F::zero();
        }
        let col = &d.cols[j];
        let rho = col
            .iter()
            .zip(resid.iter())
            .fold(F::zero(), |s, (&a, &b)| s + a * b)
            / m
            + c * beta[j];
        let new = soft(rho, alpha) / c;
        let delta = new - beta[j];
        if delta != F::zero() {
            for (r, &a) in resid.iter_mut().zip(col) {
                *r -= a * delta;
            }
            beta[j] = new;
        }
        delta.abs()
    };

    let mut sweeps = 0;
    while sweeps < max_sweeps {
        // full sweep over every coordinate
        let mut max_delta = F::zero();
        for j in 0..p {
            max_delta = max_delta.max(update(j, &mut beta, &mut resid));
        }
        sweeps += 1;
        if cfg!(debug_assertions) {
            let now = objective(&resid, &beta);
            debug_assert!(
                now <= last + F::lit(1e-9) * last.abs().max(F::one()),
                "lasso objective rose: {last} -> {now}"
            );
            last = now;
        }
        if max_delta < tol {
            break;
        }
        // iterate on the active set until it settles, then re-check all
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != F::zero()).collect();
        while sweeps < max_sweeps {
            let mut inner = F::zero();
            for &j in &active {
                inner = inner.max(update(j, &mut beta, &mut resid));
            }
            sweeps += 1;
            if cfg!(debug_assertions) {
                let now = objective(&resid, &beta);
                debug_assert!(
                    now <= last + F::lit(1e-9) * last.abs().max(F::one()),
                    "lasso objective rose: {last} -> {now}"
                );
                last = now;
            }
            if inner < tol {
                break;
            }
        }
    }
    (beta, sweeps)
}

#[inline]
fn soft<F: Scalar>(z: F, t: F) -> F {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        F::zero()
    }
}

/// Standardizes the listed rows column by column and multiplies column j by
/// `weights[j]`. Zero-variance columns become all-zero.
fn subsample_design<F: Scalar>(x: &Matrix<F>, rows: &[usize], weights: &[F]) -> Design<F> {
    let m = rows.len();
    let mf = F::from_usize_lossy(m);
    let mut cols = Vec::with_capacity(x.cols());
    let mut sq_norm = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let mut col: Vec<F> = rows.iter().map(|&i| x.get(i, j)).collect();
        let mean = col.iter().copied().sum::<F>() / mf;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / mf;
        let sd = var.sqrt();
        if sd > F::zero() {
            let s = weights[j] / sd;
            col.iter_mut().for_each(|v| *v = (*v - mean) * s);
        } else {
            col.iter_mut().for_each(|v| *v = F::zero());
        }
        sq_norm.push(col.iter().map(|&v| v * v).sum::<F>() / mf);
        cols.push(col);
    }
    Design { m, cols, sq_norm }
}

/// Selection frequency of each feature across lasso fits on random half
/// samples with randomly down-weighted columns.
pub fn randomized_lasso<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    p: &RandomizedLassoParams,
) -> Result<FeatureScore<F>> {
    p.validate()?;
    check_inputs(x, y, 4)?;
    let n = x.rows();
    let m = ((p.subsample_fraction * n as f64).ceil() as usize).clamp(2, n);
    let alpha = F::lit(p.alpha);
    let tol = F::lit(LASSO_TOL);
    let thr = F::lit(SUPPORT_THRESHOLD);
    let supports = (0..p.n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(derive_seed(p.seed, r as u64));
            let mut rows = sample(&mut rng, n, m).into_vec();
            rows.sort_unstable();
            let weights: Vec<F> = (0..x.cols())
                .map(|_| {
                    F::lit(if p.weakness < 1.0 {
                        rng.random_range(p.weakness..=1.0)
                    } else {
                        1.0
                    })
                })
                .collect();
            let design = subsample_design(x, &rows, &weights);
            let ym = rows.iter().map(|&i| y[i]).sum::<F>() / F::from_usize_lossy(m);
            let yc: Vec<F> = rows.iter().map(|&i| y[i] - ym).collect();
            let (beta, _) = lasso_cd(&design, &yc, alpha, tol, LASSO_MAX_SWEEPS);
            beta.into_iter()
                .map(|b| b.abs() > thr)
                .collect::<Vec<bool>>()
        })
        .collect::<Vec<_>>();
    let mut counts = vec![0usize; x.cols()];
    for s in &supports {
        for (c, &on) in counts.iter_mut().zip(s) {
            *c += usize::from(on);
        }
    }
    let total = F::from_usize_lossy(p.n_resamples);
    Ok(FeatureScore {
        scores: counts
            .into_iter()
            .map(|c| F::from_usize_lossy(c) / total)
            .collect(),
        method: format!("randomized_lasso(alpha={})", format_sig9(p.alpha)),
    })
}

/// Indices of the `k` highest scores, ties to the lower index, sorted.
pub fn top_k<F: Scalar>(s: &FeatureScore<F>, k: usize) -> FeatureSubset {
    let mut order: Vec<usize> = (0..s.scores.len()).collect();
    order.sort_by(|&a, &b| {
        s.scores[b]
            .partial_cmp(&s.scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k.max(1).min(s.scores.len()));
    order.sort_unstable();
    FeatureSubset {
        indices: order,
        provenance: vec![s.method.clone()],
    }
}

/// Indices present in every subset; provenance is the union of tags in
/// first-seen order.
pub fn intersect(subsets: &[FeatureSubset]) -> Result<FeatureSubset> {
    let (first, rest) = subsets
        .split_first()
        .ok_or_else(|| Error::InvalidParameter("intersect needs at least one subset".into()))?;
    let mut common: BTreeSet<usize> = first.indices.iter().copied().collect();
    for s in rest {
        let other: BTreeSet<usize> = s.indices.iter().copied().collect();
        common.retain(|i| other.contains(i));
    }
    if common.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let mut provenance: Vec<String> = Vec::new();
    for s in subsets {
        for tag in &s.provenance {
            if !provenance.contains(tag) {
                provenance.push(tag.clone());
            }
        }
    }
    Ok(FeatureSubset {
        indices: common.into_iter().collect(),
        provenance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    pub n_trees: usize,
    pub alphas: Vec<f64>,
    pub top_k: usize,
    pub weakness: f64,
    pub n_resamples: usize,
    pub subsample_fraction: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            alphas: vec![0.004, 0.000004],
            top_k: 500,
            weakness: 0.5,
            n_resamples: 200,
            subsample_fraction: 0.5,
        }
    }
}

/// Scores from every selector of a [`select_pipeline`] run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport<F> {
    pub subset: FeatureSubset,
    pub scores: Vec<FeatureScore<F>>,
}

/// Extra-trees importance plus randomized lasso at each configured alpha,
/// cut to `top_k` each and intersected.
pub fn select_pipeline<F: Scalar>(
    t: &Table<F>,
    y: &[F],
    cfg: &SelectConfig,
    seed: u64,
) -> Result<SelectionReport<F>> {
    let x = t.to_matrix()?;
    if cfg.top_k == 0 {
        return Err(Error::InvalidParameter("top_k must be at least 1".into()));
    }
    let mut scores = vec![forest_importance(
        &x,
        y,
        cfg.n_trees,
        derive_named(seed, "extra_trees"),
    )?];
    for (i, &alpha) in cfg.alphas.iter().enumerate() {
        let p = RandomizedLassoParams {
            alpha,
            weakness: cfg.weakness,
            n_resamples: cfg.n_resamples,
            subsample_fraction: cfg.subsample_fraction,
            seed: derive_seed(derive_named(seed, "randomized_lasso"), i as u64),
        };
        scores.push(randomized_lasso(&x, y, &p)?);
    }
    let subsets: Vec<FeatureSubset> = scores.iter().map(|s| top_k(s, cfg.top_k)).collect();
    Ok(SelectionReport {
        subset: intersect(&subsets)?,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = rng_from(seed);
        let data = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_row_major(rows, cols, data).unwrap()
    }

    fn subset(idx: &[usize]) -> FeatureSubset {
        FeatureSubset {
            indices: idx.to_vec(),
            provenance: vec!["t".into()],
        }
    }

    #[test]
    fn importance_finds_copied_column() {
        let x = gaussian(200, 8, 1);
        let y = x.column(3);
        let s = forest_importance(&x, &y, 50, 7).unwrap();
        let best = (0..8)
            .max_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]))
            .unwrap();
        assert_eq!(best, 3);
        assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_feature_scores_zero() {
        let mut x = gaussian(100, 5, 2);
        for i in 0..100 {
            x.set(i, 2, 4.0);
        }
        let y: Vec<f64> = (0..100).map(|i| x.get(i, 0) + x.get(i, 4)).collect();
        let s = forest_importance(&x, &y, 30, 1).unwrap();
        assert_eq!(s.scores[2], 0.0);
    }

    #[test]
    fn constant_target_rejected() {
        let x = gaussian(10, 3, 3);
        assert!(forest_importance(&x, &[1.0; 10], 5, 0).is_err());
    }

    #[test]
    fn huge_alpha_selects_nothing() {
        let x = gaussian(60, 6, 4);
        let y: Vec<f64> = (0..60).map(|i| x.get(i, 0) - x.get(i, 1)).collect();
        let p = RandomizedLassoParams {
            n_resamples: 20,
            ..RandomizedLassoParams::new(1e6, 3)
        };
        assert!(randomized_lasso(&x, &y, &p)
            .unwrap()
            .scores
            .iter()
            .all(|&s| s == 0.0));
    }

    #[test]
    fn planted_signal_is_stable() {
        let x = gaussian(200, 51, 5);
        let mut rng = rng_from(55);
        let y: Vec<f64> = (0..200)
            .map(|i| {
                3.0 * x.get(i, 0) + 0.01 * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            })
            .collect();
        let s = randomized_lasso(&x, &y, &RandomizedLassoParams::new(0.004, 9)).unwrap();
        assert!(s.scores[0] >= 0.9);
        assert!(s.scores[1..].iter().all(|&v| v < s.scores[0]));
        assert!(s.scores.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    /// Proximal-gradient lasso on the same standardized problem.
    fn ista_support(x: &Matrix<f64>, y: &[f64], alpha: f64) -> Vec<bool> {
        let (m, p) = (x.rows(), x.cols());
        let (mean, sd) = crate::matrix::column_mean_std(x);
        let z: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..p).map(|j| (x.get(i, j) - mean[j]) / sd[j]).collect())
            .collect();
        let ym = y.iter().sum::<f64>() / m as f64;
        let mut b = vec![0.0; p];
        let step = 1.0 / p as f64;
        for _ in 0..20000 {
            let mut g = vec![0.0; p];
            for i in 0..m {
                let r = z[i].iter().zip(&b).map(|(a, c)| a * c).sum::<f64>() - (y[i] - ym);
                for j in 0..p {
                    g[j] += z[i][j] * r / m as f64;
                }
            }
            for j in 0..p {
                b[j] = soft(b[j] - step * g[j], step * alpha);
            }
        }
        b.iter().map(|v| v.abs() > 1e-6).collect()
    }

    #[test]
    fn single_full_fit_is_plain_lasso_support() {
        let x = gaussian(40, 6, 6);
        let y: Vec<f64> = (0..40)
            .map(|i| 2.0 * x.get(i, 1) - 0.3 * x.get(i, 4) + 0.05 * x.get(i, 5))
            .collect();
        let p = RandomizedLassoParams {
            alpha: 0.1,
            weakness: 1.0,
            n_resamples: 1,
            subsample_fraction: 1.0,
            seed: 0,
        };
        let s = randomized_lasso(&x, &y, &p).unwrap();
        let oracle = ista_support(&x, &y, 0.1);
        for j in 0..6 {
            assert_eq!(
                s.scores[j],
                if oracle[j] { 1.0 } else { 0.0 },
                "feature {j}"
            );
        }
        assert_eq!(s.scores, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn lasso_parameter_errors() {
        let x = gaussian(10, 2, 0);
        let y = x.column(0);
        assert!(randomized_lasso(&x, &y, &RandomizedLassoParams::new(0.0, 0)).is_err());
        assert!(randomized_lasso(&x, &y, &RandomizedLassoParams::new(-1.0, 0)).is_err());
        let small = gaussian(3, 2, 0);
        assert!(randomized_lasso(
            &small,
            &small.column(0),
            &RandomizedLassoParams::new(0.1, 0)
        )
        .is_err());
    }

    #[test]
    fn lasso_is_reproducible() {
        let x = gaussian(50, 10, 8);
        let y: Vec<f64> = (0..50).map(|i| x.get(i, 2) + 0.5 * x.get(i, 7)).collect();
        let p = RandomizedLassoParams {
            n_resamples: 30,
            ..RandomizedLassoParams::new(0.05, 21)
        };
        assert_eq!(
            randomized_lasso(&x, &y, &p).unwrap(),
            randomized_lasso(&x, &y, &p).unwrap()
        );
    }

    #[test]
    fn top_k_examples() {
        let s = |v: Vec<f64>| FeatureScore {
            scores: v,
            method: "m".into(),
        };
        assert_eq!(top_k(&s(vec![0.1, 0.5, 0.4]), 2).indices, vec![1, 2]);
        assert_eq!(top_k(&s(vec![0.1, 0.5, 0.4]), 10).indices, vec![0, 1, 2]);
        assert_eq!(top_k(&s(vec![0.5, 0.5, 0.1]), 1).indices, vec![0]);
    }

    #[test]
    fn intersect_examples() {
        let r = intersect(&[subset(&[1, 2, 3]), subset(&[2, 3, 4]), subset(&[3, 5])]).unwrap();
        assert_eq!(r.indices, vec![3]);
        assert_eq!(
            intersect(&[subset(&[1, 4]), subset(&[1, 4])])
                .unwrap()
                .indices,
            vec![1, 4]
        );
        assert!(matches!(
            intersect(&[subset(&[1]), subset(&[2])]),
            Err(Error::EmptyIntersection)
        ));
    }

    #[test]
    fn one_feature_table_selects_it() {
        let x = gaussian(30, 1, 10);
        let y: Vec<f64> = x.column(0).iter().map(|v| 2.0 * v + 1.0).collect();
        let t = Table::from_matrix(
            &x,
            vec![crate::tabular::ColumnMeta::new("a")],
            (0..30).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        let cfg = SelectConfig {
            n_trees: 10,
            n_resamples: 10,
            ..Default::default()
        };
        assert_eq!(
            select_pipeline(&t, &y, &cfg, 1).unwrap().subset.indices,
            vec![0]
        );
    }

    proptest! {
        #[test]
        fn top_k_size_and_order(scores in prop::collection::vec(0.0f64..1.0, 1..40), k in 1usize..50) {
            let s = FeatureScore { scores: scores.clone(), method: "m".into() };
            let t = top_k(&s, k);
            prop_assert_eq!(t.indices.len(), k.min(scores.len()));
            prop_assert!(t.indices.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn intersect_set_laws(
            a in prop::collection::btree_set(0usize..20, 1..15),
            b in prop::collection::btree_set(0usize..20, 1..15),
            c in prop::collection::btree_set(0usize..20, 1..15),
        ) {
            let (a, b, c) = (
                subset(&a.into_iter().collect::<Vec<_>>()),
                subset(&b.into_iter().collect::<Vec<_>>()),
                subset(&c.into_iter().collect::<Vec<_>>()),
            );
            let idx = |r: Result<FeatureSubset>| r.map(|s| s.indices).ok();
            prop_assert_eq!(idx(intersect(&[a.clone(), b.clone()])), idx(intersect(&[b.clone(), a.clone()])));
            prop_assert_eq!(idx(intersect(&[a.clone(), a.clone()])), Some(a.indices.clone()));
            let left = intersect(&[a.clone(), b.clone()]).ok().and_then(|ab| idx(intersect(&[ab, c.clone()])));
            let right = intersect(&[b.clone(), c.clone()]).ok().and_then(|bc| idx(intersect(&[a.clone(), bc])));
            prop_assert_eq!(left, right);
        }

        #[test]
        fn importance_sums_to_one(seed in 0u64..1000) {
            let x = gaussian(30, 4, seed);
            let y: Vec<f64> = (0..30).map(|i| x.get(i, 0) * x.get(i, 1)).collect();
            let s = forest_importance(&x, &y, 5, seed).unwrap();
            prop_assert!((s.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(s.scores.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
