//! Random forests of CART trees on bootstrap samples.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_binary, grow_tree_on, Columns, GrowParams, Splitter, Task, Tree};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<F> {
    pub task: Task,
    pub n_features: usize,
    /// Master seed; tree `t` was grown from `derive_seed(seed, t)`.
    pub seed: u64,
    pub trees: Vec<Tree<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means `floor(sqrt(n_features))`.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_features: None,
            max_depth: None,
            bootstrap: true,
        }
    }
}

pub(crate) fn sqrt_features(n: usize) -> usize {
    ((n as f64).sqrt() as usize).clamp(1, n.max(1))
}

pub fn fit_forest<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    task: Task,
    n_trees: usize,
    seed: u64,
) -> Result<Forest<F>> {
    let params = ForestParams {
        n_trees,
        ..Default::default()
    };
    fit_forest_with(x, y, task, &params, seed)
}

pub fn fit_forest_with<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    task: Task,
    params: &ForestParams,
    seed: u64,
) -> Result<Forest<F>> {
    if x.rows() < 2 {
        return Err(Error::InsufficientData(
            "a forest needs at least 2 rows".into(),
        ));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    x.check_finite()?;
    if task == Task::Classification {
        check_binary(y)?;
    }
    let grow = GrowParams {
        splitter: Splitter::Best,
        max_features: Some(
            params
                .max_features
                .unwrap_or_else(|| sqrt_features(x.cols())),
        ),
        max_depth: params.max_depth,
        min_samples_split: 2,
    };
    let n = x.rows();
    let cols = Columns::new(x);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from(derive_seed(seed, t as u64));
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree_on(&cols, y, &sample, task, &grow, &mut rng)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        task,
        n_features: x.cols(),
        seed,
        trees,
    })
}

impl<F: Scalar> Forest<F> {
    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: len,
            });
        }
        Ok(())
    }

    /// Mean of the tree predictions (regression mean or class-1 frequency).
    pub fn predict(&self, x: &[F]) -> Result<F> {
        self.check_dim(x.len())?;
        let sum: F = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / F::from_usize_lossy(self.trees.len()))
    }

    /// Averaged leaf class frequencies `[P(0), P(1)]`.
    pub fn predict_proba(&self, x: &[F]) -> Result<[F; 2]> {
        if self.task != Task::Classification {
            return Err(Error::InvalidParameter(
                "predict_proba needs a classification forest".into(),
            ));
        }
        let p1 = self.predict(x)?;
        Ok([F::one() - p1, p1])
    }

    /// `predict` over every row, tree-major for cache locality. Summation
    /// order per row matches [`Forest::predict`].
    pub fn predict_batch(&self, x: &Matrix<F>) -> Result<Vec<F>> {
        self.check_dim(x.cols())?;
        let mut acc = vec![F::zero(); x.rows()];
        for t in &self.trees {
            for (a, row) in acc.iter_mut().zip(x.iter_rows()) {
                *a += t.predict(row);
            }
        }
        let n = F::from_usize_lossy(self.trees.len());
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}
