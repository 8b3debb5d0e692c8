//! Local surrogate explanations: Gaussian perturbations around an instance
//! in standardized space, an exponential kernel on the distance to the
//! instance, and a weighted ridge fit of the black-box probabilities.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{Forest, Task};
use crate::matrix::{cholesky_solve, column_mean_std, Matrix};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimeParams {
    pub n_samples: usize,
    /// `None` means `0.75 * sqrt(feature count)`.
    pub kernel_width: Option<f64>,
    pub surrogate_ridge: f64,
    pub seed: u64,
}

impl Default for LimeParams {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_width: None,
            surrogate_ridge: 1e-3,
            seed: 0,
        }
    }
}

impl LimeParams {
    pub fn effective_kernel_width(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or(0.75 * (n_features as f64).sqrt())
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter(
                "n_samples must be at least 1".into(),
            ));
        }
        let w = self.effective_kernel_width(n_features);
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel_width must be positive, got {w}"
            )));
        }
        if !(self.surrogate_ridge >= 0.0 && self.surrogate_ridge.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "surrogate_ridge must be non-negative, got {}",
                self.surrogate_ridge
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation<F> {
    pub row_id: String,
    /// Surrogate slopes in standardized units, towards P(Top).
    pub coefficients: Vec<F>,
    pub intercept: F,
    pub local_r2: F,
    pub predicted_p_top: F,
}

/// Per-feature mean and population standard deviation of the background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundStats<F> {
    pub mean: Vec<F>,
    pub std: Vec<F>,
}

pub fn background_stats<F: Scalar>(x: &Matrix<F>) -> Result<BackgroundStats<F>> {
    if x.rows() < 2 {
        return Err(Error::InsufficientData(
            "background statistics need at least 2 rows".into(),
        ));
    }
    x.check_finite()?;
    let (mean, std) = column_mean_std(x);
    Ok(BackgroundStats { mean, std })
}

/// A probability oracle `x -> P(Top)` evaluated on batches of rows.
pub trait BlackBox<F>: Sync {
    fn predict_batch(&self, x: &Matrix<F>) -> Result<Vec<F>>;
}

impl<F: Scalar> BlackBox<F> for Forest<F> {
    fn predict_batch(&self, x: &Matrix<F>) -> Result<Vec<F>> {
        if self.task != Task::Classification {
            return Err(Error::InvalidParameter(
                "explanations need a classification forest".into(),
            ));
        }
        Forest::predict_batch(self, x)
    }
}

impl<F: Scalar, G: Fn(&[F]) -> F + Sync> BlackBox<F> for G {
    fn predict_batch(&self, x: &Matrix<F>) -> Result<Vec<F>> {
        Ok(x.iter_rows().map(self).collect())
    }
}

pub fn explain<F: Scalar, B: BlackBox<F> + ?Sized>(
    prob: &B,
    x0: &[F],
    stats: &BackgroundStats<F>,
    p: &LimeParams,
) -> Result<Explanation<F>> {
    let d = stats.mean.len();
    if x0.len() != d || stats.std.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x0.len(),
        });
    }
    p.validate(d)?;
    if let Some(j) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, column: j });
    }
    let n = p.n_samples;
    let varying: Vec<usize> = (0..d).filter(|&j| stats.std[j] > F::zero()).collect();
    let z0: Vec<F> = (0..d)
        .map(|j| {
            if stats.std[j] > F::zero() {
                (x0[j] - stats.mean[j]) / stats.std[j]
            } else {
                F::zero()
            }
        })
        .collect();

    let mut rng = rng_from(p.seed);
    let width = F::lit(p.effective_kernel_width(d));
    let mut z = Matrix::zeros(n, d);
    let mut raw = Matrix::zeros(n, d);
    let mut w = vec![F::zero(); n];
    raw.row_mut(0).copy_from_slice(x0);
    z.row_mut(0).copy_from_slice(&z0);
    w[0] = F::one();
    for i in 1..n {
        let (zr, xr) = (z.row_mut(i), raw.row_mut(i));
        zr.copy_from_slice(&z0);
        xr.copy_from_slice(x0);
        let mut dist2 = F::zero();
        for &j in &varying {
            let e = F::lit(StandardNormal.sample(&mut rng));
            zr[j] += e;
            xr[j] = stats.mean[j] + zr[j] * stats.std[j];
            dist2 += e * e;
        }
        w[i] = (-dist2 / (width * width)).exp();
    }

    let probs = prob.predict_batch(&raw)?;
    if probs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: probs.len(),
        });
    }
    for (i, &v) in probs.iter().enumerate() {
        if !(v.is_finite() && v >= F::zero() && v <= F::one()) {
            return Err(Error::InvalidProbability {
                sample: i,
                value: v.as_f64(),
            });
        }
    }

    let fit = weighted_ridge(&z, &varying, &probs, &w, F::lit(p.surrogate_ridge))?;
    Ok(Explanation {
        row_id: String::new(),
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        local_r2: fit.r2,
        predicted_p_top: probs[0],
    })
}

struct RidgeFit<F> {
    coefficients: Vec<F>,
    intercept: F,
    r2: F,
}

/// Weighted ridge of `t` on the `cols` of `z` with an unpenalized intercept.
/// Coefficients of columns outside `cols` are 0.
fn weighted_ridge<F: Scalar>(
    z: &Matrix<F>,
    cols: &[usize],
    t: &[F],
    w: &[F],
    ridge: F,
) -> Result<RidgeFit<F>> {
    let k = cols.len();
    let sw: F = w.iter().copied().sum();
    let mut zbar = vec![F::zero(); k];
    let mut tbar = F::zero();
    for (i, row) in z.iter_rows().enumerate() {
        for (a, &j) in zbar.iter_mut().zip(cols) {
            *a += w[i] * row[j];
        }
        tbar += w[i] * t[i];
    }
    zbar.iter_mut().for_each(|a| *a /= sw);
    tbar /= sw;

    let mut gram = vec![F::zero(); k * k];
    let mut rhs = vec![F::zero(); k];
    let mut c = vec![F::zero(); k];
    for (i, row) in z.iter_rows().enumerate() {
        if w[i] == F::zero() {
            continue;
        }
        for (a, (&j, &m)) in c.iter_mut().zip(cols.iter().zip(&zbar)) {
            *a = row[j] - m;
        }
        let dt = t[i] - tbar;
        for r in 0..k {
            let wr = w[i] * c[r];
            rhs[r] += wr * dt;
            for s in 0..=r {
                gram[r * k + s] += wr * c[s];
            }
        }
    }
    for r in 0..k {
        for s in 0..r {
            gram[s * k + r] = gram[r * k + s];
        }
        gram[r * k + r] += ridge;
    }
    let beta = if k == 0 {
        Vec::new()
    } else {
        cholesky_solve(&gram, &rhs, k)?
    };

    let mut coefficients = vec![F::zero(); z.cols()];
    let mut intercept = tbar;
    for ((&j, &b), &m) in cols.iter().zip(&beta).zip(&zbar) {
        coefficients[j] = b;
        intercept -= b * m;
    }
    let (mut ss_res, mut ss_tot) = (F::zero(), F::zero());
    for (i, row) in z.iter_rows().enumerate() {
        let pred = intercept + cols.iter().zip(&beta).map(|(&j, &b)| b * row[j]).sum::<F>();
        ss_res += w[i] * (t[i] - pred) * (t[i] - pred);
        ss_tot += w[i] * (t[i] - tbar) * (t[i] - tbar);
    }
    let r2 = if ss_tot > F::zero() {
        (F::one() - ss_res / ss_tot).max(F::zero()).min(F::one())
    } else {
        F::one()
    };
    if coefficients.iter().any(|v| !v.is_finite()) || !intercept.is_finite() {
        return Err(Error::Numerical(
            "surrogate fit produced non-finite coefficients".into(),
        ));
    }
    Ok(RidgeFit {
        coefficients,
        intercept,
        r2,
    })
}

/// [`explain`] for every row of `x`; row `i` uses seed
/// `derive_seed(p.seed, i)`. Output order matches input order.
pub fn explain_all<F: Scalar, B: BlackBox<F> + ?Sized>(
    prob: &B,
    x: &Matrix<F>,
    row_ids: &[String],
    stats: &BackgroundStats<F>,
    p: &LimeParams,
) -> Result<Vec<Explanation<F>>> {
    if row_ids.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: row_ids.len(),
        });
    }
    (0..x.rows())
        .into_par_iter()
        .map(|i| {
            let params = LimeParams {
                seed: derive_seed(p.seed, i as u64),
                ..p.clone()
            };
            let mut e = explain(prob, x.row(i), stats, &params)?;
            e.row_id = row_ids[i].clone();
            Ok(e)
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect()
}

/// One JSON object per line.
pub fn to_jsonl<F: Scalar>(explanations: &[Explanation<F>]) -> String {
    let mut out = String::new();
    for e in explanations {
        out.push_str(&serde_json::to_string(e).expect("explanations serialize"));
        out.push('\n');
    }
    out
}
