//! L1-regularized logistic regression by proximal gradient descent.
//!
//! Minimizes `mean log-loss + lambda * ||w||_1` over standardized features,
//! intercept unpenalized. Each step soft-thresholds a gradient step and
//! backtracks the step size until the quadratic upper bound holds, so the
//! objective never increases.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{column_mean_std, dot, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<F> {
    /// Coefficients in standardized feature space.
    pub weights: Vec<F>,
    pub intercept: F,
    pub lambda: F,
    pub feature_means: Vec<F>,
    /// Standard deviations used for scaling; zero-deviation features use 1.
    pub feature_scales: Vec<F>,
}

impl<F: Scalar> LinearModel<F> {
    pub fn standardize(&self, x: &[F]) -> Vec<F> {
        x.iter()
            .zip(self.feature_means.iter().zip(&self.feature_scales))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    /// Linear score on a raw (unstandardized) feature vector.
    pub fn decision(&self, x: &[F]) -> Result<F> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(dot(&self.weights, &self.standardize(x)) + self.intercept)
    }

    /// P(y = 1 | x) for a raw feature vector.
    pub fn predict_proba(&self, x: &[F]) -> Result<F> {
        Ok(sigmoid(self.decision(x)?))
    }

    pub fn l1_norm(&self) -> F {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticParams {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            tol: 1e-8,
            max_iter: 5000,
        }
    }
}

/// Result of a proximal-gradient run, converged or not.
#[derive(Debug, Clone)]
pub struct LogisticFit<F> {
    pub model: LinearModel<F>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every accepted iterate, starting with the initial point.
    pub objective_trace: Vec<F>,
}

#[inline]
pub fn sigmoid<F: Scalar>(z: F) -> F {
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
fn softplus<F: Scalar>(z: F) -> F {
    if z > F::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean logistic loss at `(w, b)` on standardized rows `z`, with its
/// gradient `(dw, db)`.
pub fn smooth_loss_grad<F: Scalar>(z: &Matrix<F>, y: &[u8], w: &[F], b: F) -> (F, Vec<F>, F) {
    let n = F::from_usize_lossy(z.rows());
    let mut loss = F::zero();
    let mut gw = vec![F::zero(); z.cols()];
    let mut gb = F::zero();
    for (row, &yi) in z.iter_rows().zip(y) {
        let eta = dot(row, w) + b;
        let yf = F::from_u8(yi).expect("u8");
        loss += softplus(eta) - yf * eta;
        let r = sigmoid(eta) - yf;
        for (g, &v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    for g in &mut gw {
        *g /= n;
    }
    (loss / n, gw, gb / n)
}

#[inline]
fn soft_threshold<F: Scalar>(v: F, t: F) -> F {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        F::zero()
    }
}

/// Standardizes `x` column-wise; returns the scaled copy, means and scales.
pub fn standardize_columns<F: Scalar>(x: &Matrix<F>) -> (Matrix<F>, Vec<F>, Vec<F>) {
    let (mean, sd) = column_mean_std(x);
    let scale: Vec<F> = sd
        .into_iter()
        .map(|s| if s > F::zero() { s } else { F::one() })
        .collect();
    let mut z = x.clone();
    for i in 0..z.rows() {
        for ((v, &m), &s) in z.row_mut(i).iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    }
    (z, mean, scale)
}

fn validate<F: Scalar>(x: &Matrix<F>, y: &[u8], lambda: F) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    x.check_finite()?;
    if !(lambda >= F::zero()) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if let Some(row) = y.iter().position(|&v| v > 1) {
        return Err(Error::Domain {
            row,
            value: f64::from(y[row]),
            lo: 0.0,
            hi: 1.0,
        });
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(Error::InsufficientData(
            "logistic regression needs both classes present".into(),
        ));
    }
    Ok(())
}

fn linear_predictor<F: Scalar>(z: &Matrix<F>, w: &[F], b: F) -> Vec<F> {
    z.iter_rows().map(|row| dot(row, w) + b).collect()
}

fn loss_at<F: Scalar>(eta: &[F], y: &[u8]) -> F {
    let mut loss = F::zero();
    for (&e, &yi) in eta.iter().zip(y) {
        loss += softplus(e) - F::from_u8(yi).expect("u8") * e;
    }
    loss / F::from_usize_lossy(eta.len())
}

fn grad_at<F: Scalar>(z: &Matrix<F>, eta: &[F], y: &[u8]) -> (Vec<F>, F) {
    let n = F::from_usize_lossy(z.rows());
    let mut gw = vec![F::zero(); z.cols()];
    let mut gb = F::zero();
    for ((row, &e), &yi) in z.iter_rows().zip(eta).zip(y) {
        let r = sigmoid(e) - F::from_u8(yi).expect("u8");
        for (g, &v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
        gb += r;
    }
    for g in &mut gw {
        *g /= n;
    }
    (gw, gb / n)
}

/// Proximal gradient with backtracking from `(w, b)` on standardized `z`.
fn prox_grad<F: Scalar>(
    z: &Matrix<F>,
    y: &[u8],
    params: &LogisticParams,
    mut w: Vec<F>,
    mut b: F,
) -> Result<(Vec<F>, F, bool, usize, Vec<F>)> {
    let lambda = F::lit(params.lambda);
    let tol = F::lit(params.tol);
    let l1 = |w: &[F]| w.iter().map(|v| v.abs()).sum::<F>();

    let eta = linear_predictor(z, &w, b);
    let mut f_smooth = loss_at(&eta, y);
    let (mut gw, mut gb) = grad_at(z, &eta, y);
    let mut objective = f_smooth + lambda * l1(&w);
    let mut trace = vec![objective];
    let mut step = F::one();
    let min_step = F::lit(1e-20);
    let half = F::lit(0.5);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iter {
        iterations += 1;
        let (w_new, b_new, eta_new, smooth_new) = loop {
            let w_new: Vec<F> = w
                .iter()
                .zip(&gw)
                .map(|(&wi, &gi)| soft_threshold(wi - step * gi, step * lambda))
                .collect();
            let b_new = b - step * gb;
            let eta_new = linear_predictor(z, &w_new, b_new);
            let smooth_new = loss_at(&eta_new, y);
            let mut lin = (b_new - b) * gb;
            let mut quad = (b_new - b) * (b_new - b);
            for ((&a, &c), &g) in w_new.iter().zip(&w).zip(&gw) {
                lin += (a - c) * g;
                quad += (a - c) * (a - c);
            }
            if smooth_new <= f_smooth + lin + quad / (F::lit(2.0) * step) {
                break (w_new, b_new, eta_new, smooth_new);
            }
            step *= half;
            if step < min_step {
                return Err(Error::Numerical(
                    "proximal gradient step size underflow".into(),
                ));
            }
        };
        let new_objective = smooth_new + lambda * l1(&w_new);
        if !new_objective.is_finite() {
            return Err(Error::Numerical("non-finite logistic objective".into()));
        }
        if new_objective > objective {
            // no representable progress left
            converged = true;
            break;
        }
        let decrease = objective - new_objective;
        w = w_new;
        b = b_new;
        objective = new_objective;
        trace.push(objective);
        debug_assert!(trace[trace.len() - 1] <= trace[trace.len() - 2]);
        if decrease < tol {
            converged = true;
            break;
        }
        f_smooth = smooth_new;
        (gw, gb) = grad_at(z, &eta_new, y);
    }
    Ok((w, b, converged, iterations, trace))
}

fn finish<F: Scalar>(
    lambda: f64,
    means: Vec<F>,
    scales: Vec<F>,
    (w, b, converged, iterations, trace): (Vec<F>, F, bool, usize, Vec<F>),
) -> LogisticFit<F> {
    LogisticFit {
        model: LinearModel {
            weights: w,
            intercept: b,
            lambda: F::lit(lambda),
            feature_means: means,
            feature_scales: scales,
        },
        converged,
        iterations,
        objective_trace: trace,
    }
}

/// Runs proximal gradient to convergence or `max_iter`, whichever first,
/// starting from zero weights and the base-rate intercept.
pub fn fit_logistic_path<F: Scalar>(
    x: &Matrix<F>,
    y: &[u8],
    params: &LogisticParams,
) -> Result<LogisticFit<F>> {
    validate(x, y, F::lit(params.lambda))?;
    let (z, means, scales) = standardize_columns(x);
    let base =
        F::from_usize_lossy(y.iter().filter(|&&v| v == 1).count()) / F::from_usize_lossy(y.len());
    let b = (base / (F::one() - base)).ln();
    let out = prox_grad(&z, y, params, vec![F::zero(); z.cols()], b)?;
    Ok(finish(params.lambda, means, scales, out))
}

/// As [`fit_logistic_path`], but starting from the decision function of
/// `init` re-expressed in this sample's standardization. The objective is
/// convex, so only the iteration count depends on the start.
pub fn fit_logistic_warm<F: Scalar>(
    x: &Matrix<F>,
    y: &[u8],
    params: &LogisticParams,
    init: &LinearModel<F>,
) -> Result<LogisticFit<F>> {
    validate(x, y, F::lit(params.lambda))?;
    if init.weights.len() != x.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            found: init.weights.len(),
        });
    }
    let (z, means, scales) = standardize_columns(x);
    let mut b = init.intercept;
    let mut w = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let per_unit = init.weights[j] / init.feature_scales[j];
        w.push(per_unit * scales[j]);
        b += per_unit * (means[j] - init.feature_means[j]);
    }
    let out = prox_grad(&z, y, params, w, b)?;
    Ok(finish(params.lambda, means, scales, out))
}

/// Fits the model; failing to converge within `max_iter` is an error that
/// carries the last objective value.
pub fn fit_logistic_l1<F: Scalar>(
    x: &Matrix<F>,
    y01: &[u8],
    lambda: F,
    tol: F,
    max_iter: usize,
) -> Result<LinearModel<F>> {
    let params = LogisticParams {
        lambda: lambda.as_f64(),
        tol: tol.as_f64(),
        max_iter,
    };
    let fit = fit_logistic_path(x, y01, &params)?;
    if !fit.converged {
        return Err(Error::NonConvergence {
            iterations: fit.iterations,
            objective: fit.objective_trace.last().map_or(f64::NAN, |v| v.as_f64()),
        });
    }
    Ok(fit.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;
    use rand_distr::StandardNormal;

    fn synthetic(n: usize, p: usize, seed: u64, separable: bool) -> (Matrix<f64>, Vec<u8>) {
        let mut rng = rng_from(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let y = rows
            .iter()
            .map(|r| {
                let s = 1.5 * r[0] - r[1];
                let noise: f64 = if separable {
                    0.0
                } else {
                    rng.sample(StandardNormal)
                };
                u8::from(s + noise > 0.0)
            })
            .collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = synthetic(80, 5, 1, false);
        let (z, _, _) = standardize_columns(&x);
        let mut rng = rng_from(2);
        let h = 1e-6;
        for _ in 0..10 {
            let w: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
            let b: f64 = rng.sample(StandardNormal);
            let (_, gw, gb) = smooth_loss_grad(&z, &y, &w, b);
            for j in 0..5 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[j] += h;
                wm[j] -= h;
                let fd = (smooth_loss_grad(&z, &y, &wp, b).0 - smooth_loss_grad(&z, &y, &wm, b).0)
                    / (2.0 * h);
                assert!(
                    (fd - gw[j]).abs() <= 1e-4 * gw[j].abs().max(1e-3),
                    "{fd} vs {}",
                    gw[j]
                );
            }
            let fd = (smooth_loss_grad(&z, &y, &w, b + h).0
                - smooth_loss_grad(&z, &y, &w, b - h).0)
                / (2.0 * h);
            assert!((fd - gb).abs() <= 1e-4 * gb.abs().max(1e-3));
        }
    }

    #[test]
    fn heavy_penalty_zeroes_weights_and_fits_base_rate() {
        let (x, y) = synthetic(120, 4, 3, false);
        let m = fit_logistic_l1(&x, &y, 10.0, 1e-8, 5000).unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        let rate = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
        assert!((m.intercept - (rate / (1.0 - rate)).ln()).abs() < 1e-9);
    }

    #[test]
    fn unpenalized_separable_data_classified_perfectly() {
        let (x, y) = synthetic(60, 3, 4, true);
        let params = LogisticParams {
            lambda: 0.0,
            tol: 1e-8,
            max_iter: 2000,
        };
        let fit = fit_logistic_path(&x, &y, &params).unwrap();
        for i in 0..x.rows() {
            let s = fit.model.decision(x.row(i)).unwrap();
            assert_eq!(u8::from(s > 0.0), y[i]);
        }
    }

    #[test]
    fn objective_trace_is_monotone() {
        let (x, y) = synthetic(100, 6, 5, false);
        let fit = fit_logistic_path(&x, &y, &LogisticParams::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn l1_norm_shrinks_with_lambda() {
        let (x, y) = synthetic(150, 6, 6, false);
        let mut prev = f64::INFINITY;
        for &lambda in &[0.001, 0.005, 0.01, 0.03, 0.1, 0.3] {
            let m = fit_logistic_l1(&x, &y, lambda, 1e-12, 50_000).unwrap();
            assert!(
                m.l1_norm() <= prev + 1e-6,
                "lambda {lambda}: {} > {prev}",
                m.l1_norm()
            );
            prev = m.l1_norm();
        }
    }

    #[test]
    fn non_convergence_reports_objective() {
        let (x, y) = synthetic(60, 3, 7, true);
        match fit_logistic_l1(&x, &y, 0.0, 1e-30, 3) {
            Err(Error::NonConvergence {
                iterations: 3,
                objective,
            }) => assert!(objective.is_finite()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::from_rows(&[vec![1.0], vec![f64::NAN]]).unwrap();
        assert!(fit_logistic_l1(&x, &[0, 1], 0.1, 1e-8, 10).is_err());
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(fit_logistic_l1(&x, &[1, 1], 0.1, 1e-8, 10).is_err());
        assert!(fit_logistic_l1(&x, &[0, 1], -0.1, 1e-8, 10).is_err());
    }

    #[test]
    fn warm_start_reaches_the_cold_optimum() {
        let (x, y) = synthetic(150, 6, 9, false);
        let params = LogisticParams {
            lambda: 0.02,
            tol: 1e-12,
            max_iter: 20_000,
        };
        let cold = fit_logistic_path(&x, &y, &params).unwrap();
        // a different sample standardizes differently; the start is re-expressed
        let rows: Vec<usize> = (0..150).filter(|i| i % 7 != 0).collect();
        let (xs, ys) = (
            x.select_rows(&rows),
            rows.iter().map(|&i| y[i]).collect::<Vec<_>>(),
        );
        let sub_cold = fit_logistic_path(&xs, &ys, &params).unwrap();
        let sub_warm = fit_logistic_warm(&xs, &ys, &params, &cold.model).unwrap();
        assert!(sub_warm.converged);
        for (a, b) in sub_cold.model.weights.iter().zip(&sub_warm.model.weights) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        let again = fit_logistic_warm(&x, &y, &params, &cold.model).unwrap();
        assert!(again.iterations <= 2);
        let z = x.row(3);
        assert!((again.model.decision(z).unwrap() - cold.model.decision(z).unwrap()).abs() < 1e-6);
    }
}
