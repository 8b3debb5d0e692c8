//! Binary decision trees: CART (exhaustive midpoint thresholds) and
//! extremely randomized trees (one uniform threshold per candidate feature).
//!
//! Nodes are stored as parallel arrays in depth-first order, root at 0.
//! A sample goes left when `x[feature] <= threshold`.

use std::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    /// Best threshold among midpoints of consecutive distinct values.
    Best,
    /// One uniform-random threshold per candidate feature.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowParams {
    pub splitter: Splitter,
    /// Candidate features per node; `None` means all.
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    /// Nodes with fewer samples become leaves.
    pub min_samples_split: usize,
}

impl Default for GrowParams {
    fn default() -> Self {
        Self {
            splitter: Splitter::Best,
            max_features: None,
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<F> {
    pub task: Task,
    pub n_features: usize,
    /// Split feature per node, `None` for leaves.
    pub feature: Vec<Option<usize>>,
    pub threshold: Vec<F>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// Mean target (regression) or fraction of class 1 (classification).
    pub value: Vec<F>,
    pub samples: Vec<usize>,
    /// Variance (regression) or Gini index (classification).
    pub impurity: Vec<F>,
    /// `[class 0, class 1]` counts per node; empty for regression trees.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_counts: Vec<[usize; 2]>,
}

impl<F: Scalar> Tree<F> {
    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.feature[node].is_none()
    }

    pub fn leaf_index(&self, x: &[F]) -> usize {
        let mut node = 0;
        while let Some(f) = self.feature[node] {
            node = if x[f] <= self.threshold[node] {
                self.left[node]
            } else {
                self.right[node]
            };
        }
        node
    }

    /// Leaf value: mean target or probability of class 1.
    pub fn predict(&self, x: &[F]) -> F {
        self.value[self.leaf_index(x)]
    }

    pub fn depth(&self) -> usize {
        fn go<F: Scalar>(t: &Tree<F>, n: usize) -> usize {
            if t.is_leaf(n) {
                0
            } else {
                1 + go(t, t.left[n]).max(go(t, t.right[n]))
            }
        }
        go(self, 0)
    }

    /// Total weighted impurity decrease per feature (unnormalized).
    pub fn impurity_decrease(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.n_features];
        for node in 0..self.n_nodes() {
            if let Some(f) = self.feature[node] {
                let (l, r) = (self.left[node], self.right[node]);
                let w = |k: usize| F::from_usize_lossy(self.samples[k]) * self.impurity[k];
                let dec = w(node) - w(l) - w(r);
                out[f] += dec.max(F::zero());
            }
        }
        out
    }
}

/// Exact comparison key for Gini splits: maximizing
/// `(a_l^2 + b_l^2) / n_l + (a_r^2 + b_r^2) / n_r` minimizes the weighted
/// Gini impurity of the children.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GiniKey {
    num: u128,
    den: u128,
}

impl GiniKey {
    pub(crate) fn new(left: [usize; 2], right: [usize; 2]) -> Self {
        let sq = |c: [usize; 2]| (c[0] as u128).pow(2) + (c[1] as u128).pow(2);
        let (nl, nr) = ((left[0] + left[1]) as u128, (right[0] + right[1]) as u128);
        Self {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    pub(crate) fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

#[derive(Debug, Clone, Copy)]
enum Score<F> {
    Gini(GiniKey),
    Variance(F),
}

impl<F: Scalar> Score<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Score::Gini(a), Score::Gini(b)) => a.cmp(b),
            (Score::Variance(a), Score::Variance(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            _ => unreachable!("mixed split criteria"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate<F> {
    feature: usize,
    threshold: F,
    score: Score<F>,
}

/// Column-major copy of a design matrix for split scans.
pub(crate) struct Columns<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Columns<F> {
    pub(crate) fn new(x: &Matrix<F>) -> Self {
        let (rows, cols) = (x.rows(), x.cols());
        let mut data = vec![F::zero(); rows * cols];
        for (i, row) in x.iter_rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                data[j * rows + i] = v;
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> F {
        self.data[j * self.rows + i]
    }

    #[inline]
    fn column(&self, j: usize) -> &[F] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }
}

struct Builder<'a, F> {
    x: &'a Columns<F>,
    y: &'a [F],
    task: Task,
    params: &'a GrowParams,
    tree: Tree<F>,
}

fn class_of<F: Scalar>(y: F) -> usize {
    usize::from(y > F::lit(0.5))
}

/// Midpoint threshold that still separates `lo` from `hi`.
fn midpoint<F: Scalar>(lo: F, hi: F) -> F {
    let mid = (lo + hi) / F::lit(2.0);
    if mid >= hi || mid.is_infinite() {
        lo
    } else {
        mid
    }
}

impl<'a, F: Scalar> Builder<'a, F> {
    fn node_stats(&self, idx: &[usize]) -> (F, F, [usize; 2]) {
        let n = F::from_usize_lossy(idx.len());
        match self.task {
            Task::Classification => {
                let mut c = [0usize; 2];
                for &i in idx {
                    c[class_of(self.y[i])] += 1;
                }
                let p1 = F::from_usize_lossy(c[1]) / n;
                let p0 = F::from_usize_lossy(c[0]) / n;
                (p1, F::one() - p0 * p0 - p1 * p1, c)
            }
            Task::Regression => {
                let mean = idx.iter().map(|&i| self.y[i]).sum::<F>() / n;
                let var = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum::<F>() / n;
                (mean, var.max(F::zero()), [0, 0])
            }
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        let first = self.y[idx[0]];
        match self.task {
            Task::Classification => idx.iter().all(|&i| class_of(self.y[i]) == class_of(first)),
            Task::Regression => idx.iter().all(|&i| self.y[i] == first),
        }
    }

    fn push_node(&mut self, idx: &[usize]) -> usize {
        let (value, impurity, counts) = self.node_stats(idx);
        let t = &mut self.tree;
        t.feature.push(None);
        t.threshold.push(F::zero());
        t.left.push(0);
        t.right.push(0);
        t.value.push(value);
        t.samples.push(idx.len());
        t.impurity.push(impurity);
        if self.task == Task::Classification {
            t.class_counts.push(counts);
        }
        t.feature.len() - 1
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        let node = self.push_node(idx);
        let stop = idx.len() < self.params.min_samples_split.max(2)
            || self.params.max_depth.is_some_and(|d| depth >= d)
            || self.is_pure(idx);
        if stop {
            return node;
        }
        let Some(best) = self.find_split(idx, rng) else {
            return node;
        };
        // stable partition keeps the bootstrap order within children
        let (mut l, mut r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        debug_assert!(!l.is_empty() && !r.is_empty());
        let left = self.grow(&mut l, depth + 1, rng);
        let right = self.grow(&mut r, depth + 1, rng);
        let t = &mut self.tree;
        t.feature[node] = Some(best.feature);
        t.threshold[node] = best.threshold;
        t.left[node] = left;
        t.right[node] = right;
        node
    }

    fn find_split(&self, idx: &[usize], rng: &mut Rng) -> Option<Candidate<F>> {
        let n_features = self.x.cols;
        let mtry = self
            .params
            .max_features
            .unwrap_or(n_features)
            .clamp(1, n_features.max(1));
        let shuffle = mtry < n_features;
        let mut order: Vec<usize> = (0..n_features).collect();
        let mut best: Option<Candidate<F>> = None;
        let mut visited = 0;
        let mut values: Vec<(F, usize)> = Vec::with_capacity(idx.len());
        for k in 0..n_features {
            if visited >= mtry {
                break;
            }
            // lazy Fisher-Yates: position k receives a uniform pick of the rest
            if shuffle {
                let r = rng.random_range(k..n_features);
                order.swap(k, r);
            }
            let f = order[k];
            let cand = match self.params.splitter {
                Splitter::Best => self.best_threshold(idx, f, &mut values),
                Splitter::Random => self.random_threshold(idx, f, rng),
            };
            // constant features are not counted towards mtry
            let Some(c) = cand else { continue };
            visited += 1;
            best = match best {
                None => Some(c),
                Some(b) => match c.score.cmp(&b.score) {
                    Ordering::Greater => Some(c),
                    Ordering::Equal if c.feature < b.feature => Some(c),
                    _ => Some(b),
                },
            };
        }
        best
    }

    fn best_threshold(
        &self,
        idx: &[usize],
        f: usize,
        values: &mut Vec<(F, usize)>,
    ) -> Option<Candidate<F>> {
        values.clear();
        let col = self.x.column(f);
        values.extend(idx.iter().map(|&i| (col[i], i)));
        values.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
        if values[0].0 == values[values.len() - 1].0 {
            return None;
        }
        let mut best: Option<(Score<F>, F)> = None;
        let mut consider = |score: Score<F>, thr: F| {
            // strict improvement keeps the lowest threshold among ties
            if best
                .as_ref()
                .is_none_or(|(b, _)| score.cmp(b) == Ordering::Greater)
            {
                best = Some((score, thr));
            }
        };
        match self.task {
            Task::Classification => {
                let mut total = [0usize; 2];
                for &(_, i) in values.iter() {
                    total[class_of(self.y[i])] += 1;
                }
                let mut left = [0usize; 2];
                for k in 0..values.len() - 1 {
                    left[class_of(self.y[values[k].1])] += 1;
                    if values[k].0 < values[k + 1].0 {
                        let right = [total[0] - left[0], total[1] - left[1]];
                        consider(
                            Score::Gini(GiniKey::new(left, right)),
                            midpoint(values[k].0, values[k + 1].0),
                        );
                    }
                }
            }
            Task::Regression => {
                let total: F = values.iter().map(|&(_, i)| self.y[i]).sum();
                let n = values.len();
                let mut sum_l = F::zero();
                for k in 0..n - 1 {
                    sum_l += self.y[values[k].1];
                    if values[k].0 < values[k + 1].0 {
                        let nl = F::from_usize_lossy(k + 1);
                        let nr = F::from_usize_lossy(n - k - 1);
                        let sum_r = total - sum_l;
                        let s = sum_l * sum_l / nl + sum_r * sum_r / nr;
                        consider(Score::Variance(s), midpoint(values[k].0, values[k + 1].0));
                    }
                }
            }
        }
        best.map(|(score, threshold)| Candidate {
            feature: f,
            threshold,
            score,
        })
    }

    fn random_threshold(&self, idx: &[usize], f: usize, rng: &mut Rng) -> Option<Candidate<F>> {
        let col = self.x.column(f);
        let (mut lo, mut hi) = (F::infinity(), F::neg_infinity());
        for &i in idx {
            let v = col[i];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo < hi) {
            return None;
        }
        let u = F::lit(rng.random::<f64>());
        let mut thr = lo + u * (hi - lo);
        if thr >= hi {
            thr = lo;
        }
        let score = match self.task {
            Task::Classification => {
                let (mut l, mut r) = ([0usize; 2], [0usize; 2]);
                for &i in idx {
                    let c = class_of(self.y[i]);
                    if col[i] <= thr {
                        l[c] += 1;
                    } else {
                        r[c] += 1;
                    }
                }
                Score::Gini(GiniKey::new(l, r))
            }
            Task::Regression => {
                let (mut sl, mut sr, mut nl, mut nr) = (F::zero(), F::zero(), 0usize, 0usize);
                for &i in idx {
                    if col[i] <= thr {
                        sl += self.y[i];
                        nl += 1;
                    } else {
                        sr += self.y[i];
                        nr += 1;
                    }
                }
                let s = sl * sl / F::from_usize_lossy(nl) + sr * sr / F::from_usize_lossy(nr);
                Score::Variance(s)
            }
        };
        Some(Candidate {
            feature: f,
            threshold: thr,
            score,
        })
    }
}

/// Grows one tree on the rows listed in `sample` (duplicates allowed).
pub fn grow_tree<F: Scalar>(
    x: &Matrix<F>,
    y: &[F],
    sample: &[usize],
    task: Task,
    params: &GrowParams,
    rng: &mut Rng,
) -> Result<Tree<F>> {
    grow_tree_on(&Columns::new(x), y, sample, task, params, rng)
}

pub(crate) fn grow_tree_on<F: Scalar>(
    x: &Columns<F>,
    y: &[F],
    sample: &[usize],
    task: Task,
    params: &GrowParams,
    rng: &mut Rng,
) -> Result<Tree<F>> {
    if x.rows != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows,
            found: y.len(),
        });
    }
    if sample.is_empty() {
        return Err(Error::InsufficientData(
            "cannot grow a tree on zero samples".into(),
        ));
    }
    let mut b = Builder {
        x,
        y,
        task,
        params,
        tree: Tree {
            task,
            n_features: x.cols,
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
            samples: Vec::new(),
            impurity: Vec::new(),
            class_counts: Vec::new(),
        },
    };
    let mut idx = sample.to_vec();
    b.grow(&mut idx, 0, rng);
    Ok(b.tree)
}

pub(crate) fn check_binary<F: Scalar>(y: &[F]) -> Result<()> {
    let mut seen = [false; 2];
    for (row, &v) in y.iter().enumerate() {
        if v == F::zero() {
            seen[0] = true;
        } else if v == F::one() {
            seen[1] = true;
        } else {
            return Err(Error::Domain {
                row,
                value: v.as_f64(),
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    if !(seen[0] && seen[1]) {
        return Err(Error::InsufficientData(
            "classification needs both classes present".into(),
        ));
    }
    Ok(())
}

/// Single CART classifier with Gini splits over all features.
pub fn fit_cart<F: Scalar>(x: &Matrix<F>, y01: &[u8], max_depth: Option<usize>) -> Result<Tree<F>> {
    let y: Vec<F> = y01.iter().map(|&v| F::from_u8(v).expect("u8")).collect();
    check_binary(&y)?;
    x.check_finite()?;
    let params = GrowParams {
        max_depth,
        ..Default::default()
    };
    let sample: Vec<usize> = (0..x.rows()).collect();
    // the exhaustive splitter never draws from the generator
    let mut rng = crate::rng::rng_from(0);
    grow_tree(x, &y, &sample, Task::Classification, &params, &mut rng)
}
