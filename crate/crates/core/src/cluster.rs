//! k-means over explanation vectors, merging of near-parallel centroids,
//! per-cluster summaries and per-cluster sparse logistic models.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{fit_logistic_path, fit_logistic_warm, LinearModel, LogisticParams};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from, Rng};
use crate::scalar::{format_sig9, Scalar};
use crate::tabular::ColumnMeta;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering<F> {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<F>>,
    pub inertia: F,
    /// Original cluster id -> final cluster id.
    pub merge_map: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansParams {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: 5,
            n_init: 10,
            max_iter: 300,
        }
    }
}

#[inline]
fn sq_dist<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |s, (&x, &y)| s + (x - y) * (x - y))
}

fn lex_cmp<F: Scalar>(a: &[F], b: &[F]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Nearest centroid, ties to the lower id.
fn nearest<F: Scalar>(x: &[F], centroids: &[Vec<F>]) -> (usize, F) {
    let mut best = (0, sq_dist(x, &centroids[0]));
    for (c, cen) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia_of<F: Scalar>(v: &[&[F]], assignments: &[usize], centroids: &[Vec<F>]) -> F {
    v.iter()
        .zip(assignments)
        .map(|(x, &a)| sq_dist(x, &centroids[a]))
        .sum()
}

fn kmeans_pp<F: Scalar>(v: &[&[F]], k: usize, rng: &mut Rng) -> Vec<Vec<F>> {
    let n = v.len();
    let mut centroids = vec![v[rng.random_range(0..n)].to_vec()];
    let mut d2: Vec<F> = v.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: F = d2.iter().copied().sum();
        let pick = if total > F::zero() {
            let mut u = F::lit(rng.random::<f64>()) * total;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > F::zero() && u < d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = v[pick].to_vec();
        for (d, x) in d2.iter_mut().zip(v) {
            *d = d.min(sq_dist(x, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// One Lloyd run from `centroids`. Returns the clustering and the inertia
/// after every assignment step.
fn lloyd<F: Scalar>(
    v: &[&[F]],
    mut centroids: Vec<Vec<F>>,
    max_iter: usize,
) -> (Vec<usize>, Vec<Vec<F>>, Vec<F>) {
    let (n, k, dim) = (v.len(), centroids.len(), v[0].len());
    let mut assignments = vec![usize::MAX; n];
    let mut trace: Vec<F> = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut dists = vec![F::zero(); n];
        for (i, x) in v.iter().enumerate() {
            let (c, d) = nearest(x, &centroids);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        let inertia: F = dists.iter().copied().sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(
                inertia <= prev + F::lit(1e-9) * prev.max(F::one()),
                "k-means inertia rose: {prev} -> {inertia}"
            );
        }
        trace.push(inertia);
        if !changed && trace.len() > 1 {
            break;
        }
        let mut sums = vec![vec![F::zero(); dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in v.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, &val) in sums[a].iter_mut().zip(x.iter()) {
                *s += val;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = F::from_usize_lossy(counts[c]);
                centroids[c] = sums[c].iter().map(|&s| s / cnt).collect();
            } else {
                // reseed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| {
                        dists[a]
                            .partial_cmp(&dists[b])
                            .unwrap_or(Ordering::Equal)
                            .then(b.cmp(&a))
                    })
                    .expect("n >= k");
                taken[far] = true;
                centroids[c] = v[far].to_vec();
            }
        }
    }
    (assignments, centroids, trace)
}

/// Best-of-`n_init` k-means with its per-iteration inertia trace.
pub fn kmeans_traced<F: Scalar>(
    v: &[Vec<F>],
    p: &KMeansParams,
    seed: u64,
) -> Result<(Clustering<F>, Vec<F>)> {
    if p.k == 0 || p.n_init == 0 {
        return Err(Error::InvalidParameter(
            "k and n_init must be at least 1".into(),
        ));
    }
    if v.len() < p.k {
        return Err(Error::InsufficientData(format!(
            "{} vectors cannot form {} clusters",
            v.len(),
            p.k
        )));
    }
    let dim = v[0].len();
    for (i, x) in v.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        if let Some(j) = x.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { row: i, column: j });
        }
    }
    // seeding keyed to sorted order makes the result permutation invariant
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(&v[a], &v[b]).then(a.cmp(&b)));
    let sorted: Vec<&[F]> = order.iter().map(|&i| v[i].as_slice()).collect();

    let runs: Vec<_> = (0..p.n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(derive_seed(seed, r as u64));
            let init = kmeans_pp(&sorted, p.k, &mut rng);
            let (a, c, trace) = lloyd(&sorted, init, p.max_iter);
            let inertia = inertia_of(&sorted, &a, &c);
            (a, c, trace, inertia)
        })
        .collect();
    let best = runs
        .into_iter()
        .reduce(|b, r| if r.3 < b.3 { r } else { b })
        .expect("n_init >= 1");
    let (sorted_assign, centroids, trace, inertia) = best;
    let mut assignments = vec![0; v.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = sorted_assign[pos];
    }
    Ok((
        Clustering {
            assignments,
            centroids,
            inertia,
            merge_map: (0..p.k).collect(),
        },
        trace,
    ))
}

pub fn kmeans<F: Scalar>(v: &[Vec<F>], p: &KMeansParams, seed: u64) -> Result<Clustering<F>> {
    kmeans_traced(v, p, seed).map(|(c, _)| c)
}

/// Cosine similarity, 0 when either vector is zero, clamped to [-1, 1].
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> F {
    let dot: F = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let na = a.iter().map(|&x| x * x).sum::<F>();
    let nb = b.iter().map(|&x| x * x).sum::<F>();
    if na == F::zero() || nb == F::zero() {
        return F::zero();
    }
    // one square root keeps cosine(v, v) == 1 exactly
    (dot / (na * nb).sqrt()).max(-F::one()).min(F::one())
}

pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.95;

/// Repeatedly merges the most cosine-similar pair of centroids while that
/// similarity is at least `threshold`. Final ids are contiguous, ordered by
/// the smallest original id they contain.
pub fn merge_similar<F: Scalar>(c: &Clustering<F>, threshold: F) -> Clustering<F> {
    let k = c.centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in &c.assignments {
        sizes[a] += 1;
    }
    // group[g] = current cluster g holds these ids of `c`
    let mut groups: Vec<Vec<usize>> = (0..k).map(|g| vec![g]).collect();
    let mut cents = c.centroids.clone();
    let mut inertia = c.inertia;
    loop {
        let mut best: Option<(usize, usize, F)> = None;
        for a in 0..cents.len() {
            for b in a + 1..cents.len() {
                let s = cosine(&cents[a], &cents[b]);
                if best.is_none_or(|(_, _, bs)| s > bs) {
                    best = Some((a, b, s));
                }
            }
        }
        let Some((a, b, s)) = best else { break };
        if s < threshold {
            break;
        }
        let (na, nb) = (F::from_usize_lossy(sizes[a]), F::from_usize_lossy(sizes[b]));
        if na + nb > F::zero() {
            inertia += na * nb / (na + nb) * sq_dist(&cents[a], &cents[b]);
            cents[a] = cents[a]
                .iter()
                .zip(&cents[b])
                .map(|(&x, &y)| (na * x + nb * y) / (na + nb))
                .collect();
        }
        sizes[a] += sizes[b];
        let moved = groups.remove(b);
        groups[a].extend(moved);
        cents.remove(b);
        sizes.remove(b);
    }
    // groups stay ordered by their smallest member since merges keep the lower slot
    let mut relabel = vec![0usize; k];
    for (g, members) in groups.iter().enumerate() {
        for &m in members {
            relabel[m] = g;
        }
    }
    Clustering {
        assignments: c.assignments.iter().map(|&a| relabel[a]).collect(),
        centroids: cents,
        inertia,
        merge_map: c.merge_map.iter().map(|&m| relabel[m]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary<F> {
    pub id: usize,
    pub size: usize,
    pub min: F,
    pub max: F,
    pub mean: F,
    pub mode: F,
    pub count_min: usize,
    pub count_max: usize,
    pub member_mean: Vec<F>,
}

/// Most frequent value after rounding to 4 decimals, ties to the smaller.
pub fn rounded_mode<F: Scalar>(x: &[F]) -> F {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in x {
        *counts.entry((v.as_f64() * 1e4).round() as i64).or_default() += 1;
    }
    let mut best: Option<(i64, usize)> = None;
    for (&key, &n) in &counts {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((key, n));
        }
    }
    best.map_or(F::zero(), |(key, _)| F::lit(key as f64 / 1e4))
}

/// Centroid statistics and member means per final cluster; empty clusters
/// are omitted.
pub fn summarize<F: Scalar>(c: &Clustering<F>, v: &[Vec<F>]) -> Result<Vec<ClusterSummary<F>>> {
    if v.len() != c.assignments.len() {
        return Err(Error::DimensionMismatch {
            expected: c.assignments.len(),
            found: v.len(),
        });
    }
    let dim = c.centroids.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for (id, cen) in c.centroids.iter().enumerate() {
        let members: Vec<&Vec<F>> = v
            .iter()
            .zip(&c.assignments)
            .filter(|(_, &a)| a == id)
            .map(|(x, _)| x)
            .collect();
        if members.is_empty() || cen.is_empty() {
            continue;
        }
        let mut member_mean = vec![F::zero(); dim];
        for x in &members {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
            for (m, &val) in member_mean.iter_mut().zip(x.iter()) {
                *m += val;
            }
        }
        let n = F::from_usize_lossy(members.len());
        member_mean.iter_mut().for_each(|m| *m /= n);
        let min = cen.iter().copied().fold(F::infinity(), F::min);
        let max = cen.iter().copied().fold(F::neg_infinity(), F::max);
        out.push(ClusterSummary {
            id,
            size: members.len(),
            min,
            max,
            mean: cen.iter().copied().sum::<F>() / F::from_usize_lossy(cen.len()),
            mode: rounded_mode(cen),
            count_min: cen.iter().filter(|&&x| x == min).count(),
            count_max: cen.iter().filter(|&&x| x == max).count(),
            member_mean,
        });
    }
    Ok(out)
}

pub fn summary_csv<F: Scalar>(summaries: &[ClusterSummary<F>]) -> String {
    let mut out = String::from("id,size,min,max,mean,mode,count_min,count_max\n");
    for s in summaries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.id,
            s.size,
            format_sig9(s.min.as_f64()),
            format_sig9(s.max.as_f64()),
            format_sig9(s.mean.as_f64()),
            format_sig9(s.mode.as_f64()),
            s.count_min,
            s.count_max
        ));
    }
    out
}

/// Centroid coefficients per feature, features ordered by wave (stable),
/// one column per cluster.
pub fn centroid_plot_csv<F: Scalar>(c: &Clustering<F>, columns: &[ColumnMeta]) -> Result<String> {
    let dim = c.centroids.first().map_or(0, Vec::len);
    if columns.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: columns.len(),
        });
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by_key(|&j| columns[j].wave);
    let mut out = String::from("feature_index,feature,respondent,wave");
    for id in 0..c.centroids.len() {
        out.push_str(&format!(",cluster_{id}"));
    }
    out.push('\n');
    for j in order {
        let m = &columns[j];
        out.push_str(&format!(
            "{j},{},{},{}",
            crate::tabular::csv_field(&m.name),
            crate::tabular::csv_field(&m.respondent),
            m.wave
        ));
        for cen in &c.centroids {
            out.push(',');
            out.push_str(&format_sig9(cen[j].as_f64()));
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignificanceParams {
    pub n_bootstrap: usize,
    /// Minimum share of refits agreeing in sign with the full fit.
    pub sign_stability: f64,
    pub min_weight: f64,
    pub min_cluster_size: usize,
}

impl Default for SignificanceParams {
    fn default() -> Self {
        Self {
            n_bootstrap: 100,
            sign_stability: 0.9,
            min_weight: 1e-6,
            min_cluster_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificantFeature<F> {
    pub index: usize,
    pub weight: F,
    pub sign_stability: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClusterModel<F> {
    Fitted {
        cluster: usize,
        size: usize,
        converged: bool,
        model: LinearModel<F>,
        /// Ranked by decreasing |weight|.
        significant: Vec<SignificantFeature<F>>,
    },
    Skipped {
        cluster: usize,
        size: usize,
        reason: String,
    },
}

impl<F> ClusterModel<F> {
    pub fn cluster(&self) -> usize {
        match self {
            Self::Fitted { cluster, .. } | Self::Skipped { cluster, .. } => *cluster,
        }
    }

    pub fn significant(&self) -> &[SignificantFeature<F>] {
        match self {
            Self::Fitted { significant, .. } => significant,
            Self::Skipped { .. } => &[],
        }
    }
}

/// Rows of `x` resampled with replacement within each class, so both
/// classes keep their counts.
fn stratified_bootstrap(y: &[u8], rng: &mut Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(y.len());
    for class in [0u8, 1] {
        let idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        for _ in 0..idx.len() {
            out.push(idx[rng.random_range(0..idx.len())]);
        }
    }
    out
}

fn fit_cluster<F: Scalar>(
    x: &Matrix<F>,
    y: &[u8],
    id: usize,
    rows: &[usize],
    logistic: &LogisticParams,
    sig: &SignificanceParams,
    seed: u64,
) -> Result<ClusterModel<F>> {
    let size = rows.len();
    let skip = |reason: String| {
        Ok(ClusterModel::Skipped {
            cluster: id,
            size,
            reason,
        })
    };
    if size < sig.min_cluster_size {
        return skip(format!("{size} members, need {}", sig.min_cluster_size));
    }
    let yc: Vec<u8> = rows.iter().map(|&i| y[i]).collect();
    let ones = yc.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == size {
        return skip("single class".into());
    }
    let xc = x.select_rows(rows);
    let fit = fit_logistic_path(&xc, &yc, logistic)?;
    let w = &fit.model.weights;
    let min_w = F::lit(sig.min_weight);
    let candidates: Vec<usize> = (0..w.len()).filter(|&j| w[j].abs() > min_w).collect();

    let mut agree = vec![0usize; w.len()];
    if !candidates.is_empty() {
        let signs: Vec<Vec<F>> = (0..sig.n_bootstrap)
            .into_par_iter()
            .map(|b| {
                let mut rng = rng_from(derive_seed(seed, b as u64));
                let idx = stratified_bootstrap(&yc, &mut rng);
                let xb = xc.select_rows(&idx);
                let yb: Vec<u8> = idx.iter().map(|&i| yc[i]).collect();
                fit_logistic_warm(&xb, &yb, logistic, &fit.model).map(|f| f.model.weights)
            })
            .collect::<Vec<Result<_>>>()
            .into_iter()
            .collect::<Result<_>>()?;
        for wb in &signs {
            for &j in &candidates {
                if wb[j] != F::zero() && wb[j].signum() == w[j].signum() {
                    agree[j] += 1;
                }
            }
        }
    }
    let nb = F::from_usize_lossy(sig.n_bootstrap.max(1));
    let mut significant: Vec<SignificantFeature<F>> = candidates
        .iter()
        .map(|&j| SignificantFeature {
            index: j,
            weight: w[j],
            sign_stability: F::from_usize_lossy(agree[j]) / nb,
        })
        .filter(|s| s.sign_stability >= F::lit(sig.sign_stability))
        .collect();
    significant.sort_by(|a, b| {
        b.weight
            .abs()
            .partial_cmp(&a.weight.abs())
            .unwrap_or(Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });
    Ok(ClusterModel::Fitted {
        cluster: id,
        size,
        converged: fit.converged,
        model: fit.model,
        significant,
    })
}

/// Sparse logistic model per cluster with bootstrap sign-stability
/// screening. Clusters that are too small or single-class are skipped.
pub fn per_cluster_logistic<F: Scalar>(
    x: &Matrix<F>,
    y01: &[u8],
    assignments: &[usize],
    logistic: &LogisticParams,
    sig: &SignificanceParams,
    seed: u64,
) -> Result<Vec<ClusterModel<F>>> {
    if x.rows() != y01.len() || x.rows() != assignments.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y01.len().min(assignments.len()),
        });
    }
    if !(0.0..=1.0).contains(&sig.sign_stability) {
        return Err(Error::InvalidParameter(
            "sign_stability must lie in [0, 1]".into(),
        ));
    }
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|id| {
            let rows: Vec<usize> = (0..assignments.len())
                .filter(|&i| assignments[i] == id)
                .collect();
            fit_cluster(
                x,
                y01,
                id,
                &rows,
                logistic,
                sig,
                derive_seed(seed, id as u64),
            )
        })
        .collect()
}
