use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Discretization, PipelineConfig};
use crate::cluster::{
    centroid_plot_csv, kmeans, merge_similar, per_cluster_logistic, summarize, summary_csv,
    ClusterModel, Clustering,
};
use crate::error::{Error, Result};
use crate::impute::knn_impute;
use crate::learn::{
    export_dot, fit_cart, fit_forest_with, fit_logistic_path, mse, Forest, LinearModel, Task,
};
use crate::lime::{background_stats, explain_all, to_jsonl, Explanation};
use crate::matrix::Matrix;
use crate::rng::{derive_named, rng_from};
use crate::scalar::format_sig9;
use crate::select::{select_pipeline, SelectionReport};
use crate::tabular::{
    discretize_target, drop_zero_variance, filter_min_observed, load_csv, mask_nonpositive_codes,
    percentile_thresholds, select_extremes, write_file, CsvOptions, DiscretizeParams, Label, Table,
};

/// Artifact file names, in the order the stages produce them.
pub mod artifacts {
    pub const PREPROCESSED: &str = "preprocessed.csv";
    pub const PREPROCESSED_META: &str = "preprocessed_meta.csv";
    pub const TARGET: &str = "target_aligned.csv";
    pub const IMPUTED: &str = "imputed.csv";
    pub const IMPUTED_META: &str = "imputed_meta.csv";
    pub const SELECTION: &str = "selection.json";
    pub const FEATURE_SCORES: &str = "feature_scores.json";
    pub const REGRESSION_REPORT: &str = "regression_report.json";
    pub const DISCRETIZATION: &str = "discretization.json";
    pub const EXTREMES: &str = "extremes.csv";
    pub const EXTREMES_META: &str = "extremes_meta.csv";
    pub const EXTREMES_LABELS: &str = "extremes_labels.csv";
    pub const FOREST: &str = "forest.json";
    pub const CART: &str = "cart.json";
    pub const CART_DOT: &str = "cart.dot";
    pub const LOGISTIC: &str = "logistic.json";
    pub const EXPLANATIONS: &str = "explanations.jsonl";
    pub const CLUSTERING: &str = "clustering.json";
    pub const CLUSTER_SUMMARY: &str = "cluster_summary.json";
    pub const CLUSTER_SUMMARY_CSV: &str = "cluster_summary.csv";
    pub const CENTROIDS_PLOT: &str = "centroids_plot.csv";
    pub const CLUSTER_MODELS: &str = "cluster_models.json";
    pub const REPORT: &str = "report.txt";

    pub const ALL: [&str; 23] = [
        PREPROCESSED,
        PREPROCESSED_META,
        TARGET,
        IMPUTED,
        IMPUTED_META,
        SELECTION,
        FEATURE_SCORES,
        REGRESSION_REPORT,
        DISCRETIZATION,
        EXTREMES,
        EXTREMES_META,
        EXTREMES_LABELS,
        FOREST,
        CART,
        CART_DOT,
        LOGISTIC,
        EXPLANATIONS,
        CLUSTERING,
        CLUSTER_SUMMARY,
        CLUSTER_SUMMARY_CSV,
        CENTROIDS_PLOT,
        CLUSTER_MODELS,
        REPORT,
    ];
}

use artifacts as a;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn load_table(dir: &Path, data: &str, meta: &str) -> Result<Table<f64>> {
    load_csv(
        &dir.join(data),
        &CsvOptions {
            id_column: Some("id".into()),
            metadata: Some(dir.join(meta)),
            ..Default::default()
        },
    )
}

/// Reads an `id,<value>` CSV with every value observed.
fn load_id_values(path: &Path, column: &str) -> Result<(Vec<String>, Vec<f64>)> {
    let t: Table<f64> = load_csv(
        path,
        &CsvOptions {
            id_column: Some("id".into()),
            ..Default::default()
        },
    )?;
    let j = t.column_index(column).ok_or_else(|| Error::Csv {
        path: path.to_path_buf(),
        message: format!("missing column {column:?}"),
    })?;
    let mut values = Vec::with_capacity(t.n_rows());
    for i in 0..t.n_rows() {
        values.push(t.get(i, j).ok_or_else(|| Error::Csv {
            path: path.to_path_buf(),
            message: format!("row {} has no {column} value", t.row_ids()[i]),
        })?);
    }
    Ok((t.row_ids().to_vec(), values))
}

fn write_id_values(
    path: &Path,
    column: &str,
    ids: &[String],
    values: impl Iterator<Item = String>,
) -> Result<()> {
    let mut out = format!("id,{column}\n");
    for (id, v) in ids.iter().zip(values) {
        out.push_str(&format!("{},{v}\n", crate::tabular::csv_field(id)));
    }
    write_file(path, out.as_bytes())
}

fn check_ids(expected: &[String], found: &[String], what: &str) -> Result<()> {
    if expected != found {
        return Err(Error::Csv {
            path: what.into(),
            message: "row ids do not match the feature table".into(),
        });
    }
    Ok(())
}

/// Masking, variance and observation-count filters; rows without a target
/// value or without any remaining observed cell are dropped.
pub(super) fn preprocess(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let raw: Table<f64> = load_csv(
        &cfg.data,
        &CsvOptions {
            missing_codes: cfg.missing_codes.clone(),
            id_column: Some(cfg.id_column.clone()),
            metadata: cfg.metadata.clone(),
            negative_exempt: cfg.negative_exempt.clone(),
        },
    )?;
    let target: Table<f64> = load_csv(
        &cfg.target,
        &CsvOptions {
            missing_codes: cfg.missing_codes.clone(),
            id_column: Some(cfg.id_column.clone()),
            ..Default::default()
        },
    )?;
    let tj = target
        .column_index(&cfg.target_column)
        .ok_or_else(|| Error::Csv {
            path: cfg.target.clone(),
            message: format!("missing target column {:?}", cfg.target_column),
        })?;
    let gpa_by_id: HashMap<&str, f64> = (0..target.n_rows())
        .filter_map(|i| target.get(i, tj).map(|g| (target.row_ids()[i].as_str(), g)))
        .collect();

    let labelled: Vec<usize> = (0..raw.n_rows())
        .filter(|&i| gpa_by_id.contains_key(raw.row_ids()[i].as_str()))
        .collect();
    let t = mask_nonpositive_codes(&raw.select_rows(&labelled));
    let t = filter_min_observed(&t, cfg.min_observed);
    let t = drop_zero_variance(&t);
    if t.n_cols() == 0 {
        return Err(Error::InsufficientData(format!(
            "no column has {} observed values with nonzero variance",
            cfg.min_observed
        )));
    }
    // rows left empty by the column filters carry no information
    let keep: Vec<usize> = (0..t.n_rows())
        .filter(|&i| (0..t.n_cols()).any(|j| t.is_observed(i, j)))
        .collect();
    if keep.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} rows have a target value and observed features",
            keep.len()
        )));
    }
    let t = t.select_rows(&keep);
    t.write_csv(&out.join(a::PREPROCESSED))?;
    t.write_metadata_csv(&out.join(a::PREPROCESSED_META))?;
    let gpa = t
        .row_ids()
        .iter()
        .map(|id| format_sig9(gpa_by_id[id.as_str()]));
    write_id_values(&out.join(a::TARGET), "gpa", t.row_ids(), gpa)
}

pub(super) fn impute(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let t = load_table(input, a::PREPROCESSED, a::PREPROCESSED_META)?;
    let filled = knn_impute(&t, &cfg.impute)?;
    filled.write_csv(&out.join(a::IMPUTED))?;
    filled.write_metadata_csv(&out.join(a::IMPUTED_META))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub indices: Vec<usize>,
    pub names: Vec<String>,
    pub provenance: Vec<String>,
}

fn load_imputed(input: &Path) -> Result<(Table<f64>, Vec<f64>)> {
    let t = load_table(input, a::IMPUTED, a::IMPUTED_META)?;
    let (ids, gpa) = load_id_values(&input.join(a::TARGET), "gpa")?;
    check_ids(t.row_ids(), &ids, a::TARGET)?;
    Ok((t, gpa))
}

pub(super) fn select(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let (t, gpa) = load_imputed(input)?;
    let SelectionReport { subset, scores } =
        select_pipeline(&t, &gpa, &cfg.select, derive_named(cfg.seed, "select"))?;
    let names = subset
        .indices
        .iter()
        .map(|&j| t.columns()[j].name.clone())
        .collect();
    write_json(
        &out.join(a::SELECTION),
        &SelectionArtifact {
            indices: subset.indices,
            names,
            provenance: subset.provenance,
        },
    )?;
    write_json(&out.join(a::FEATURE_SCORES), &scores)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub n_train: usize,
    pub n_test: usize,
    pub mse: f64,
    /// Error of predicting the training mean.
    pub baseline_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationArtifact {
    pub thresholds: DiscretizeParams<f64>,
    pub rule: Discretization,
    pub low: usize,
    pub middle: usize,
    pub top: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedWeight {
    pub index: usize,
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticArtifact {
    pub converged: bool,
    pub iterations: usize,
    pub model: LinearModel<f64>,
    /// Nonzero weights by decreasing magnitude.
    pub ranked: Vec<RankedWeight>,
}

fn regression_report(
    cfg: &PipelineConfig,
    x: &Matrix<f64>,
    gpa: &[f64],
) -> Result<RegressionReport> {
    let n = x.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(derive_named(cfg.seed, "holdout")));
    let n_test = ((n as f64 * cfg.holdout_fraction).round() as usize).clamp(1, n - 1);
    let (test, train) = order.split_at(n_test);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    let y_train: Vec<f64> = train.iter().map(|&i| gpa[i]).collect();
    let y_test: Vec<f64> = test.iter().map(|&i| gpa[i]).collect();
    let forest = fit_forest_with(
        &x.select_rows(&train),
        &y_train,
        Task::Regression,
        &cfg.forest,
        derive_named(cfg.seed, "regression_forest"),
    )?;
    let pred = forest.predict_batch(&x.select_rows(&test))?;
    let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
    Ok(RegressionReport {
        n_train: train.len(),
        n_test: test.len(),
        mse: mse(&pred, &y_test)?,
        baseline_mse: mse(&vec![mean; y_test.len()], &y_test)?,
    })
}

pub(super) fn model(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let (t, gpa) = load_imputed(input)?;
    let sel: SelectionArtifact = read_json(&input.join(a::SELECTION))?;
    if let Some(&bad) = sel.indices.iter().find(|&&j| j >= t.n_cols()) {
        return Err(Error::DimensionMismatch {
            expected: t.n_cols(),
            found: bad + 1,
        });
    }
    let t = t.select_columns(&sel.indices);
    let x = t.to_matrix()?;
    write_json(
        &out.join(a::REGRESSION_REPORT),
        &regression_report(cfg, &x, &gpa)?,
    )?;

    let thresholds = match cfg.discretize {
        Discretization::Fixed { low_hi, top_lo } => DiscretizeParams::new(low_hi, top_lo)?,
        Discretization::Percentile { q } => percentile_thresholds(&gpa, q)?,
    };
    let labels = discretize_target(&gpa, &thresholds)?;
    let count = |l: Label| labels.iter().filter(|&&v| v == l).count();
    write_json(
        &out.join(a::DISCRETIZATION),
        &DiscretizationArtifact {
            thresholds,
            rule: cfg.discretize.clone(),
            low: count(Label::Low),
            middle: count(Label::Middle),
            top: count(Label::Top),
        },
    )?;

    let (ext, y01) = select_extremes(&t, &labels)?;
    ext.write_csv(&out.join(a::EXTREMES))?;
    ext.write_metadata_csv(&out.join(a::EXTREMES_META))?;
    write_id_values(
        &out.join(a::EXTREMES_LABELS),
        "label",
        ext.row_ids(),
        y01.iter().map(|v| v.to_string()),
    )?;

    let xe = ext.to_matrix()?;
    let yf: Vec<f64> = y01.iter().map(|&v| f64::from(v)).collect();
    let forest = fit_forest_with(
        &xe,
        &yf,
        Task::Classification,
        &cfg.forest,
        derive_named(cfg.seed, "classifier_forest"),
    )?;
    write_json(&out.join(a::FOREST), &forest)?;

    let names: Vec<String> = ext.columns().iter().map(|c| c.name.clone()).collect();
    let cart = fit_cart(&xe, &y01, cfg.cart_max_depth)?;
    write_json(&out.join(a::CART), &cart)?;
    write_file(&out.join(a::CART_DOT), export_dot(&cart, &names).as_bytes())?;

    let fit = fit_logistic_path(&xe, &y01, &cfg.logistic)?;
    let mut ranked: Vec<RankedWeight> = fit
        .model
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(j, &w)| RankedWeight {
            index: j,
            name: names[j].clone(),
            weight: w,
        })
        .collect();
    ranked.sort_by(|p, q| {
        q.weight
            .abs()
            .total_cmp(&p.weight.abs())
            .then(p.index.cmp(&q.index))
    });
    write_json(
        &out.join(a::LOGISTIC),
        &LogisticArtifact {
            converged: fit.converged,
            iterations: fit.iterations,
            model: fit.model,
            ranked,
        },
    )
}

fn load_extremes(input: &Path) -> Result<(Table<f64>, Vec<u8>)> {
    let ext = load_table(input, a::EXTREMES, a::EXTREMES_META)?;
    let (ids, labels) = load_id_values(&input.join(a::EXTREMES_LABELS), "label")?;
    check_ids(ext.row_ids(), &ids, a::EXTREMES_LABELS)?;
    let y01 = labels
        .iter()
        .map(|&v| match v {
            0.0 => Ok(0u8),
            1.0 => Ok(1u8),
            other => Err(Error::Csv {
                path: a::EXTREMES_LABELS.into(),
                message: format!("label {other} is not 0 or 1"),
            }),
        })
        .collect::<Result<_>>()?;
    Ok((ext, y01))
}

/// LIME for every extreme subject; the extremes matrix is the background.
pub(super) fn explain(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let (ext, _) = load_extremes(input)?;
    let forest: Forest<f64> = read_json(&input.join(a::FOREST))?;
    let x = ext.to_matrix()?;
    let stats = background_stats(&x)?;
    let params = cfg.lime.params(derive_named(cfg.seed, "lime"));
    let expl = explain_all(&forest, &x, ext.row_ids(), &stats, &params)?;
    write_file(&out.join(a::EXPLANATIONS), to_jsonl(&expl).as_bytes())
}

fn load_explanations(path: &Path) -> Result<Vec<Explanation<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringArtifact {
    /// Cluster count and inertia before merging.
    pub k_initial: usize,
    pub inertia_initial: f64,
    pub row_ids: Vec<String>,
    pub clustering: Clustering<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModelsArtifact {
    pub feature_names: Vec<String>,
    pub models: Vec<ClusterModel<f64>>,
}

pub(super) fn cluster(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let (ext, y01) = load_extremes(input)?;
    let expl = load_explanations(&input.join(a::EXPLANATIONS))?;
    let ids: Vec<String> = expl.iter().map(|e| e.row_id.clone()).collect();
    check_ids(ext.row_ids(), &ids, a::EXPLANATIONS)?;
    let v: Vec<Vec<f64>> = expl.into_iter().map(|e| e.coefficients).collect();

    let initial = kmeans(&v, &cfg.cluster.kmeans(), derive_named(cfg.seed, "kmeans"))?;
    let merged = merge_similar(&initial, cfg.cluster.merge_threshold);
    write_json(
        &out.join(a::CLUSTERING),
        &ClusteringArtifact {
            k_initial: initial.centroids.len(),
            inertia_initial: initial.inertia,
            row_ids: ids,
            clustering: merged.clone(),
        },
    )?;
    let summaries = summarize(&merged, &v)?;
    write_json(&out.join(a::CLUSTER_SUMMARY), &summaries)?;
    write_file(
        &out.join(a::CLUSTER_SUMMARY_CSV),
        summary_csv(&summaries).as_bytes(),
    )?;
    write_file(
        &out.join(a::CENTROIDS_PLOT),
        centroid_plot_csv(&merged, ext.columns())?.as_bytes(),
    )?;

    let logistic = crate::learn::LogisticParams {
        lambda: cfg.cluster.lambda,
        ..cfg.logistic.clone()
    };
    let models = per_cluster_logistic(
        &ext.to_matrix()?,
        &y01,
        &merged.assignments,
        &logistic,
        &cfg.cluster.significance(),
        derive_named(cfg.seed, "cluster_models"),
    )?;
    write_json(
        &out.join(a::CLUSTER_MODELS),
        &ClusterModelsArtifact {
            feature_names: ext.columns().iter().map(|c| c.name.clone()).collect(),
            models,
        },
    )
}

fn report_text(input: &Path) -> Result<String> {
    use std::fmt::Write;
    let sel: SelectionArtifact = read_json(&input.join(a::SELECTION))?;
    let reg: RegressionReport = read_json(&input.join(a::REGRESSION_REPORT))?;
    let disc: DiscretizationArtifact = read_json(&input.join(a::DISCRETIZATION))?;
    let logit: LogisticArtifact = read_json(&input.join(a::LOGISTIC))?;
    let cl: ClusteringArtifact = read_json(&input.join(a::CLUSTERING))?;
    let models: ClusterModelsArtifact = read_json(&input.join(a::CLUSTER_MODELS))?;

    let mut s = String::new();
    let _ = writeln!(s, "selected features: {}", sel.indices.len());
    let _ = writeln!(
        s,
        "regression: mse {} (baseline {}) on {} held-out rows",
        format_sig9(reg.mse),
        format_sig9(reg.baseline_mse),
        reg.n_test
    );
    let _ = writeln!(
        s,
        "classes: low {} / middle {} / top {} (low <= {}, top >= {})",
        disc.low,
        disc.middle,
        disc.top,
        format_sig9(disc.thresholds.low_hi),
        format_sig9(disc.thresholds.top_lo)
    );
    let _ = writeln!(s, "global logistic: {} nonzero weights", logit.ranked.len());
    for r in logit.ranked.iter().take(10) {
        let _ = writeln!(s, "  {:>14}  {}", format_sig9(r.weight), r.name);
    }
    let k = cl.clustering.centroids.len();
    let _ = writeln!(s, "clusters: {} -> {} after merging", cl.k_initial, k);
    for m in &models.models {
        let c = m.cluster();
        let size = cl
            .clustering
            .assignments
            .iter()
            .filter(|&&x| x == c)
            .count();
        match m {
            ClusterModel::Fitted { significant, .. } => {
                let _ = writeln!(
                    s,
                    "cluster {c} ({size} subjects): {} significant",
                    significant.len()
                );
                for f in significant.iter().take(10) {
                    let _ = writeln!(
                        s,
                        "  {:>14}  {}",
                        format_sig9(f.weight),
                        models.feature_names[f.index]
                    );
                }
            }
            ClusterModel::Skipped { reason, .. } => {
                let _ = writeln!(s, "cluster {c} ({size} subjects): skipped, {reason}");
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub artifacts: Vec<ManifestEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(super) fn report(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    let text = report_text(input)?;
    write_file(&out.join(a::REPORT), text.as_bytes())?;
    let config = cfg.effective();
    let config_bytes = serde_json::to_vec(&config).expect("config serializes");
    let mut entries = Vec::new();
    for name in a::ALL {
        let path = if name == a::REPORT {
            out.join(name)
        } else {
            input.join(name)
        };
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            file: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
    }
    entries.sort_by(|p, q| p.file.cmp(&q.file));
    write_json(
        &out.join(MANIFEST_FILE),
        &Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config_sha256: sha256_hex(&config_bytes),
            config,
            artifacts: entries,
        },
    )
}
