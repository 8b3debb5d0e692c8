use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{KMeansParams, SignificanceParams, DEFAULT_MERGE_THRESHOLD};
use crate::error::{Error, Result};
use crate::impute::ImputeParams;
use crate::learn::{ForestParams, LogisticParams};
use crate::lime::LimeParams;
use crate::select::SelectConfig;
use crate::tabular::DEFAULT_MIN_OBSERVED;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Discretization {
    Fixed { low_hi: f64, top_lo: f64 },
    Percentile { q: f64 },
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization::Fixed {
            low_hi: 2.5,
            top_lo: 3.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimeConfig {
    pub n_samples: usize,
    pub kernel_width: Option<f64>,
    pub surrogate_ridge: f64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        let p = LimeParams::default();
        Self {
            n_samples: p.n_samples,
            kernel_width: p.kernel_width,
            surrogate_ridge: p.surrogate_ridge,
        }
    }
}

impl LimeConfig {
    pub fn params(&self, seed: u64) -> LimeParams {
        LimeParams {
            n_samples: self.n_samples,
            kernel_width: self.kernel_width,
            surrogate_ridge: self.surrogate_ridge,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub merge_threshold: f64,
    /// L1 strength of the per-cluster models.
    pub lambda: f64,
    pub n_bootstrap: usize,
    pub sign_stability: f64,
    pub min_weight: f64,
    pub min_cluster_size: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        let k = KMeansParams::default();
        let s = SignificanceParams::default();
        Self {
            k: k.k,
            n_init: k.n_init,
            max_iter: k.max_iter,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            lambda: LogisticParams::default().lambda,
            n_bootstrap: s.n_bootstrap,
            sign_stability: s.sign_stability,
            min_weight: s.min_weight,
            min_cluster_size: s.min_cluster_size,
        }
    }
}

impl ClusterConfig {
    pub fn kmeans(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            n_init: self.n_init,
            max_iter: self.max_iter,
        }
    }

    pub fn significance(&self) -> SignificanceParams {
        SignificanceParams {
            n_bootstrap: self.n_bootstrap,
            sign_stability: self.sign_stability,
            min_weight: self.min_weight,
            min_cluster_size: self.min_cluster_size,
        }
    }
}

fn default_id_column() -> String {
    "id".into()
}
fn default_target_column() -> String {
    "gpa".into()
}
fn default_min_observed() -> usize {
    DEFAULT_MIN_OBSERVED
}
fn default_holdout() -> f64 {
    0.2
}

/// One JSON document describing a full run. Unknown keys are rejected and
/// the seed has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: PathBuf,
    #[serde(default)]
    pub metadata: Option<PathBuf>,
    pub target: PathBuf,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    #[serde(default = "default_target_column")]
    pub target_column: String,
    #[serde(default)]
    pub missing_codes: Vec<String>,
    #[serde(default)]
    pub negative_exempt: Vec<String>,
    #[serde(default = "default_min_observed")]
    pub min_observed: usize,
    #[serde(default)]
    pub impute: ImputeParams,
    #[serde(default)]
    pub select: SelectConfig,
    #[serde(default)]
    pub discretize: Discretization,
    #[serde(default)]
    pub forest: ForestParams,
    /// Share of rows held out for the regression MSE report.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default)]
    pub cart_max_depth: Option<usize>,
    #[serde(default)]
    pub logistic: LogisticParams,
    #[serde(default)]
    pub lime: LimeConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl PipelineConfig {
    /// Reads a config file; relative input and output paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data);
        resolve(&mut cfg.target);
        if let Some(m) = cfg.metadata.as_mut() {
            resolve(m);
        }
        if let Some(o) = cfg.output_dir.as_mut() {
            resolve(o);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad(format!(
                "holdout_fraction must lie in (0, 1), got {}",
                self.holdout_fraction
            ));
        }
        if self.impute.k == 0 {
            return bad("impute.k must be at least 1".into());
        }
        if self.select.alphas.iter().any(|&a| !(a > 0.0)) {
            return bad("select.alphas must be positive".into());
        }
        if self.select.top_k == 0 {
            return bad("select.top_k must be at least 1".into());
        }
        if self.forest.n_trees == 0 || self.select.n_trees == 0 {
            return bad("tree counts must be at least 1".into());
        }
        match self.discretize {
            Discretization::Fixed { low_hi, top_lo } if !(low_hi < top_lo) => {
                return bad(format!(
                    "discretize: low_hi {low_hi} must be below top_lo {top_lo}"
                ));
            }
            Discretization::Percentile { q } if !(q > 0.0 && q < 0.5) => {
                return bad(format!("discretize: q must lie in (0, 0.5), got {q}"));
            }
            _ => {}
        }
        if self.lime.n_samples == 0 {
            return bad("lime.n_samples must be at least 1".into());
        }
        if self.cluster.k == 0 || self.cluster.n_init == 0 {
            return bad("cluster.k and cluster.n_init must be at least 1".into());
        }
        if !(self.cluster.merge_threshold > 0.0) {
            return bad("cluster.merge_threshold must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    /// The configuration as recorded in the manifest: every effective
    /// parameter, without the output location or thread count, which do not
    /// affect results.
    pub fn effective(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        serde_json::to_value(&c).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("config.json");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn defaults_fill_in() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"data": "d.csv", "target": "t.csv", "seed": 3}"#,
        );
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.min_observed, 400);
        assert_eq!(c.impute.k, 100);
        assert_eq!(c.select.alphas, vec![0.004, 0.000004]);
        assert_eq!(c.select.top_k, 500);
        assert_eq!(c.select.n_trees, 500);
        assert_eq!(c.forest.n_trees, 500);
        assert_eq!(c.cluster.k, 5);
        assert_eq!(c.cluster.merge_threshold, 0.95);
        assert_eq!(c.lime.n_samples, 5000);
        assert_eq!(c.discretize, Discretization::default());
        assert_eq!(c.data, dir.path().join("d.csv"));
    }

    #[test]
    fn seed_is_mandatory_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), r#"{"data": "d.csv", "target": "t.csv"}"#);
        assert!(matches!(PipelineConfig::load(&p), Err(Error::Config(_))));
        let p = write(
            dir.path(),
            r#"{"data": "d.csv", "target": "t.csv", "seed": 1, "sed": 2}"#,
        );
        assert!(matches!(PipelineConfig::load(&p), Err(Error::Config(_))));
        let p = write(
            dir.path(),
            r#"{"data": "d.csv", "target": "t.csv", "seed": 1, "impute": {"kk": 3}}"#,
        );
        assert!(matches!(PipelineConfig::load(&p), Err(Error::Config(_))));
    }

    #[test]
    fn percentile_mode_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"data": "/a.csv", "target": "/b.csv", "seed": 1, "discretize": {"mode": "percentile", "q": 0.3}}"#,
        );
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.discretize, Discretization::Percentile { q: 0.3 });
        assert_eq!(c.data, PathBuf::from("/a.csv"));
        let p = write(
            dir.path(),
            r#"{"data": "/a.csv", "target": "/b.csv", "seed": 1, "discretize": {"mode": "percentile", "q": 0.7}}"#,
        );
        assert!(PipelineConfig::load(&p).is_err());
    }

    #[test]
    fn effective_config_ignores_output_and_threads() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            r#"{"data": "d.csv", "target": "t.csv", "seed": 3}"#,
        );
        let a = PipelineConfig::load(&p).unwrap();
        let b = PipelineConfig {
            output_dir: Some("elsewhere".into()),
            threads: Some(4),
            ..a.clone()
        };
        assert_eq!(a.effective(), b.effective());
        assert!(a.effective().get("seed").is_some());
    }
}
