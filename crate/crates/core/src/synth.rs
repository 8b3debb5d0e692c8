//! Planted-truth survey generator.
//!
//! Every subject belongs to one subgroup. Its GPA is
//! `clip(1 + 3 * sigmoid(sum_j w_j z_j + noise), 1, 4)` over the subgroup's
//! active features, where `z_j` is the feature's latent standard normal
//! value. Observed values are `offset + z_j` (clipped at 0), so they are
//! non-negative and survive negative-code masking. Each of the `markers`
//! marker columns carries `shift * g` for subgroup `g`, making subgroups
//! identifiable from the features. Cells are hidden completely at random and written as the
//! missing code.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::logistic::sigmoid;
use crate::rng::{derive_named, rng_from};
use crate::scalar::format_sig9;
use crate::tabular::{csv_field, write_file, ColumnMeta, Table};

pub const RESPONDENTS: [&str; 4] = ["mother", "father", "child", "teacher"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub features: usize,
    pub informative: usize,
    /// Per subgroup, positions into the informative column list.
    pub active_sets: Vec<Vec<usize>>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub missing_rate: f64,
    pub seed: u64,
    #[serde(default = "default_weight_range")]
    pub weight_range: [f64; 2],
    /// Marker columns per data set when there is more than one subgroup.
    #[serde(default = "default_markers")]
    pub markers: usize,
    #[serde(default = "default_marker_shift")]
    pub marker_shift: f64,
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_missing_code")]
    pub missing_code: String,
}

fn default_noise() -> f64 {
    0.1
}
fn default_weight_range() -> [f64; 2] {
    [1.5, 2.5]
}
fn default_markers() -> usize {
    1
}
fn default_marker_shift() -> f64 {
    6.0
}
fn default_offset() -> f64 {
    5.0
}
fn default_missing_code() -> String {
    "-9".into()
}

impl SyntheticSpec {
    fn marker_count(&self) -> usize {
        if self.active_sets.len() > 1 {
            self.markers
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.rows < 2 {
            return bad("rows must be at least 2".into());
        }
        if self.active_sets.is_empty() {
            return bad("at least one subgroup is required".into());
        }
        let marker = self.marker_count();
        if self.active_sets.len() > 1 && self.markers == 0 {
            return bad("several subgroups need at least one marker column".into());
        }
        if self.informative + marker > self.features {
            return bad(format!(
                "{} informative columns plus {marker} markers exceed {} features",
                self.informative, self.features
            ));
        }
        for (g, set) in self.active_sets.iter().enumerate() {
            if let Some(&p) = set.iter().find(|&&p| p >= self.informative) {
                return bad(format!(
                    "subgroup {g} names informative position {p} of {}",
                    self.informative
                ));
            }
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!(
                "missing_rate must lie in [0, 1), got {}",
                self.missing_rate
            ));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be non-negative, got {}", self.noise));
        }
        let [lo, hi] = self.weight_range;
        if !(0.0 < lo && lo <= hi && hi.is_finite()) {
            return bad(format!(
                "weight_range must satisfy 0 < lo <= hi, got {:?}",
                self.weight_range
            ));
        }
        if self
            .missing_code
            .trim()
            .parse::<f64>()
            .is_ok_and(|v| v >= 0.0)
        {
            return bad("missing_code must not be a non-negative number".into());
        }
        Ok(())
    }
}

/// What the generator planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Informative column indices, ascending.
    pub informative: Vec<usize>,
    /// Per subgroup, column indices driving the target.
    pub active_sets: Vec<Vec<usize>>,
    /// Per subgroup, weights aligned with `active_sets`.
    pub weights: Vec<Vec<f64>>,
    /// Columns shifted by subgroup; empty for a single subgroup.
    pub marker_columns: Vec<usize>,
    pub subgroup: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub table: Table<f64>,
    pub gpa: Vec<f64>,
    pub truth: GroundTruth,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, p, groups) = (spec.rows, spec.features, spec.active_sets.len());
    let mut rng = rng_from(derive_named(spec.seed, "layout"));
    let mut picked = sample(&mut rng, p, spec.informative + spec.marker_count()).into_vec();
    let mut marker_columns = picked.split_off(spec.informative);
    marker_columns.sort_unstable();
    let mut informative = picked;
    informative.sort_unstable();
    let active_sets: Vec<Vec<usize>> = spec
        .active_sets
        .iter()
        .map(|set| set.iter().map(|&k| informative[k]).collect())
        .collect();
    let [lo, hi] = spec.weight_range;
    let weights: Vec<Vec<f64>> = active_sets
        .iter()
        .map(|set| {
            set.iter()
                .map(|_| {
                    let m = if lo < hi {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    };
                    if rng.random::<bool>() {
                        m
                    } else {
                        -m
                    }
                })
                .collect()
        })
        .collect();

    let mut rng = rng_from(derive_named(spec.seed, "subjects"));
    let mut values = vec![vec![0.0; n]; p];
    let mut gpa = Vec::with_capacity(n);
    let mut subgroup = Vec::with_capacity(n);
    let mut latent = vec![0.0; p];
    for i in 0..n {
        let g = rng.random_range(0..groups);
        for (j, z) in latent.iter_mut().enumerate() {
            *z = StandardNormal.sample(&mut rng);
            let shift = if marker_columns.contains(&j) {
                spec.marker_shift * g as f64
            } else {
                0.0
            };
            values[j][i] = (spec.offset + *z + shift).max(0.0);
        }
        let eta: f64 = active_sets[g]
            .iter()
            .zip(&weights[g])
            .map(|(&j, &w)| w * latent[j])
            .sum::<f64>()
            + spec.noise * Distribution::<f64>::sample(&StandardNormal, &mut rng);
        gpa.push((1.0 + 3.0 * sigmoid(eta)).clamp(1.0, 4.0));
        subgroup.push(g);
    }

    let mut rng = rng_from(derive_named(spec.seed, "missingness"));
    let mask: Vec<Vec<bool>> = (0..p)
        .map(|_| {
            (0..n)
                .map(|_| !(rng.random::<f64>() < spec.missing_rate))
                .collect()
        })
        .collect();
    let columns = (0..p)
        .map(|j| ColumnMeta {
            name: format!("f{j:04}"),
            respondent: RESPONDENTS[j % RESPONDENTS.len()].to_string(),
            wave: (j % 6) as u8,
            allow_negative: false,
        })
        .collect();
    let ids = (0..n).map(|i| format!("s{i:05}")).collect();
    let table = Table::from_columns(values, mask, columns, ids)?;
    Ok(SyntheticData {
        table,
        gpa,
        truth: GroundTruth {
            informative,
            active_sets,
            weights,
            marker_columns,
            subgroup,
        },
    })
}

/// File names written by [`write_synthetic`].
pub const DATA_FILE: &str = "data.csv";
pub const METADATA_FILE: &str = "metadata.csv";
pub const TARGET_FILE: &str = "target.csv";
pub const TRUTH_FILE: &str = "truth.json";

/// Writes data, metadata, target and ground-truth files into `dir`. Hidden
/// cells carry `missing_code`.
pub fn write_synthetic(data: &SyntheticData, missing_code: &str, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let t = &data.table;
    let mut out = String::from("id");
    for c in t.columns() {
        out.push(',');
        out.push_str(&csv_field(&c.name));
    }
    out.push('\n');
    for i in 0..t.n_rows() {
        out.push_str(&csv_field(&t.row_ids()[i]));
        for j in 0..t.n_cols() {
            out.push(',');
            match t.get(i, j) {
                Some(v) => out.push_str(&format_sig9(v)),
                None => out.push_str(missing_code),
            }
        }
        out.push('\n');
    }
    write_file(&dir.join(DATA_FILE), out.as_bytes())?;
    t.write_metadata_csv(&dir.join(METADATA_FILE))?;
    let mut target = String::from("id,gpa\n");
    for (id, g) in t.row_ids().iter().zip(&data.gpa) {
        target.push_str(&format!("{},{}\n", csv_field(id), format_sig9(*g)));
    }
    write_file(&dir.join(TARGET_FILE), target.as_bytes())?;
    let truth = serde_json::to_string_pretty(&data.truth).expect("ground truth serializes");
    write_file(&dir.join(TRUTH_FILE), truth.as_bytes())
}

pub fn load_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
