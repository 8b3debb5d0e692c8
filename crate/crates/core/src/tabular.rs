//! Survey tables with missingness masks, CSV ingestion, column filters and
//! target discretization.
//!
//! Values are stored column-major. A cell whose mask bit is `false` is
//! unobserved and its stored value is meaningless; the filters below never
//! read it.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::{format_sig9, Scalar};

/// Respondent and wave tags for one survey column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub respondent: String,
    pub wave: u8,
    /// Exempts the column from negative-value masking.
    #[serde(default)]
    pub allow_negative: bool,
}

impl ColumnMeta {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            respondent: "unknown".to_string(),
            wave: 0,
            allow_negative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table<F> {
    n_rows: usize,
    values: Vec<Vec<F>>,
    mask: Vec<Vec<bool>>,
    columns: Vec<ColumnMeta>,
    row_ids: Vec<String>,
}

impl<F: Scalar> Table<F> {
    /// Builds a table from column vectors. `mask[j][i]` is true when cell
    /// (i, j) is observed.
    pub fn from_columns(
        values: Vec<Vec<F>>,
        mask: Vec<Vec<bool>>,
        columns: Vec<ColumnMeta>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let n_rows = row_ids.len();
        if values.len() != columns.len() || mask.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                found: values.len().min(mask.len()),
            });
        }
        for (v, m) in values.iter().zip(&mask) {
            if v.len() != n_rows || m.len() != n_rows {
                return Err(Error::DimensionMismatch {
                    expected: n_rows,
                    found: v.len().min(m.len()),
                });
            }
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if c.name.is_empty() {
                return Err(Error::Metadata {
                    column: String::new(),
                    message: "empty column name".into(),
                });
            }
            if c.wave > 5 {
                return Err(Error::Metadata {
                    column: c.name.clone(),
                    message: format!("wave {} outside 0..=5", c.wave),
                });
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateColumn(c.name.clone()));
            }
        }
        let mut ids = HashSet::new();
        for id in &row_ids {
            if !ids.insert(id.as_str()) {
                return Err(Error::DuplicateRowId(id.clone()));
            }
        }
        Ok(Self {
            n_rows,
            values,
            mask,
            columns,
            row_ids,
        })
    }

    /// Fully observed table from a matrix.
    pub fn from_matrix(
        x: &Matrix<F>,
        columns: Vec<ColumnMeta>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        let values = x.to_columns();
        let mask = vec![vec![true; x.rows()]; x.cols()];
        Self::from_columns(values, mask, columns, row_ids)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn column_values(&self, j: usize) -> &[F] {
        &self.values[j]
    }

    pub fn column_mask(&self, j: usize) -> &[bool] {
        &self.mask[j]
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[j][i]
    }

    /// The cell value if observed.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<F> {
        self.mask[j][i].then(|| self.values[j][i])
    }

    pub fn observed_count(&self, j: usize) -> usize {
        self.mask[j].iter().filter(|&&m| m).count()
    }

    pub fn total_observed(&self) -> usize {
        (0..self.n_cols()).map(|j| self.observed_count(j)).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|c| c.iter().all(|&m| m))
    }

    pub fn observed_values(&self, j: usize) -> impl Iterator<Item = F> + '_ {
        self.values[j]
            .iter()
            .zip(&self.mask[j])
            .filter_map(|(&v, &m)| m.then_some(v))
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        Self {
            n_rows: self.n_rows,
            values: keep.iter().map(|&j| self.values[j].clone()).collect(),
            mask: keep.iter().map(|&j| self.mask[j].clone()).collect(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            row_ids: self.row_ids.clone(),
        }
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, keep: &[usize]) -> Self {
        Self {
            n_rows: keep.len(),
            values: self
                .values
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect(),
            mask: self
                .mask
                .iter()
                .map(|c| keep.iter().map(|&i| c[i]).collect())
                .collect(),
            columns: self.columns.clone(),
            row_ids: keep.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Dense row-major copy; fails if any cell is unobserved.
    pub fn to_matrix(&self) -> Result<Matrix<F>> {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols());
        for j in 0..self.n_cols() {
            for i in 0..self.n_rows {
                if !self.mask[j][i] {
                    return Err(Error::InsufficientData(format!(
                        "cell ({i}, {j}) is unobserved; impute first"
                    )));
                }
                m.set(i, j, self.values[j][i]);
            }
        }
        Ok(m)
    }

    pub(crate) fn set_imputed(&mut self, i: usize, j: usize, v: F) {
        self.values[j][i] = v;
        self.mask[j][i] = true;
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Writes the table as CSV: `id` column first, unobserved cells empty,
    /// values with 9 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&csv_field("id"));
        for c in &self.columns {
            out.push(',');
            out.push_str(&csv_field(&c.name));
        }
        out.push('\n');
        for i in 0..self.n_rows {
            out.push_str(&csv_field(&self.row_ids[i]));
            for j in 0..self.n_cols() {
                out.push(',');
                if let Some(v) = self.get(i, j) {
                    out.push_str(&format_sig9(v.as_f64()));
                }
            }
            out.push('\n');
        }
        write_file(path, out.as_bytes())
    }

    /// Writes the `name,respondent,wave` sidecar.
    pub fn write_metadata_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("name,respondent,wave\n");
        for c in &self.columns {
            out.push_str(&format!(
                "{},{},{}\n",
                csv_field(&c.name),
                csv_field(&c.respondent),
                c.wave
            ));
        }
        write_file(path, out.as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Cell contents treated as missing, compared both textually and numerically.
    pub missing_codes: Vec<String>,
    /// Column holding subject identifiers; row numbers are used when absent.
    pub id_column: Option<String>,
    /// Optional `name,respondent,wave` sidecar.
    pub metadata: Option<std::path::PathBuf>,
    /// Columns whose negative values are legitimate measurements.
    pub negative_exempt: Vec<String>,
}

fn csv_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut records = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                // 1-based data row, header excluded
                row: k + 1,
                expected: header.len(),
                found: rec.len(),
            });
        }
        records.push(rec);
    }
    Ok((header, records))
}

fn parse_metadata(path: &Path) -> Result<HashMap<String, (String, u8)>> {
    let (header, records) = read_records(path)?;
    let pos = |name: &str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| csv_error(path, format!("metadata sidecar lacks a {name:?} column")))
    };
    let (ni, ri, wi) = (pos("name")?, pos("respondent")?, pos("wave")?);
    let mut out = HashMap::new();
    for rec in &records {
        let name = rec[ni].trim().to_string();
        let wave: u8 = rec[wi].trim().parse().map_err(|_| Error::Metadata {
            column: name.clone(),
            message: format!("wave {:?} is not an integer", &rec[wi]),
        })?;
        if wave > 5 {
            return Err(Error::Metadata {
                column: name,
                message: format!("wave {wave} outside 0..=5"),
            });
        }
        out.insert(name, (rec[ri].trim().to_string(), wave));
    }
    Ok(out)
}

/// Reads a header-first CSV into a [`Table`]. Empty, non-numeric and
/// missing-code cells become unobserved.
pub fn load_csv<F: Scalar>(path: &Path, opts: &CsvOptions) -> Result<Table<F>> {
    let (header, records) = read_records(path)?;
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let id_col = match &opts.id_column {
        Some(name) => header.iter().position(|h| h == name),
        None => None,
    };
    let text_codes: HashSet<&str> = opts.missing_codes.iter().map(|s| s.trim()).collect();
    let numeric_codes: Vec<f64> = opts
        .missing_codes
        .iter()
        .filter_map(|s| s.trim().parse::<f64>().ok())
        .collect();
    let meta = match &opts.metadata {
        Some(p) => parse_metadata(p)?,
        None => HashMap::new(),
    };

    let data_cols: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != id_col).collect();
    let n = records.len();
    let mut values = vec![Vec::with_capacity(n); data_cols.len()];
    let mut mask = vec![Vec::with_capacity(n); data_cols.len()];
    let mut row_ids = Vec::with_capacity(n);
    for (i, rec) in records.iter().enumerate() {
        row_ids.push(match id_col {
            Some(c) => rec[c].trim().to_string(),
            None => i.to_string(),
        });
        for (k, &j) in data_cols.iter().enumerate() {
            let cell = rec[j].trim();
            let parsed = if cell.is_empty() || text_codes.contains(cell) {
                None
            } else {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && !numeric_codes.contains(v))
            };
            match parsed {
                Some(v) => {
                    values[k].push(F::lit(v));
                    mask[k].push(true);
                }
                None => {
                    values[k].push(F::zero());
                    mask[k].push(false);
                }
            }
        }
    }
    let columns = data_cols
        .iter()
        .map(|&j| {
            let name = header[j].clone();
            let mut c = ColumnMeta::new(name.clone());
            if let Some((resp, wave)) = meta.get(&name) {
                c.respondent = resp.clone();
                c.wave = *wave;
            }
            c.allow_negative = opts.negative_exempt.iter().any(|e| e == &name);
            c
        })
        .collect();
    Table::from_columns(values, mask, columns, row_ids)
}

/// Marks every observed negative value as unobserved (survey refusal and
/// skip codes are negative). Columns flagged `allow_negative` are untouched.
pub fn mask_nonpositive_codes<F: Scalar>(t: &Table<F>) -> Table<F> {
    let mut out = t.clone();
    for j in 0..out.n_cols() {
        if out.columns[j].allow_negative {
            continue;
        }
        for i in 0..out.n_rows {
            if out.mask[j][i] && out.values[j][i] < F::zero() {
                out.mask[j][i] = false;
            }
        }
    }
    out
}

/// Removes columns whose observed values are all equal, including columns
/// with fewer than two observed values.
pub fn drop_zero_variance<F: Scalar>(t: &Table<F>) -> Table<F> {
    let keep: Vec<usize> = (0..t.n_cols())
        .filter(|&j| {
            let mut it = t.observed_values(j);
            match it.next() {
                None => false,
                Some(first) => it.any(|v| v != first),
            }
        })
        .collect();
    t.select_columns(&keep)
}

/// Keeps exactly the columns with at least `min_count` observed cells.
pub fn filter_min_observed<F: Scalar>(t: &Table<F>, min_count: usize) -> Table<F> {
    let keep: Vec<usize> = (0..t.n_cols())
        .filter(|&j| t.observed_count(j) >= min_count)
        .collect();
    t.select_columns(&keep)
}

pub const DEFAULT_MIN_OBSERVED: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Low,
    Middle,
    Top,
}

/// Class boundaries: `gpa <= low_hi` is Low, `gpa >= top_lo` is Top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizeParams<F> {
    pub low_hi: F,
    pub top_lo: F,
}

impl<F: Scalar> Default for DiscretizeParams<F> {
    fn default() -> Self {
        Self {
            low_hi: F::lit(2.5),
            top_lo: F::lit(3.25),
        }
    }
}

impl<F: Scalar> DiscretizeParams<F> {
    pub fn new(low_hi: F, top_lo: F) -> Result<Self> {
        if !(low_hi < top_lo) {
            return Err(Error::InvalidParameter(format!(
                "low_hi ({low_hi}) must be below top_lo ({top_lo})"
            )));
        }
        Ok(Self { low_hi, top_lo })
    }
}

pub const GPA_MIN: f64 = 1.0;
pub const GPA_MAX: f64 = 4.0;

pub fn discretize_target<F: Scalar>(gpa: &[F], p: &DiscretizeParams<F>) -> Result<Vec<Label>> {
    if !(p.low_hi < p.top_lo) {
        return Err(Error::InvalidParameter(
            "low_hi must be below top_lo".into(),
        ));
    }
    let (lo, hi) = (F::lit(GPA_MIN), F::lit(GPA_MAX));
    gpa.iter()
        .enumerate()
        .map(|(row, &g)| {
            if !(g >= lo && g <= hi) {
                Err(Error::Domain {
                    row,
                    value: g.as_f64(),
                    lo: GPA_MIN,
                    hi: GPA_MAX,
                })
            } else if g <= p.low_hi {
                Ok(Label::Low)
            } else if g >= p.top_lo {
                Ok(Label::Top)
            } else {
                Ok(Label::Middle)
            }
        })
        .collect()
}

/// Quantile with linear interpolation between order statistics of sorted data.
pub fn quantile_sorted<F: Scalar>(sorted: &[F], q: F) -> F {
    let n = sorted.len();
    let h = q * F::from_usize_lossy(n - 1);
    let lo = h.floor().to_usize().unwrap_or(0).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - F::from_usize_lossy(lo);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Thresholds at the `q` and `1 - q` quantiles.
pub fn percentile_thresholds<F: Scalar>(gpa: &[F], q: F) -> Result<DiscretizeParams<F>> {
    if !(q > F::zero() && q < F::lit(0.5)) {
        return Err(Error::InvalidParameter(format!(
            "quantile {q} outside (0, 0.5)"
        )));
    }
    if gpa.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "percentile thresholds need at least 10 values, got {}",
            gpa.len()
        )));
    }
    if let Some(row) = gpa.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row, column: 0 });
    }
    let mut sorted = gpa.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let low_hi = quantile_sorted(&sorted, q);
    let top_lo = quantile_sorted(&sorted, F::one() - q);
    if !(low_hi < top_lo) {
        return Err(Error::InsufficientData(
            "degenerate target: lower and upper quantiles coincide".into(),
        ));
    }
    Ok(DiscretizeParams { low_hi, top_lo })
}

/// Drops Middle rows; targets are 0 for Low and 1 for Top.
pub fn select_extremes<F: Scalar>(t: &Table<F>, labels: &[Label]) -> Result<(Table<F>, Vec<u8>)> {
    if labels.len() != t.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: t.n_rows(),
            found: labels.len(),
        });
    }
    let keep: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] != Label::Middle)
        .collect();
    let targets: Vec<u8> = keep
        .iter()
        .map(|&i| u8::from(labels[i] == Label::Top))
        .collect();
    let tops = targets.iter().filter(|&&y| y == 1).count();
    let lows = targets.len() - tops;
    if tops < 2 || lows < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 Low and 2 Top rows, found {lows} Low and {tops} Top"
        )));
    }
    Ok((t.select_rows(&keep), targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn table_from(cols: Vec<Vec<Option<f64>>>) -> Table<f64> {
        let n = cols.first().map_or(0, Vec::len);
        let values = cols
            .iter()
            .map(|c| c.iter().map(|v| v.unwrap_or(0.0)).collect())
            .collect();
        let mask = cols
            .iter()
            .map(|c| c.iter().map(Option::is_some).collect())
            .collect();
        let meta = (0..cols.len())
            .map(|j| ColumnMeta::new(format!("c{j}")))
            .collect();
        Table::from_columns(values, mask, meta, (0..n).map(|i| i.to_string()).collect()).unwrap()
    }

    #[test]
    fn load_with_empty_cell() {
        let f = write_tmp("a,b\n1,2\n,3\n4,5\n");
        let t: Table<f64> = load_csv(f.path(), &CsvOptions::default()).unwrap();
        assert_eq!((t.n_rows(), t.n_cols()), (3, 2));
        assert!(!t.is_observed(1, 0));
        assert_eq!(t.total_observed(), 5);
        assert_eq!(t.get(2, 1), Some(5.0));
        assert_eq!(t.columns()[0].respondent, "unknown");
        assert_eq!(t.columns()[0].wave, 0);
    }

    #[test]
    fn load_missing_codes_match_hand_built_mask() {
        let f = write_tmp("id,a,b\nx,-9,2\ny,NA,-9.0\nz,abc,7\n");
        let opts = CsvOptions {
            missing_codes: vec!["-9".into(), "NA".into()],
            id_column: Some("id".into()),
            ..Default::default()
        };
        let t: Table<f64> = load_csv(f.path(), &opts).unwrap();
        let expected = [[false, false, false], [true, false, true]];
        for j in 0..2 {
            assert_eq!(t.column_mask(j), &expected[j]);
        }
        assert_eq!(t.row_ids(), &["x", "y", "z"]);
        assert_eq!(t.columns().len(), 2);
    }

    #[test]
    fn load_rejects_duplicate_header_and_ragged_rows() {
        let f = write_tmp("x,x\n1,2\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), &CsvOptions::default()),
            Err(Error::DuplicateColumn(c)) if c == "x"
        ));
        let f = write_tmp("a,b\n1,2\n3\n");
        assert!(matches!(
            load_csv::<f64>(f.path(), &CsvOptions::default()),
            Err(Error::RaggedRow { row: 2, .. })
        ));
        assert!(matches!(
            load_csv::<f64>(Path::new("/nonexistent/x.csv"), &CsvOptions::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_applies_metadata_sidecar() {
        let data = write_tmp("id,\"q,1\",q2\n1,3,4\n");
        let meta = write_tmp("name,respondent,wave\n\"q,1\",mother,3\n");
        let opts = CsvOptions {
            id_column: Some("id".into()),
            metadata: Some(meta.path().to_path_buf()),
            ..Default::default()
        };
        let t: Table<f32> = load_csv(data.path(), &opts).unwrap();
        assert_eq!(t.columns()[0].respondent, "mother");
        assert_eq!(t.columns()[0].wave, 3);
        assert_eq!(t.columns()[1].respondent, "unknown");
        let bad = write_tmp("name,respondent,wave\nq2,kid,9\n");
        let opts = CsvOptions {
            metadata: Some(bad.path().to_path_buf()),
            ..Default::default()
        };
        assert!(matches!(
            load_csv::<f64>(data.path(), &opts),
            Err(Error::Metadata { .. })
        ));
    }

    #[test]
    fn csv_roundtrip_preserves_mask() {
        let t = table_from(vec![
            vec![Some(1.5), None, Some(-2.0)],
            vec![Some(0.1), Some(2.0), None],
        ]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        t.write_csv(&p).unwrap();
        let opts = CsvOptions {
            id_column: Some("id".into()),
            ..Default::default()
        };
        let back: Table<f64> = load_csv(&p, &opts).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn negative_values_become_unobserved() {
        let t = table_from(vec![
            vec![Some(1.0), Some(-3.0), Some(2.0)],
            vec![Some(0.0), Some(1.0), Some(2.0)],
            vec![Some(-1.0), Some(-2.0), Some(-0.5)],
        ]);
        let m = mask_nonpositive_codes(&t);
        assert_eq!(m.column_mask(0), &[true, false, true]);
        assert_eq!(m.column_mask(1), t.column_mask(1));
        assert_eq!(m.observed_count(2), 0);
    }

    #[test]
    fn negative_exempt_columns_keep_values() {
        let mut t = table_from(vec![vec![Some(-1.0), Some(2.0)]]);
        t.columns[0].allow_negative = true;
        assert_eq!(mask_nonpositive_codes(&t), t);
    }

    #[test]
    fn zero_variance_columns_removed() {
        let t = table_from(vec![
            vec![Some(5.0), Some(5.0), Some(5.0)],
            vec![Some(5.0), Some(6.0), Some(5.0)],
            vec![None, Some(1.0), None],
            vec![Some(2.0), None, Some(2.0)],
        ]);
        let d = drop_zero_variance(&t);
        assert_eq!(d.n_cols(), 1);
        assert_eq!(d.columns()[0].name, "c1");
    }

    #[test]
    fn min_observed_filter_counts() {
        let t = table_from(vec![
            vec![Some(1.0), None, None],
            vec![Some(1.0), Some(2.0), None],
            vec![Some(1.0), Some(2.0), Some(3.0)],
        ]);
        let f = filter_min_observed(&t, 2);
        let names: Vec<_> = f.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["c1", "c2"]);
        assert_eq!(filter_min_observed(&t, 0), t);
        assert_eq!(filter_min_observed(&t, 4).n_cols(), 0);
    }

    #[test]
    fn discretization_boundaries() {
        let p = DiscretizeParams::default();
        let labels = discretize_target(&[2.5, 3.25, 3.0, 1.0, 4.0], &p).unwrap();
        assert_eq!(
            labels,
            [
                Label::Low,
                Label::Top,
                Label::Middle,
                Label::Low,
                Label::Top
            ]
        );
        assert!(matches!(
            discretize_target(&[2.0, 0.5], &p),
            Err(Error::Domain { row: 1, .. })
        ));
        assert!(Label::Low < Label::Middle && Label::Middle < Label::Top);
    }

    #[test]
    fn percentile_thresholds_match_interpolation_oracle() {
        let gpa: Vec<f64> = (1..=100).map(f64::from).collect();
        // brute force: the q-quantile interpolates order statistics at rank q(n-1)
        let oracle = |q: f64| {
            let rank = q * 99.0;
            let below = (0..100).filter(|&k| (k as f64) <= rank).max().unwrap();
            gpa[below] + (rank - below as f64) * (gpa[below + 1] - gpa[below])
        };
        let p = percentile_thresholds(&gpa, 0.3).unwrap();
        assert!((p.low_hi - 30.7).abs() < 1e-9 && (p.low_hi - oracle(0.3)).abs() < 1e-12);
        assert!((p.top_lo - 70.3).abs() < 1e-9 && (p.top_lo - oracle(0.7)).abs() < 1e-12);

        let sym: Vec<f64> = (-50..=50).map(f64::from).collect();
        let p = percentile_thresholds(&sym, 0.5 - 1e-6).unwrap();
        assert!(p.low_hi < 0.0 && p.top_lo > 0.0);

        assert!(percentile_thresholds(&[2.0; 20], 0.3).is_err());
        assert!(percentile_thresholds(&gpa, 0.5).is_err());
        assert!(percentile_thresholds(&gpa[..5], 0.3).is_err());
    }

    #[test]
    fn extremes_drop_middle() {
        let t = table_from(vec![vec![
            Some(1.0),
            Some(2.0),
            Some(3.0),
            Some(4.0),
            Some(5.0),
        ]]);
        let labels = [
            Label::Low,
            Label::Middle,
            Label::Top,
            Label::Low,
            Label::Top,
        ];
        let (e, y) = select_extremes(&t, &labels).unwrap();
        assert_eq!(y, vec![0, 1, 0, 1]);
        assert_eq!(e.row_ids(), &["0", "2", "3", "4"]);
        assert!(select_extremes(&t, &[Label::Middle; 5]).is_err());
        assert!(select_extremes(&t, &labels[..3]).is_err());
    }

    #[test]
    fn extremes_count_on_generated_gpa() {
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from(11);
        let gpa: Vec<f64> = (0..1000).map(|_| rng.random_range(1.0..4.0)).collect();
        let p = percentile_thresholds(&gpa, 0.3).unwrap();
        let labels = discretize_target(&gpa, &p).unwrap();
        let t = table_from(vec![gpa.iter().map(|&g| Some(g)).collect()]);
        let (e, y) = select_extremes(&t, &labels).unwrap();
        // counting oracle on the raw values
        let expected = gpa
            .iter()
            .filter(|&&g| g <= p.low_hi || g >= p.top_lo)
            .count();
        assert_eq!(e.n_rows(), expected);
        assert!((598..=602).contains(&e.n_rows()), "{}", e.n_rows());
        assert_eq!(y.len(), e.n_rows());
    }

    fn arb_table() -> impl Strategy<Value = Table<f64>> {
        (1usize..8, 1usize..6).prop_flat_map(|(rows, cols)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::option::weighted(0.8, -3i32..4), rows),
                cols,
            )
            .prop_map(|cols| {
                table_from(
                    cols.into_iter()
                        .map(|c| c.into_iter().map(|v| v.map(f64::from)).collect())
                        .collect(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn filters_are_idempotent(t in arb_table(), k in 0usize..6) {
            let a = mask_nonpositive_codes(&t);
            prop_assert_eq!(mask_nonpositive_codes(&a), a.clone());
            let b = drop_zero_variance(&t);
            prop_assert_eq!(drop_zero_variance(&b), b);
            let c = filter_min_observed(&t, k);
            prop_assert_eq!(filter_min_observed(&c, k), c.clone());
            // surviving columns keep their relative order
            let pos: Vec<usize> = c.columns().iter().map(|m| t.column_index(&m.name).unwrap()).collect();
            prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn percentile_classes_have_expected_sizes(seed in 0u64..500, q in 0.05f64..0.45) {
            use rand::Rng as _;
            let mut rng = crate::rng::rng_from(seed);
            let gpa: Vec<f64> = (0..200).map(|_| rng.random_range(1.0..4.0)).collect();
            let p = percentile_thresholds(&gpa, q).unwrap();
            let labels = discretize_target(&gpa, &p).unwrap();
            let m = gpa.len() as f64;
            let low = labels.iter().filter(|&&l| l == Label::Low).count() as f64;
            let top = labels.iter().filter(|&&l| l == Label::Top).count() as f64;
            prop_assert!((low - q * m).abs() <= 1.0 + 1e-9, "low {} vs {}", low, q * m);
            prop_assert!((top - q * m).abs() <= 1.0 + 1e-9, "top {} vs {}", top, q * m);
        }
    }
}
