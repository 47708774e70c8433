//! Tabular binary-classification data: CSV ingestion, validation and
//! stratified train/evaluation splits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Smallest dataset the sweep pipeline accepts.
pub const MIN_ROWS: usize = 10;

/// Numeric features with binary labels, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    id: String,
    n_rows: usize,
    n_cols: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
    feature_names: Vec<String>,
    positive_label: u8,
}

impl Dataset {
    /// Builds a dataset from a flat row-major feature buffer.
    ///
    /// Rejects non-finite features, labels outside {0,1}, a single class
    /// and shape mismatches. The row-count floor ([`MIN_ROWS`]) is not
    /// checked here because evaluation splits of small files legitimately
    /// fall below it; see [`Dataset::check_min_rows`].
    pub fn new(
        id: impl Into<String>,
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<u8>,
        positive_label: u8,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        let n_rows = labels.len();
        if n_cols == 0 {
            return Err(Error::InvalidDataset("no feature columns".into()));
        }
        if features.len() != n_rows * n_cols {
            return Err(Error::InvalidDataset(format!(
                "{} feature values for {n_rows} rows x {n_cols} columns",
                features.len()
            )));
        }
        if positive_label > 1 {
            return Err(Error::InvalidDataset(format!(
                "positive label {positive_label} is not 0 or 1"
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidDataset(format!("label {bad} is not 0 or 1")));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature at row {}, column `{}`",
                pos / n_cols,
                feature_names[pos % n_cols]
            )));
        }
        let ones = labels.iter().filter(|&&l| l == 1).count();
        if ones == 0 || ones == n_rows {
            return Err(Error::InvalidDataset("both classes must be present".into()));
        }
        Ok(Self {
            id: id.into(),
            n_rows,
            n_cols,
            features,
            labels,
            feature_names,
            positive_label,
        })
    }

    /// Convenience constructor from per-row vectors with generated
    /// feature names `x0, x1, ...`.
    pub fn from_rows(
        id: impl Into<String>,
        rows: &[Vec<f64>],
        labels: Vec<u8>,
        positive_label: u8,
    ) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidDataset("ragged feature rows".into()));
        }
        let names = (0..p).map(|j| format!("x{j}")).collect();
        Self::new(id, names, rows.concat(), labels, positive_label)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_cols + j]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn positive_label(&self) -> u8 {
        self.positive_label
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.n_rows - ones, ones]
    }

    /// Majority class; an exact tie resolves to 0.
    pub fn majority_label(&self) -> u8 {
        let [zeros, ones] = self.class_counts();
        u8::from(ones > zeros)
    }

    pub fn check_min_rows(&self) -> Result<()> {
        if self.n_rows < MIN_ROWS {
            return Err(Error::InvalidDataset(format!(
                "`{}` has {} rows, at least {MIN_ROWS} required",
                self.id, self.n_rows
            )));
        }
        Ok(())
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.n_cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(
            self.id.clone(),
            self.feature_names.clone(),
            features,
            labels,
            self.positive_label,
        )
    }
}

/// How the target column is located in the CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
    /// The rightmost column.
    Last,
}

impl TargetColumn {
    /// Interprets a command-line value: a header name, or a zero-based
    /// column index when no column carries that name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impute {
    #[default]
    Reject,
    Mean,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub target: TargetColumn,
    pub positive: Option<String>,
    pub impute: Impute,
    /// Dataset id; the file stem when absent.
    pub id: Option<String>,
}

impl LoadOptions {
    pub fn new(target: TargetColumn) -> Self {
        Self {
            target,
            positive: None,
            impute: Impute::Reject,
            id: None,
        }
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    // str::parse is locale-independent; only '.' is a decimal separator
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Loads a headed UTF-8 CSV. The target column must hold exactly two
/// distinct values; they map to 0/1 in numeric order when both parse as
/// numbers and in lexicographic order otherwise. Without an explicit
/// positive value the minority class of the whole file is positive
/// (label 1 on an exact tie).
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::EmptyFile { path: path.into() });
    }
    let target_idx = match &opts.target {
        TargetColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?,
        TargetColumn::Index(i) => {
            // a header literally named "3" wins over index 3
            match header.iter().position(|h| h == &i.to_string()) {
                Some(named) => named,
                None if *i < header.len() => *i,
                None => return Err(Error::UnknownColumn(i.to_string())),
            }
        }
        TargetColumn::Last => header.len() - 1,
    };
    let target_name = header[target_idx].clone();
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p = feature_names.len();

    let mut raw_targets = Vec::new();
    let mut cells: Vec<Option<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        // header is line 1
        let line = r + 2;
        if record.len() != header.len() {
            return Err(Error::InvalidDataset(format!(
                "{}:{line}: expected {} fields, found {}",
                path.display(),
                header.len(),
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == target_idx {
                raw_targets.push(cell.trim().to_string());
                continue;
            }
            let value = parse_number(cell);
            if value.is_none() && opts.impute == Impute::Reject {
                return Err(Error::MissingValue {
                    path: path.into(),
                    line,
                    column: header[j].clone(),
                });
            }
            cells.push(value);
        }
    }
    if raw_targets.is_empty() {
        return Err(Error::EmptyFile { path: path.into() });
    }

    let features = impute_means(&cells, p, &feature_names, path)?;
    let (labels, positive_label) =
        map_targets(&raw_targets, &target_name, opts.positive.as_deref())?;

    let id = opts.id.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    Dataset::new(id, feature_names, features, labels, positive_label)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidDataset(format!("{}: {other:?}", path.display())),
    }
}

fn impute_means(
    cells: &[Option<f64>],
    p: usize,
    names: &[String],
    path: &Path,
) -> Result<Vec<f64>> {
    let n = cells.len() / p.max(1);
    let mut means = vec![0.0; p];
    for j in 0..p {
        let (sum, count) = (0..n)
            .filter_map(|i| cells[i * p + j])
            .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 && n > 0 {
            return Err(Error::MissingValue {
                path: path.into(),
                line: 2,
                column: names[j].clone(),
            });
        }
        means[j] = sum / count.max(1) as f64;
    }
    Ok(cells
        .iter()
        .enumerate()
        .map(|(k, v)| v.unwrap_or(means[k % p]))
        .collect())
}

fn same_value(a: &str, b: &str) -> bool {
    match (parse_number(a), parse_number(b)) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn map_targets(raw: &[String], column: &str, positive: Option<&str>) -> Result<(Vec<u8>, u8)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in raw {
        *counts.entry(v.as_str()).or_default() += 1;
    }
    // numerically equal spellings ("1" and "1.0") are one class
    let mut distinct: Vec<&str> = Vec::new();
    for v in counts.keys() {
        if !distinct.iter().any(|d| same_value(d, v)) {
            distinct.push(v);
        }
    }
    if distinct.len() != 2 {
        return Err(Error::NotBinaryTarget {
            column: column.to_string(),
            distinct: distinct.len(),
        });
    }
    match (parse_number(distinct[0]), parse_number(distinct[1])) {
        (Some(a), Some(b)) if b < a => distinct.swap(0, 1),
        _ => {}
    }
    let labels: Vec<u8> = raw
        .iter()
        .map(|v| u8::from(!same_value(v, distinct[0])))
        .collect();
    let positive_label = match positive {
        Some(p) => distinct
            .iter()
            .position(|d| same_value(d, p.trim()))
            .ok_or_else(|| Error::UnknownPositiveLabel(p.to_string()))? as u8,
        None => {
            let ones = labels.iter().filter(|&&l| l == 1).count();
            u8::from(ones <= labels.len() - ones)
        }
    };
    Ok((labels, positive_label))
}

/// Stratified train/evaluation partition of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPair {
    pub train: Dataset,
    pub eval: Dataset,
    /// Source row indices of `train`, ascending.
    pub train_rows: Vec<usize>,
    /// Source row indices of `eval`, ascending.
    pub eval_rows: Vec<usize>,
    pub seed: u64,
    pub fraction: f64,
}

/// Stratified split with `round(fraction * n_c)` evaluation rows per
/// class `c`, floored at one row per class on each side. Classes with a
/// single instance cannot be split and yield `DegenerateSplit`.
pub fn split(d: &Dataset, fraction: f64, seed: u64) -> Result<SplitPair> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::DegenerateSplit(format!(
            "fraction {fraction} is outside (0, 1)"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut eval_rows = Vec::new();
    let mut train_rows = Vec::new();
    for class in 0..=1u8 {
        let mut idx: Vec<usize> = (0..d.n_rows()).filter(|&i| d.labels[i] == class).collect();
        let n_c = idx.len();
        if n_c < 2 {
            return Err(Error::DegenerateSplit(format!(
                "class {class} has {n_c} instance(s); each side needs one"
            )));
        }
        let k = ((n_c as f64 * fraction).round() as usize).clamp(1, n_c - 1);
        idx.shuffle(&mut rng);
        eval_rows.extend_from_slice(&idx[..k]);
        train_rows.extend_from_slice(&idx[k..]);
    }
    eval_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok(SplitPair {
        train: d.subset(&train_rows)?,
        eval: d.subset(&eval_rows)?,
        train_rows,
        eval_rows,
        seed,
        fraction,
    })
}

/// Per-column standardization fitted on training rows. Constant columns
/// get unit scale so they map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(d: &Dataset) -> Self {
        let n = d.n_rows() as f64;
        let p = d.n_cols();
        let mut means = vec![0.0; p];
        for i in 0..d.n_rows() {
            for (m, v) in means.iter_mut().zip(d.row(i)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; p];
        for i in 0..d.n_rows() {
            for ((s, v), m) in vars.iter_mut().zip(d.row(i)).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let scales = vars
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { means, scales }
    }

    pub fn transform_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.extend(
            row.iter()
                .zip(&self.means)
                .zip(&self.scales)
                .map(|((v, m), s)| (v - m) / s),
        );
    }

    /// Standardizes a row-major matrix with `self.means.len()` columns.
    pub fn transform(&self, features: &[f64]) -> Vec<f64> {
        let p = self.means.len();
        let mut out = Vec::with_capacity(features.len());
        for row in features.chunks(p) {
            self.transform_row(row, &mut out);
        }
        out
    }
}
