//! Bayesian logistic regression targets and dataset ingestion.

use crate::error::{Result, WvgdError};
use crate::model::TargetModel;
use crate::rng::RngStream;
use std::fmt;
use std::path::Path;

/// The four benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Iris,
    Boston,
    Cancer,
    Diabetes,
}

impl DatasetName {
    pub const ALL: [DatasetName; 4] = [
        DatasetName::Iris,
        DatasetName::Boston,
        DatasetName::Cancer,
        DatasetName::Diabetes,
    ];

    /// (rows, feature columns) of the real dataset; synthetic fallbacks
    /// match these shapes.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            DatasetName::Iris => (150, 4),
            DatasetName::Boston => (506, 13),
            DatasetName::Cancer => (569, 30),
            DatasetName::Diabetes => (442, 10),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DatasetName::Iris => "iris",
            DatasetName::Boston => "boston",
            DatasetName::Cancer => "cancer",
            DatasetName::Diabetes => "diabetes",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for DatasetName {
    type Err = WvgdError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iris" => Ok(DatasetName::Iris),
            "boston" => Ok(DatasetName::Boston),
            "cancer" => Ok(DatasetName::Cancer),
            "diabetes" => Ok(DatasetName::Diabetes),
            other => Err(WvgdError::Dataset(format!("unknown dataset '{other}'"))),
        }
    }
}

/// Logistic regression with a standard Gaussian prior on the weights.
#[derive(Debug, Clone)]
pub struct LogRegTarget {
    /// Standardized n x p feature matrix, row major.
    pub features: Vec<Vec<f64>>,
    /// Binary labels in {0, 1}.
    pub labels: Vec<f64>,
    pub prior_std: f64,
    /// How the raw target column was binarized.
    pub binarization: String,
}

/// log(1 + exp(a)) without overflow.
fn log1p_exp(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl LogRegTarget {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.is_empty() || features[0].is_empty() {
            return Err(WvgdError::Dataset("empty feature matrix".into()));
        }
        let p = features[0].len();
        for row in &features {
            if row.len() != p || row.iter().any(|x| !x.is_finite()) {
                return Err(WvgdError::Dataset("ragged or non-finite features".into()));
            }
        }
        if labels.len() != features.len() || labels.iter().any(|y| *y != 0.0 && *y != 1.0) {
            return Err(WvgdError::Dataset("labels must be 0/1, one per row".into()));
        }
        Ok(Self {
            features,
            labels,
            prior_std: 1.0,
            binarization: String::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.len()
    }
}

impl TargetModel for LogRegTarget {
    fn dim(&self) -> usize {
        self.features[0].len()
    }

    fn log_joint(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.dim(), "weight dimension mismatch");
        let mut ll = 0.0;
        for (row, y) in self.features.iter().zip(&self.labels) {
            let a: f64 = row.iter().zip(w).map(|(x, wk)| x * wk).sum();
            ll += y * a - log1p_exp(a);
        }
        let prior: f64 = w.iter().map(|wk| wk * wk).sum::<f64>()
            / (2.0 * self.prior_std * self.prior_std);
        ll - prior
    }

    fn grad_log_joint(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.dim(), "weight dimension mismatch");
        let mut grad = vec![0.0; w.len()];
        for (row, y) in self.features.iter().zip(&self.labels) {
            let a: f64 = row.iter().zip(w).map(|(x, wk)| x * wk).sum();
            let r = y - sigmoid(a);
            for (g, x) in grad.iter_mut().zip(row) {
                *g += r * x;
            }
        }
        for (g, wk) in grad.iter_mut().zip(w) {
            *g -= wk / (self.prior_std * self.prior_std);
        }
        grad
    }
}

/// Binarizes a raw target column: a two-valued column maps its larger value
/// to 1; anything else is split at the median (strictly greater -> 1).
pub fn binarize(values: &[f64]) -> (Vec<f64>, String) {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() == 2 {
        let hi = distinct[1];
        let labels = values.iter().map(|v| f64::from(*v == hi)).collect();
        return (labels, format!("binary column, {hi} -> 1"));
    }
    let med = median(values);
    let labels = values.iter().map(|v| f64::from(*v > med)).collect();
    (labels, format!("median split at {med}"))
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Standardizes columns to zero mean and unit variance, dropping columns
/// with zero variance. Returns the surviving column indices.
fn standardize(rows: &mut Vec<Vec<f64>>) -> Vec<usize> {
    let n = rows.len();
    let p = rows[0].len();
    let mut kept = Vec::new();
    let mut out: Vec<Vec<f64>> = vec![Vec::new(); n];
    for c in 0..p {
        let mean: f64 = rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var: f64 = rows.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<f64>()
            / (n as f64 - 1.0);
        if var <= 1e-24 {
            continue;
        }
        let std = var.sqrt();
        kept.push(c);
        for (i, row) in rows.iter().enumerate() {
            out[i].push((row[c] - mean) / std);
        }
    }
    *rows = out;
    kept
}

/// Loads a CSV dataset (header row, numeric cells, target in the last
/// column), subsamples `subset_n` rows with the seeded stream, binarizes the
/// subset's targets, and standardizes the subset's features.
pub fn load_dataset(
    name: DatasetName,
    path: &Path,
    subset_n: usize,
    rng: &mut RngStream,
) -> Result<LogRegTarget> {
    if !path.exists() {
        return Err(WvgdError::Dataset(format!(
            "dataset file not found: {}",
            path.display()
        )));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                WvgdError::Dataset(format!(
                    "non-numeric cell '{field}' at row {i}, column {c} of {}",
                    path.display()
                ))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    dataset_from_rows(name, rows, subset_n, rng)
}

/// Shared path for CSV-loaded and in-memory data.
pub fn dataset_from_rows(
    name: DatasetName,
    rows: Vec<Vec<f64>>,
    subset_n: usize,
    rng: &mut RngStream,
) -> Result<LogRegTarget> {
    if rows.is_empty() {
        return Err(WvgdError::Dataset("dataset has no rows".into()));
    }
    if rows[0].len() < 2 {
        return Err(WvgdError::Dataset(
            "dataset needs at least one feature column and a target column".into(),
        ));
    }
    if subset_n > rows.len() {
        return Err(WvgdError::Dataset(format!(
            "subset_n = {subset_n} exceeds the {} available rows",
            rows.len()
        )));
    }
    let chosen = sample_without_replacement(rows.len(), subset_n, rng);
    let mut features: Vec<Vec<f64>> = Vec::with_capacity(subset_n);
    let mut raw_target: Vec<f64> = Vec::with_capacity(subset_n);
    for &i in &chosen {
        let row = &rows[i];
        features.push(row[..row.len() - 1].to_vec());
        raw_target.push(row[row.len() - 1]);
    }
    let (labels, rule) = if name == DatasetName::Iris {
        let first = raw_target
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        (
            raw_target.iter().map(|v| f64::from(*v == first)).collect(),
            format!("iris one-vs-rest, class {first} -> 1"),
        )
    } else {
        binarize(&raw_target)
    };
    standardize(&mut features);
    if features[0].is_empty() {
        return Err(WvgdError::Dataset(
            "all feature columns were constant after subsampling".into(),
        ));
    }
    let mut target = LogRegTarget::new(features, labels)?;
    target.binarization = rule;
    Ok(target)
}

/// Seeded uniform subsample of k indices out of n, in ascending order.
fn sample_without_replacement(n: usize, k: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.index(n - i);
        indices.swap(i, j);
    }
    let mut chosen = indices[..k].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Synthetic stand-in with the same shape as the named dataset: features
/// with a planted two-factor correlation structure, targets from a linear
/// (or logistic, for binary) model.
pub fn synthetic_rows(name: DatasetName, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let (n, p) = name.shape();
    // Factor loadings shared by all rows give strongly correlated columns.
    let loadings: Vec<(f64, f64)> = (0..p)
        .map(|_| (rng.standard_normal(), rng.standard_normal()))
        .collect();
    let true_w: Vec<f64> = (0..p).map(|_| 1.5 * rng.standard_normal()).collect();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let f0 = rng.standard_normal();
        let f1 = rng.standard_normal();
        let mut row: Vec<f64> = loadings
            .iter()
            .map(|(a, b)| a * f0 + b * f1 + 0.4 * rng.standard_normal())
            .collect();
        let score: f64 = row.iter().zip(&true_w).map(|(x, w)| x * w).sum::<f64>()
            / (p as f64).sqrt();
        let target = match name {
            DatasetName::Cancer => f64::from(rng.uniform() < sigmoid(score)),
            DatasetName::Iris => {
                // Three classes split by the latent score.
                if score < -0.5 {
                    0.0
                } else if score < 0.5 {
                    1.0
                } else {
                    2.0
                }
            }
            _ => score + 0.3 * rng.standard_normal(),
        };
        row.push(target);
        rows.push(row);
    }
    rows
}

/// Writes a synthetic dataset as a CSV with a header row and the target in
/// the last column.
pub fn write_synthetic_csv(name: DatasetName, path: &Path, rng: &mut RngStream) -> Result<()> {
    let rows = synthetic_rows(name, rng);
    let mut writer = csv::Writer::from_path(path)?;
    let p = rows[0].len() - 1;
    let mut header: Vec<String> = (0..p).map(|i| format!("x{i}")).collect();
    header.push("target".into());
    writer.write_record(&header)?;
    for row in rows {
        writer.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    writer.flush()?;
    Ok(())
}
