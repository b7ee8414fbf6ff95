//! CSV ingestion, label encoding, feature standardization, and seeded
//! stratified train/validation/test splits.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An in-memory dataset: instances by rows, integer class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// N x n matrix of feature values.
    pub instances: DMatrix<f64>,
    /// Class id per instance, each in `[0, class_names.len())`.
    pub labels: Vec<usize>,
    /// Original label strings in first-appearance order.
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Instance count N.
    pub fn len(&self) -> usize {
        self.instances.nrows()
    }

    /// True when the dataset holds no instances.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature dimension n.
    pub fn dim(&self) -> usize {
        self.instances.ncols()
    }

    /// Number of classes C.
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Copies the selected rows into a new matrix.
    pub fn rows(&self, idx: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(idx.len(), self.dim());
        for (r, &i) in idx.iter().enumerate() {
            out.set_row(r, &self.instances.row(i));
        }
        out
    }

    /// Copies the selected labels.
    pub fn labels_at(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

/// Loads a CSV dataset.
///
/// Feature columns must parse as finite reals; the label column (default:
/// last) is taken as a string and encoded by first appearance. Missing
/// values are a hard error.
///
/// # Errors
/// I/O failure, ragged rows (reported with their row number), and
/// non-numeric or non-finite feature cells (reported with row and column).
pub fn load_csv(
    path: impl AsRef<Path>,
    has_header: bool,
    label_column: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut width: Option<usize> = None;
    let mut features: Vec<f64> = Vec::new();
    let mut label_strings: Vec<String> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if row_idx == 0 && has_header {
            continue;
        }
        let row_no = row_idx + 1; // 1-based, counting the header row if any
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow { row: row_no, expected, got: record.len() });
        }
        let label_col = label_column.unwrap_or(expected.saturating_sub(1));
        if label_col >= expected {
            return Err(Error::InvalidArgument(format!(
                "label column {label_col} out of range for {expected} columns"
            )));
        }
        for (col, cell) in record.iter().enumerate() {
            if col == label_col {
                label_strings.push(cell.to_string());
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| Error::BadCell {
                row: row_no,
                column: col,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::BadCell {
                    row: row_no,
                    column: col,
                    value: cell.to_string(),
                });
            }
            features.push(value);
        }
    }

    let n_rows = label_strings.len();
    if n_rows == 0 {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }
    let n_features = features.len() / n_rows;
    for s in &label_strings {
        if !class_names.iter().any(|c| c == s) {
            class_names.push(s.clone());
        }
        labels.push(class_names.iter().position(|c| c == s).unwrap());
    }

    Ok(Dataset {
        instances: DMatrix::from_row_slice(n_rows, n_features, &features),
        labels,
        class_names,
    })
}

/// Decides whether a CSV's first row is a header.
///
/// The label column (the last one) may legitimately hold strings in every
/// row, so only the remaining cells are probed: if any of them fails to
/// parse as a number, the first row must be a header.
pub fn sniff_header(path: impl AsRef<Path>) -> Result<bool> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let Some(first) = reader.records().next() else {
        return Err(Error::EmptyInput(format!("{} has no rows", path.display())));
    };
    let first = first?;
    if first.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "{} needs at least one feature column and one label column",
            path.display()
        )));
    }
    let header = first
        .iter()
        .take(first.len() - 1)
        .any(|cell| cell.parse::<f64>().is_err());
    Ok(header)
}

/// Per-feature affine normalization fit on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    /// Per-feature training means.
    pub mean: Vec<f64>,
    /// Per-feature training standard deviations (1 for constant features).
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// The identity transform (mean 0, scale 1) in `n` dimensions.
    pub fn identity(n: usize) -> Self {
        Standardizer { mean: vec![0.0; n], scale: vec![1.0; n] }
    }

    /// Standardizes a single point.
    pub fn apply_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| (x[i] - self.mean[i]) / self.scale[i])
    }

    /// Standardizes every row of an instance matrix.
    pub fn apply_rows(&self, instances: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(instances.nrows(), instances.ncols(), |r, c| {
            (instances[(r, c)] - self.mean[c]) / self.scale[c]
        })
    }

    /// Inverts the transform (used to check the round-trip invariant).
    pub fn unapply_rows(&self, instances: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(instances.nrows(), instances.ncols(), |r, c| {
            instances[(r, c)] * self.scale[c] + self.mean[c]
        })
    }
}

/// Fits mean and population standard deviation on the given training rows.
///
/// Constant features (relative std below 1e-12) keep scale 1 so the feature
/// passes through rather than exploding.
///
/// # Errors
/// Empty index list.
pub fn fit_standardizer(data: &Dataset, train_idx: &[usize]) -> Result<Standardizer> {
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("standardizer needs at least one training row".into()));
    }
    let n = data.dim();
    let count = train_idx.len() as f64;
    let mut mean = vec![0.0; n];
    for &i in train_idx {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += data.instances[(i, c)];
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut scale = vec![0.0; n];
    for &i in train_idx {
        for c in 0..n {
            let d = data.instances[(i, c)] - mean[c];
            scale[c] += d * d;
        }
    }
    for c in 0..n {
        let std = (scale[c] / count).sqrt();
        // Relative threshold: constant columns accumulate fp dust.
        scale[c] = if std < 1e-12 * (1.0 + mean[c].abs()) { 1.0 } else { std };
    }
    Ok(Standardizer { mean, scale })
}

/// Split configuration following the benchmark protocol: 80% train / 20%
/// test, with a further 15% of the training set carved out for validation.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_frac: f64,
    pub val_frac_of_train: f64,
    pub stratified: bool,
}

impl SplitSpec {
    /// The protocol defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec { seed, train_frac: 0.80, val_frac_of_train: 0.15, stratified: true }
    }
}

/// Index triple produced by [`split`]: `val` is a subset of `train`, and
/// `train`/`test` partition `[0, N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Training indices with the validation rows removed.
    pub fn pure_train(&self) -> Vec<usize> {
        let val: std::collections::HashSet<usize> = self.val.iter().copied().collect();
        self.train.iter().copied().filter(|i| !val.contains(i)).collect()
    }
}

/// Draws a seeded train/validation/test split.
///
/// Stratified mode permutes each class separately so train/test proportions
/// per class differ from the global fractions by at most one instance.
/// Deterministic for a fixed seed.
///
/// # Errors
/// A class with fewer than two instances cannot be stratified.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<Split> {
    let n = data.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two instances to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let test_frac = 1.0 - spec.train_frac;
    let mut train: Vec<usize> = Vec::new();
    let mut test: Vec<usize> = Vec::new();

    if spec.stratified {
        for c in 0..data.class_count() {
            let mut idx: Vec<usize> =
                (0..n).filter(|&i| data.labels[i] == c).collect();
            if idx.len() < 2 {
                return Err(Error::SingleInstanceClass {
                    name: data.class_names[c].clone(),
                });
            }
            idx.shuffle(&mut rng);
            let n_test = ((idx.len() as f64 * test_frac).round() as usize).min(idx.len() - 1);
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let n_test = ((n as f64 * test_frac).round() as usize).min(n - 1);
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();

    let mut val: Vec<usize> = Vec::new();
    if spec.stratified {
        for c in 0..data.class_count() {
            let mut idx: Vec<usize> =
                train.iter().copied().filter(|&i| data.labels[i] == c).collect();
            idx.shuffle(&mut rng);
            let n_val = ((idx.len() as f64 * spec.val_frac_of_train).round() as usize)
                .min(idx.len().saturating_sub(1));
            val.extend_from_slice(&idx[..n_val]);
        }
    } else {
        let mut idx = train.clone();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * spec.val_frac_of_train).round() as usize)
            .min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..n_val]);
    }
    val.sort_unstable();

    Ok(Split { train, val, test })
}
