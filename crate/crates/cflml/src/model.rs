//! Model persistence as deterministic, versioned JSON.
//!
//! The training rows can be embedded (standardized values, self-contained
//! file) or referenced by CSV path plus checksum and row indices, which
//! keeps model files small for large datasets.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::Model;
use crate::dataset::{load_csv, sniff_header, Standardizer};
use crate::error::{Error, Result};
use crate::group::MetricGroup;
use crate::metric::Metric;
use crate::neighborhood::{CenterMode, FilterKind};

/// Schema version written by this build.
pub const FORMAT_VERSION: u32 = 1;

/// One metric factor in row-major order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricEntry {
    pub m: usize,
    pub n: usize,
    pub rows: Vec<f64>,
}

/// Where the training rows live.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainData {
    /// Standardized training rows stored inline.
    Embedded { instances: Vec<Vec<f64>> },
    /// Raw CSV on disk, pinned by checksum; `train_indices` selects the
    /// rows the model was trained on.
    DataRef { path: String, sha256: String, train_indices: Vec<usize> },
}

/// Training knobs a loaded model needs to classify.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub k: usize,
    pub filter: FilterKind,
    pub center_mode: CenterMode,
    pub theta: f64,
}

/// The on-disk model layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub metrics: Vec<MetricEntry>,
    pub associations: Vec<usize>,
    pub standardizer: Standardizer,
    pub train: TrainData,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub hyperparameters: Hyperparameters,
}

/// How [`save`] should persist the training rows.
#[derive(Debug, Clone, Copy)]
pub enum TrainPayload<'a> {
    /// Embed the standardized rows in the model file.
    Embed,
    /// Reference the source CSV; the indices select the model's training
    /// rows within it.
    Reference { csv_path: &'a Path, train_indices: &'a [usize] },
}

fn model_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Model { path: path.to_path_buf(), message: message.into() }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes a model file. The JSON layout is deterministic, so saving the
/// same model twice produces byte-identical files.
pub fn save(path: &Path, model: &Model, payload: TrainPayload<'_>) -> Result<()> {
    let metrics = model
        .group
        .metrics
        .iter()
        .map(|metric| {
            let rows = metric.rows();
            MetricEntry {
                m: rows.nrows(),
                n: rows.ncols(),
                rows: rows.transpose().as_slice().to_vec(), // column-major source, row-major out
            }
        })
        .collect();
    let train = match payload {
        TrainPayload::Embed => TrainData::Embedded {
            instances: (0..model.train.nrows())
                .map(|r| (0..model.train.ncols()).map(|c| model.train[(r, c)]).collect())
                .collect(),
        },
        TrainPayload::Reference { csv_path, train_indices } => {
            if train_indices.len() != model.train.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "{} train indices given for {} training rows",
                    train_indices.len(),
                    model.train.nrows()
                )));
            }
            TrainData::DataRef {
                path: csv_path.display().to_string(),
                sha256: file_sha256(csv_path)?,
                train_indices: train_indices.to_vec(),
            }
        }
    };
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        metrics,
        associations: model.group.association.clone(),
        standardizer: model.standardizer.clone(),
        train,
        labels: model.labels.clone(),
        class_names: model.class_names.clone(),
        hyperparameters: Hyperparameters {
            k: model.k,
            filter: model.filter,
            center_mode: model.center_mode,
            theta: model.group.theta,
        },
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a model file back into a usable classifier.
///
/// Referenced CSVs are re-read and their checksums verified. Group
/// ambiguities are a training-time artifact and are not persisted; the
/// loaded group carries zeros there.
pub fn load(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| model_err(path, e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(model_err(
            path,
            format!("format version {} unsupported (expected {FORMAT_VERSION})", file.format_version),
        ));
    }
    if file.metrics.is_empty() {
        return Err(model_err(path, "model has no metrics"));
    }

    let mut metrics = Vec::with_capacity(file.metrics.len());
    let mut feat_dim = None;
    for (id, entry) in file.metrics.iter().enumerate() {
        if entry.rows.len() != entry.m * entry.n {
            return Err(model_err(
                path,
                format!("metric {id} declares {}x{} but holds {} values", entry.m, entry.n, entry.rows.len()),
            ));
        }
        if *feat_dim.get_or_insert(entry.n) != entry.n {
            return Err(model_err(path, "metrics disagree on the feature dimension"));
        }
        let mut metric =
            Metric::from_rows(DMatrix::from_row_slice(entry.m, entry.n, &entry.rows))
                .map_err(|e| model_err(path, e.to_string()))?;
        metric.id = id;
        metrics.push(metric);
    }
    let n = feat_dim.expect("at least one metric");

    let train = match &file.train {
        TrainData::Embedded { instances } => {
            if instances.iter().any(|row| row.len() != n) {
                return Err(model_err(path, "embedded rows disagree on the feature dimension"));
            }
            DMatrix::from_fn(instances.len(), n, |r, c| instances[r][c])
        }
        TrainData::DataRef { path: csv, sha256, train_indices } => {
            let csv_path = Path::new(csv);
            let actual = file_sha256(csv_path)?;
            if &actual != sha256 {
                return Err(model_err(
                    path,
                    format!("checksum mismatch for {csv}: expected {sha256}, found {actual}"),
                ));
            }
            let has_header = sniff_header(csv_path)?;
            let data = load_csv(csv_path, has_header, None)?;
            if let Some(&bad) = train_indices.iter().find(|&&i| i >= data.len()) {
                return Err(model_err(path, format!("train index {bad} out of range")));
            }
            if data.dim() != n {
                return Err(model_err(
                    path,
                    format!("referenced data has {} features but the model expects {n}", data.dim()),
                ));
            }
            file.standardizer.apply_rows(&data.rows(train_indices))
        }
    };

    if file.labels.len() != train.nrows() || file.associations.len() != train.nrows() {
        return Err(model_err(path, "label or association count does not match training rows"));
    }
    if let Some(&bad) = file.labels.iter().find(|&&l| l >= file.class_names.len()) {
        return Err(model_err(path, format!("label {bad} has no class name")));
    }
    if let Some(&bad) = file.associations.iter().find(|&&a| a >= metrics.len()) {
        return Err(model_err(path, format!("association {bad} has no metric")));
    }

    let rows = train.nrows();
    Ok(Model {
        group: MetricGroup {
            metrics,
            association: file.associations,
            group_w: vec![0.0; rows],
            theta: file.hyperparameters.theta,
        },
        standardizer: file.standardizer,
        train,
        labels: file.labels,
        class_names: file.class_names,
        k: file.hyperparameters.k,
        filter: file.hyperparameters.filter,
        center_mode: file.hyperparameters.center_mode,
    })
}
