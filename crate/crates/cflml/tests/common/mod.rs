//! Shared synthetic datasets and fixture helpers for integration tests.

#![allow(dead_code)] // each integration test binary uses a subset

use std::path::Path;

use cflml::dataset::Dataset;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn dataset_from(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Dataset {
    let n = labels.len();
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    Dataset {
        instances: DMatrix::from_row_slice(n, dim, &features),
        labels,
        class_names: (0..classes).map(|c| format!("c{c}")).collect(),
    }
}

/// Concentric alternating rings.
///
/// Every 1-d projection of this set mixes the two classes thoroughly, so
/// any single global linear discriminant fails while locally adapted
/// metrics do not. The radius is drawn length-uniform, which balances the
/// two class masses.
pub fn rings(n: usize, seed: u64) -> Dataset {
    const R_MAX: f64 = 3.2;
    const BANDS: usize = 8;
    let width = R_MAX / BANDS as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let r: f64 = rng.gen_range(0.0..R_MAX);
        let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let band = ((r / width) as usize).min(BANDS - 1);
        features.push(r * angle.cos());
        features.push(r * angle.sin());
        labels.push(band % 2);
    }
    dataset_from(features, labels, 2)
}

/// Two elongated cluster pairs whose separating directions are
/// orthogonal: on the left the classes split along y inside strips that
/// stretch along x, on the right the split is along x inside strips that
/// stretch along y. One linear metric can fix only one side, so a search
/// that works must grow the group beyond two members' worth of a single
/// boundary.
pub fn blob_pairs(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let long = Normal::new(0.0, 10.0).unwrap();
    let short = Normal::new(0.0, 0.3).unwrap();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2usize {
        let cy = if class == 0 { -0.6 } else { 0.6 };
        for _ in 0..120 {
            features.push(-12.0 + long.sample(&mut rng));
            features.push(cy + short.sample(&mut rng));
            labels.push(class);
        }
    }
    for class in 0..2usize {
        let cx = if class == 0 { 11.4 } else { 12.6 };
        for _ in 0..60 {
            features.push(cx + short.sample(&mut rng));
            features.push(long.sample(&mut rng));
            labels.push(class);
        }
    }
    dataset_from(features, labels, 2)
}

/// Two tight, widely separated Gaussian blobs: every sensible method
/// classifies this perfectly.
pub fn separable_blobs(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2usize {
        let center = if class == 0 { 0.0 } else { 8.0 };
        for _ in 0..n_per_class {
            features.push(center + noise.sample(&mut rng));
            features.push(center + noise.sample(&mut rng));
            labels.push(class);
        }
    }
    dataset_from(features, labels, 2)
}

/// Uniform features with labels drawn independently of them: nothing to
/// learn, so every offspring must be rejected.
pub fn noise_labels(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        features.push(rng.gen_range(-1.0..1.0));
        features.push(rng.gen_range(-1.0..1.0));
        labels.push(rng.gen_range(0..2usize));
    }
    dataset_from(features, labels, 2)
}

/// Writes a dataset as a headered CSV with the label in the last column.
pub fn write_csv(path: &Path, data: &Dataset) {
    let mut text = String::new();
    for c in 0..data.dim() {
        text.push_str(&format!("x{c},"));
    }
    text.push_str("label\n");
    for r in 0..data.len() {
        for c in 0..data.dim() {
            text.push_str(&format!("{},", data.instances[(r, c)]));
        }
        text.push_str(&format!("{}\n", data.class_names[data.labels[r]]));
    }
    std::fs::write(path, text).unwrap();
}
