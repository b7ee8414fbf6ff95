//! Fixed reference metrics: Euclidean, PCA rotation, and Fisher LDA.
//!
//! Each baseline is expressed as an ordinary [`Metric`] so the same kNN
//! classifier evaluates all methods.

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{gen_eig_sym_definite, sym_eig, SymMatrix, DEFAULT_RIDGE};
use crate::metric::Metric;

/// The reference transforms a learned metric is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// The identity transform.
    Euclidean,
    /// Principal-component rotation; `None` keeps every direction.
    Pca { target_dim: Option<usize> },
    /// Fisher discriminant directions; `None` keeps `min(C - 1, n)`.
    Lda { target_dim: Option<usize> },
}

/// Fits a baseline metric on (raw) training rows.
///
/// PCA rows are the leading unit eigenvectors of the population
/// covariance. LDA rows are the leading generalized eigenvectors of the
/// between-class versus within-class scatter, unscaled, so they are
/// orthonormal in the regularized within-class inner product.
pub fn fit_baseline(kind: BaselineKind, train: &DMatrix<f64>, labels: &[usize]) -> Result<Metric> {
    let n = train.ncols();
    if train.nrows() == 0 {
        return Err(Error::EmptyInput("baseline needs at least one training row".into()));
    }
    match kind {
        BaselineKind::Euclidean => Ok(Metric::identity(n)),
        BaselineKind::Pca { target_dim } => {
            let dim = check_dim(target_dim, n)?;
            let (_, directions) = principal_directions(train)?;
            let mut rows = DMatrix::zeros(dim, n);
            for r in 0..dim {
                rows.set_row(r, &directions.column(r).transpose());
            }
            Metric::from_rows(rows)
        }
        BaselineKind::Lda { target_dim } => {
            if labels.len() != train.nrows() {
                return Err(Error::Dimension(
                    "label count does not match training rows".into(),
                ));
            }
            let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
            if classes < 2 {
                return Err(Error::InvalidArgument(
                    "LDA needs at least two classes".into(),
                ));
            }
            let natural = (classes - 1).min(n);
            let dim = check_dim(target_dim, natural)?;
            let (sb, sw) = class_scatters(train, labels, classes)?;
            let solved = gen_eig_sym_definite(&sb, &sw, DEFAULT_RIDGE)?;
            let mut rows = DMatrix::zeros(dim, n);
            for r in 0..dim {
                rows.set_row(r, &solved.eigenvectors.column(r).transpose());
            }
            Metric::from_rows(rows)
        }
    }
}

fn check_dim(target_dim: Option<usize>, natural: usize) -> Result<usize> {
    let dim = target_dim.unwrap_or(natural);
    if dim == 0 || dim > natural {
        return Err(Error::InvalidArgument(format!(
            "target dimension {dim} must lie in [1, {natural}]"
        )));
    }
    Ok(dim)
}

/// Population covariance eigendecomposition of the given rows: the mean
/// and the eigenvector columns in descending eigenvalue order.
fn principal_directions(rows: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = rows.ncols();
    let count = rows.nrows() as f64;
    let mean = DVector::from_fn(n, |c, _| rows.column(c).sum() / count);
    let mut cov = DMatrix::zeros(n, n);
    for r in 0..rows.nrows() {
        let d = DVector::from_fn(n, |c, _| rows[(r, c)] - mean[c]);
        cov += &d * d.transpose();
    }
    cov /= count;
    let (_, vectors) = sym_eig(&SymMatrix::new(cov)?);
    Ok((mean, vectors))
}

/// Between-class and within-class scatter matrices.
fn class_scatters(
    train: &DMatrix<f64>,
    labels: &[usize],
    classes: usize,
) -> Result<(SymMatrix, SymMatrix)> {
    let n = train.ncols();
    let rows = train.nrows();
    let mut counts = vec![0usize; classes];
    let mut means = vec![DVector::<f64>::zeros(n); classes];
    for (r, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for j in 0..n {
            means[c][j] += train[(r, j)];
        }
    }
    for c in 0..classes {
        if counts[c] == 0 {
            return Err(Error::InvalidArgument(format!("class {c} has no training rows")));
        }
        means[c] /= counts[c] as f64;
    }
    let grand = DVector::from_fn(n, |j, _| train.column(j).sum() / rows as f64);

    let mut sw = DMatrix::zeros(n, n);
    for (r, &c) in labels.iter().enumerate() {
        let d = DVector::from_fn(n, |j, _| train[(r, j)] - means[c][j]);
        sw += &d * d.transpose();
    }
    let mut sb = DMatrix::zeros(n, n);
    for c in 0..classes {
        let d = &means[c] - &grand;
        sb += &d * d.transpose() * counts[c] as f64;
    }
    Ok((SymMatrix::new(sb)?, SymMatrix::new(sw)?))
}

/// Projects a whole dataset onto the leading principal directions fitted
/// on the selected training rows. Rows are centered with the training
/// mean before projection.
pub fn pca_reduce(data: &Dataset, train_idx: &[usize], target_dim: usize) -> Result<Dataset> {
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("PCA reduction needs training rows".into()));
    }
    let n = data.dim();
    if target_dim == 0 || target_dim > n {
        return Err(Error::InvalidArgument(format!(
            "target dimension {target_dim} must lie in [1, {n}]"
        )));
    }
    let (mean, directions) = principal_directions(&data.rows(train_idx))?;
    let mut projected = DMatrix::zeros(data.len(), target_dim);
    for r in 0..data.len() {
        for k in 0..target_dim {
            let mut z = 0.0;
            for c in 0..n {
                z += (data.instances[(r, c)] - mean[c]) * directions[(c, k)];
            }
            projected[(r, k)] = z;
        }
    }
    Ok(Dataset {
        instances: projected,
        labels: data.labels.clone(),
        class_names: data.class_names.clone(),
    })
}
