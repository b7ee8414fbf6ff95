//! Mahalanobis metrics in factor form: the matrix `L` with `A = L^T L`,
//! so distances are ordinary Euclidean distances after the linear map `L`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A Mahalanobis metric represented by its linear factor `L` (m x n).
///
/// Rows are eigenvalue-scaled generalized eigenvectors for learned metrics,
/// or the identity for the initial metric. The induced `A = L^T L` is
/// symmetric positive semi-definite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    rows: DMatrix<f64>,
    /// Stable index of this metric within its group.
    pub id: usize,
}

impl Metric {
    /// The identity metric on an `n`-dimensional space (Euclidean distance).
    pub fn identity(n: usize) -> Self {
        Metric { rows: DMatrix::identity(n, n), id: 0 }
    }

    /// Wraps an `m x n` factor matrix.
    ///
    /// # Errors
    /// Rejects empty or non-finite matrices and `m > n`.
    pub fn from_rows(rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::Dimension("metric factor must be non-empty".into()));
        }
        if rows.nrows() > rows.ncols() {
            return Err(Error::Dimension(format!(
                "metric factor has more rows ({}) than columns ({})",
                rows.nrows(),
                rows.ncols()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "metric factor has non-finite entries".into(),
            ));
        }
        Ok(Metric { rows, id: 0 })
    }

    /// The factor matrix `L`.
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// Input dimension `n`.
    pub fn in_dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Output dimension `m` (row count of `L`).
    pub fn out_dim(&self) -> usize {
        self.rows.nrows()
    }

    /// Applies the linear map: returns `L x`.
    ///
    /// # Errors
    /// Dimension mismatch.
    pub fn transform(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "metric expects {} features, got {}",
                self.in_dim(),
                x.len()
            )));
        }
        Ok(&self.rows * x)
    }

    /// Transforms every row of an `N x n` instance matrix: returns `X L^T`.
    pub fn transform_rows(&self, instances: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if instances.ncols() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "metric expects {} features, got {}",
                self.in_dim(),
                instances.ncols()
            )));
        }
        Ok(instances * self.rows.transpose())
    }

    /// Squared metric distance `||L(x - y)||^2`.
    ///
    /// # Errors
    /// Dimension mismatch.
    pub fn dist_sq(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        if x.len() != self.in_dim() || y.len() != self.in_dim() {
            return Err(Error::Dimension(format!(
                "metric expects {}-dimensional points, got {} and {}",
                self.in_dim(),
                x.len(),
                y.len()
            )));
        }
        let diff = x - y;
        Ok((&self.rows * diff).norm_squared())
    }
}

/// Squared Euclidean distance between two rows of (possibly different)
/// instance matrices; the workhorse for distance scans in transformed space.
pub fn row_dist_sq(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut sum = 0.0;
    for c in 0..a.ncols() {
        let d = a[(i, c)] - b[(j, c)];
        sum += d * d;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_column_slice(&[a, b])
    }

    #[test]
    fn transform_identity() {
        let m = Metric::identity(2);
        let out = m.transform(&vec2(1.0, 2.0)).unwrap();
        assert_eq!(out.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn transform_single_row() {
        let m = Metric::from_rows(DMatrix::from_row_slice(1, 2, &[2.0, 0.0])).unwrap();
        let out = m.transform(&vec2(3.0, 5.0)).unwrap();
        assert_eq!(out.as_slice(), &[6.0]);
    }

    #[test]
    fn transform_permutation() {
        let m = Metric::from_rows(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let out = m.transform(&vec2(3.0, 7.0)).unwrap();
        assert_eq!(out.as_slice(), &[7.0, 3.0]);
    }

    #[test]
    fn transform_dimension_mismatch() {
        let m = Metric::identity(2);
        assert!(m.transform(&DVector::from_column_slice(&[1.0])).is_err());
    }

    #[test]
    fn dist_sq_euclidean() {
        let m = Metric::identity(2);
        assert_eq!(m.dist_sq(&vec2(0.0, 0.0), &vec2(3.0, 4.0)).unwrap(), 25.0);
    }

    #[test]
    fn dist_sq_zero_at_equal_points() {
        let m = Metric::from_rows(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.5, -1.0])).unwrap();
        let x = vec2(0.3, -0.7);
        assert_eq!(m.dist_sq(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn dist_sq_single_row_factor() {
        let m = Metric::from_rows(DMatrix::from_row_slice(1, 2, &[2.0, 0.0])).unwrap();
        assert_eq!(m.dist_sq(&vec2(0.0, 1.0), &vec2(1.0, 1.0)).unwrap(), 4.0);
    }

    #[test]
    fn dist_sq_symmetric_and_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let l = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-2.0..2.0));
            let m = Metric::from_rows(l.clone()).unwrap();
            let x = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let y = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let d_xy = m.dist_sq(&x, &y).unwrap();
            let d_yx = m.dist_sq(&y, &x).unwrap();
            assert_eq!(d_xy, d_yx, "symmetry must be exact");
            let a = l.transpose() * &l;
            let diff = &x - &y;
            let quad = (diff.transpose() * a * &diff)[(0, 0)];
            assert!((d_xy - quad).abs() <= 1e-10 * quad.abs().max(1.0));
        }
    }

    #[test]
    fn sqrt_dist_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let l = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-2.0..2.0));
            let m = Metric::from_rows(l).unwrap();
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let y = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let z = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let d = |a: &DVector<f64>, b: &DVector<f64>| m.dist_sq(a, b).unwrap().sqrt();
            assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
        }
    }

    #[test]
    fn scaling_preserves_distance_ranking() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let l = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-2.0..2.0));
        let scaled = Metric::from_rows(&l * 3.0).unwrap();
        let base = Metric::from_rows(l).unwrap();
        let query = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let points: Vec<DVector<f64>> = (0..20)
            .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0)))
            .collect();
        let order = |m: &Metric| {
            let mut idx: Vec<usize> = (0..points.len()).collect();
            let d: Vec<f64> = points.iter().map(|p| m.dist_sq(&query, p).unwrap()).collect();
            idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
            idx
        };
        assert_eq!(order(&base), order(&scaled));
        // And the values scale by c^2 = 9.
        let d0 = base.dist_sq(&query, &points[0]).unwrap();
        let d1 = scaled.dist_sq(&query, &points[0]).unwrap();
        assert!((d1 - 9.0 * d0).abs() <= 1e-10 * d1.abs().max(1.0));
    }
}
