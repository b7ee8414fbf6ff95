//! Dense symmetric eigendecomposition and the symmetric-definite generalized
//! eigenproblem solver behind the closed-form metric solve.
//!
//! The generalized problem `B y = lambda C y` (B symmetric, C positive
//! semi-definite) is reduced to a standard symmetric problem through a
//! Cholesky factorization of the ridge-regularized C, which is numerically
//! stable and keeps the solver dependency-light.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative ridge added to C (times `trace(C)/n`) before factorization.
pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Default relative cutoff under which generalized eigenvalues are dropped.
pub const DEFAULT_CUTOFF: f64 = 1e-10;

/// A real symmetric matrix, symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    entries: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, enforcing symmetry as `(M + M^T)/2`.
    ///
    /// # Errors
    /// Rejects non-square matrices and non-finite entries.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix has non-finite entries".into(),
            ));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix { entries: sym })
    }

    /// The zero matrix of the given order.
    pub fn zeros(order: usize) -> Self {
        SymMatrix { entries: DMatrix::zeros(order, order) }
    }

    /// Matrix order (row/column count).
    pub fn order(&self) -> usize {
        self.entries.nrows()
    }

    /// Borrow the underlying dense matrix.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Sum of diagonal entries.
    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

/// Solution of a symmetric(-definite) eigenproblem, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct GenEigResult {
    /// Eigenvalues `lambda_1 >= ... >= lambda_r`.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors `y_k` as columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Number of eigenpairs retained (all of them until truncation).
    pub retained: usize,
}

/// Eigendecomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order (ties keep their original
/// index order for determinism) with orthonormal eigenvectors as columns.
pub fn sym_eig(m: &SymMatrix) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.order();
    let eig = nalgebra::SymmetricEigen::new(m.entries.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Solves `B y = lambda C y` for symmetric B and positive semi-definite C.
///
/// C is replaced by `C + eps I` with `eps = ridge * trace(C) / n` before a
/// Cholesky reduction to a standard symmetric problem. Eigenvalues come back
/// descending; eigenvectors are C-orthonormal (against the regularized C).
///
/// # Errors
/// Fails when C has a clearly negative eigenvalue (an upstream scatter
/// assembly bug) or when factorization fails even after regularization.
pub fn gen_eig_sym_definite(b: &SymMatrix, c: &SymMatrix, ridge: f64) -> Result<GenEigResult> {
    let n = b.order();
    if c.order() != n {
        return Err(Error::Dimension(format!(
            "generalized eigenproblem orders differ: B is {}, C is {}",
            n,
            c.order()
        )));
    }
    let eps = ridge * c.trace() / n as f64;
    let creg = c.as_matrix() + DMatrix::<f64>::identity(n, n) * eps;

    let chol = match nalgebra::Cholesky::new(creg.clone()) {
        Some(ch) => ch,
        None => {
            // Distinguish a genuinely indefinite C from borderline failure.
            let (vals, _) = sym_eig(c);
            let min = vals.last().copied().unwrap_or(0.0);
            let scale = c.as_matrix().norm();
            if min < -1e-8 * scale {
                return Err(Error::NotPsd(format!(
                    "C has eigenvalue {min:.3e} (norm {scale:.3e})"
                )));
            }
            return Err(Error::Factorization(
                "Cholesky of regularized C failed".into(),
            ));
        }
    };

    let g = chol.l();
    let s1 = g
        .solve_lower_triangular(b.as_matrix())
        .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
    let reduced = g
        .solve_lower_triangular(&s1.transpose())
        .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;
    let reduced = SymMatrix::new(reduced)?;
    let (values, u) = sym_eig(&reduced);
    let y = g
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::Factorization("singular Cholesky factor".into()))?;

    #[cfg(debug_assertions)]
    {
        // The achievable residual degrades with the conditioning of the
        // regularized C (errors of order eps * kappa survive the Cholesky
        // reduction), so the tripwire scales with a cheap condition
        // estimate from the Cholesky diagonal.
        let bnorm = b.as_matrix().norm();
        let cnorm = creg.norm();
        let gmin = (0..n).map(|i| g[(i, i)]).fold(f64::INFINITY, f64::min);
        let cond_est = cnorm / (gmin * gmin).max(f64::MIN_POSITIVE);
        for (k, &lambda) in values.iter().enumerate() {
            let yk = y.column(k);
            let residual = (b.as_matrix() * yk - (&creg * yk) * lambda).norm();
            let bound = 1e-8
                * (bnorm + lambda.abs() * cnorm)
                * yk.norm().max(1.0)
                * (1.0 + 1e-8 * cond_est)
                + 1e-12;
            debug_assert!(
                residual <= bound,
                "generalized eigenpair residual {residual:.3e} exceeds {bound:.3e}"
            );
        }
    }

    Ok(GenEigResult { eigenvalues: values, eigenvectors: y, retained: n })
}

/// Keeps only eigenpairs with `lambda > rel_cutoff * max(1, |lambda_1|)`.
///
/// An empty result (`retained == 0`) is valid; callers treat it as a failed
/// offspring attempt.
pub fn positive_truncate(r: GenEigResult, rel_cutoff: f64) -> GenEigResult {
    let threshold = rel_cutoff * r.eigenvalues.first().map_or(1.0, |l| l.abs().max(1.0));
    let keep = r.eigenvalues.iter().take_while(|&&l| l > threshold).count();
    let n = r.eigenvectors.nrows();
    let mut vectors = DMatrix::zeros(n, keep);
    for k in 0..keep {
        vectors.set_column(k, &r.eigenvectors.column(k));
    }
    GenEigResult {
        eigenvalues: r.eigenvalues[..keep].to_vec(),
        eigenvectors: vectors,
        retained: keep,
    }
}

/// Explicit-square-root reference solver for the generalized problem.
///
/// Forms `C_reg^{-1/2} B C_reg^{-1/2}` outright and eigendecomposes it.
/// Quadratic-cost and numerically blunter than the Cholesky route, which is
/// exactly why it serves as an independent oracle in tests.
pub fn gen_eig_sqrt_oracle(b: &SymMatrix, c: &SymMatrix, ridge: f64) -> Result<GenEigResult> {
    let n = b.order();
    let eps = ridge * c.trace() / n as f64;
    let creg = SymMatrix::new(c.as_matrix() + DMatrix::<f64>::identity(n, n) * eps)?;
    let (vals, q) = sym_eig(&creg);
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPsd("regularized C not positive definite".into()));
    }
    let inv_sqrt = DMatrix::from_fn(n, n, |i, j| {
        (0..n).map(|k| q[(i, k)] * q[(j, k)] / vals[k].sqrt()).sum()
    });
    let middle = SymMatrix::new(&inv_sqrt * b.as_matrix() * &inv_sqrt)?;
    let (values, u) = sym_eig(&middle);
    let y = &inv_sqrt * u;
    Ok(GenEigResult { eigenvalues: values, eigenvectors: y, retained: n })
}
