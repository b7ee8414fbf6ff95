//! Weighted scatter-matrix assembly and the closed-form child-metric solve.
//!
//! Each active training instance contributes filter-weighted scatter
//! matrices of its different-class, same-class, and pooled neighbors; the
//! child metric maximizes `Tr(L B L^T)` subject to `L C L^T = I` via one
//! generalized eigenvalue solve, with rows scaled by their eigenvalues.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{gen_eig_sym_definite, positive_truncate, SymMatrix};
use crate::metric::Metric;
use crate::neighborhood::{filter_weight, FilterKind, InstanceStats, OmegaCache};

/// Normalized scatter matrices of one instance's neighborhood, in original
/// standardized coordinates.
#[derive(Debug, Clone)]
pub struct InstanceScatter {
    /// Different-class scatter M̄_D.
    pub diff: DMatrix<f64>,
    /// Same-class scatter M̄_S.
    pub same: DMatrix<f64>,
    /// Pooled scatter M̄_N = (p_S M̄_S + p_D M̄_D) / p_N.
    pub pooled: DMatrix<f64>,
}

/// Aggregated left/right matrices of the generalized eigenproblem.
#[derive(Debug, Clone)]
pub struct ScatterPair {
    /// B = Σ w_i (M̄_D − M̄_S) over active instances.
    pub b: SymMatrix,
    /// C = Σ w_i M̄_N over active instances.
    pub c: SymMatrix,
    /// Number of instances that contributed.
    pub active_count: usize,
}

/// Computes the three normalized scatter matrices for instance `i`.
///
/// Filter weights use metric-space distances (recomputed under `metric`
/// from the stored Omega ordering) while outer products live in the
/// original standardized coordinates. Empty pair sets yield zero matrices,
/// and the pooled matrix satisfies its mass identity exactly by
/// construction.
pub fn scatter_for_instance(
    i: usize,
    stats: &InstanceStats,
    omega: &OmegaCache,
    labels: &[usize],
    train: &DMatrix<f64>,
    kind: FilterKind,
    metric: &Metric,
) -> Result<InstanceScatter> {
    let dim = train.ncols();
    let xi = DVector::from_fn(dim, |c, _| train[(i, c)]);
    let ti = metric.transform(&xi)?;
    let mut m_same = DMatrix::zeros(dim, dim);
    let mut m_diff = DMatrix::zeros(dim, dim);
    let mut p_s = 0.0;
    let mut p_d = 0.0;
    for &j in &omega.omega[i] {
        let xj = DVector::from_fn(dim, |c, _| train[(j, c)]);
        let tj = metric.transform(&xj)?;
        let d_sq = (&ti - &tj).norm_squared();
        let p = filter_weight(kind, d_sq, stats.sigma);
        let offset = &stats.center - &xj;
        let outer = &offset * offset.transpose() * p;
        if labels[j] == labels[i] {
            m_same += outer;
            p_s += p;
        } else {
            m_diff += outer;
            p_d += p;
        }
    }
    let same = if p_s > 0.0 { m_same / p_s } else { DMatrix::zeros(dim, dim) };
    let diff = if p_d > 0.0 { m_diff / p_d } else { DMatrix::zeros(dim, dim) };
    let p_n = p_s + p_d;
    let pooled = if p_n > 0.0 {
        (&same * p_s + &diff * p_d) / p_n
    } else {
        DMatrix::zeros(dim, dim)
    };
    Ok(InstanceScatter { diff, same, pooled })
}

/// Sums the per-instance scatters with the given weights over the active
/// mask. Returns `None` (the failed-attempt sentinel) when nothing
/// contributes — all weights zero or the active set empty.
pub fn assemble(
    weights: &[f64],
    scatters: &[InstanceScatter],
    active: &[bool],
) -> Result<Option<ScatterPair>> {
    if weights.len() != scatters.len() || weights.len() != active.len() {
        return Err(Error::Dimension(
            "weights, scatters, and active mask must have equal length".into(),
        ));
    }
    let Some(first) = scatters.first() else {
        return Ok(None);
    };
    let dim = first.same.nrows();
    let mut b = DMatrix::zeros(dim, dim);
    let mut c = DMatrix::zeros(dim, dim);
    let mut active_count = 0;
    for i in 0..weights.len() {
        if !active[i] || weights[i] <= 0.0 {
            continue;
        }
        b += (&scatters[i].diff - &scatters[i].same) * weights[i];
        c += &scatters[i].pooled * weights[i];
        active_count += 1;
    }
    if active_count == 0 {
        return Ok(None);
    }
    Ok(Some(ScatterPair {
        b: SymMatrix::new(b)?,
        c: SymMatrix::new(c)?,
        active_count,
    }))
}

/// Solves the closed-form child metric from an assembled scatter pair.
///
/// Returns `Ok(None)` when no positive eigenvalue survives truncation (a
/// failed offspring attempt). Row `k` of the returned factor is
/// `lambda_k * y_k^T`; an optional `m_cap` keeps only the leading rows.
pub fn solve_child(
    sp: &ScatterPair,
    m_cap: Option<usize>,
    ridge: f64,
    rel_cutoff: f64,
) -> Result<Option<Metric>> {
    let solved = gen_eig_sym_definite(&sp.b, &sp.c, ridge)?;
    let kept = positive_truncate(solved, rel_cutoff);
    if kept.retained == 0 {
        return Ok(None);
    }

    #[cfg(debug_assertions)]
    {
        // Closed-form optimality bookkeeping, checked against the
        // regularized C the solver actually used: Tr(Y B Y^T) = sum of
        // eigenvalues and Y C Y^T = I.
        let n = sp.b.order();
        let eps = ridge * sp.c.trace() / n as f64;
        let creg = sp.c.as_matrix() + DMatrix::<f64>::identity(n, n) * eps;
        let y = &kept.eigenvectors;
        let trace_obj = (y.transpose() * sp.b.as_matrix() * y).trace();
        let lambda_sum: f64 = kept.eigenvalues.iter().sum();
        let scale = sp.b.as_matrix().norm().max(1.0);
        debug_assert!(
            (trace_obj - lambda_sum).abs() <= 1e-8 * scale,
            "trace objective {trace_obj} != eigenvalue sum {lambda_sum}"
        );
        let gram = y.transpose() * creg * y;
        let ident = DMatrix::<f64>::identity(kept.retained, kept.retained);
        debug_assert!(
            (gram - ident).norm() <= 1e-8 * (kept.retained as f64).max(1.0),
            "child eigenvectors are not C-orthonormal"
        );
    }

    let rows = m_cap.map_or(kept.retained, |cap| cap.min(kept.retained));
    if rows == 0 {
        return Ok(None);
    }
    let n = sp.b.order();
    let mut l = DMatrix::zeros(rows, n);
    for r in 0..rows {
        for c in 0..n {
            l[(r, c)] = kept.eigenvalues[r] * kept.eigenvectors[(c, r)];
        }
    }
    Ok(Some(Metric::from_rows(l)?))
}
