//! Candidate-neighbor sets, per-instance neighbor radii, filter weights,
//! and ambiguities under a given metric.
//!
//! The neighbor set Omega_i is computed once (under the initial metric) with
//! generous capacity and reused for every candidate metric, which keeps each
//! evolution step linear in the training size.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{row_dist_sq, Metric};

/// Low-pass filter shape applied to neighbor distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Gaussian,
    Butterworth,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(FilterKind::Gaussian),
            "butterworth" => Ok(FilterKind::Butterworth),
            other => Err(Error::InvalidArgument(format!("unknown filter {other:?}"))),
        }
    }
}

/// Choice of the per-instance center used in scatter matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    /// Filter-weighted mean of same-class neighbors.
    Weighted,
    /// The instance itself.
    #[serde(rename = "self")]
    SelfCentered,
}

impl std::str::FromStr for CenterMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(CenterMode::Weighted),
            "self" => Ok(CenterMode::SelfCentered),
            other => Err(Error::InvalidArgument(format!("unknown center mode {other:?}"))),
        }
    }
}

/// Per-instance candidate neighbor lists of fixed capacity.
#[derive(Debug, Clone)]
pub struct OmegaCache {
    /// For each training instance, other-instance indices sorted by
    /// ascending distance under the construction metric.
    pub omega: Vec<Vec<usize>>,
    /// Metric id used for construction.
    pub built_under: usize,
}

/// Default Omega capacity: `min(N-1, max(50, 5k))`.
pub fn default_capacity(n_train: usize, k: usize) -> usize {
    (n_train.saturating_sub(1)).min(50usize.max(5 * k))
}

/// Builds the candidate-neighbor cache under the given metric.
///
/// Distance ties break toward the smaller index, so the cache is
/// deterministic.
pub fn build_omega(train: &DMatrix<f64>, metric: &Metric, capacity: usize) -> Result<OmegaCache> {
    let n = train.nrows();
    if n < 2 {
        return Err(Error::EmptyInput("need at least two training instances".into()));
    }
    if capacity == 0 {
        return Err(Error::InvalidArgument("omega capacity must be at least 1".into()));
    }
    let t = metric.transform_rows(train)?;
    let cap = capacity.min(n - 1);
    let mut omega = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        scratch.clear();
        for j in 0..n {
            if j != i {
                scratch.push((row_dist_sq(&t, i, &t, j), j));
            }
        }
        scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        omega.push(scratch.iter().take(cap).map(|&(_, j)| j).collect());
    }
    Ok(OmegaCache { omega, built_under: metric.id })
}

/// Filter weight for a neighbor at squared distance `dist_sq` given radius
/// `sigma`: Gaussian `exp(-d^2 / 2 sigma^2)` or Butterworth
/// `1 / (1 + (d^2 / sigma^2)^2)`.
pub fn filter_weight(kind: FilterKind, dist_sq: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    match kind {
        FilterKind::Gaussian => (-dist_sq / (2.0 * s2)).exp(),
        FilterKind::Butterworth => {
            let r = dist_sq / s2;
            1.0 / (1.0 + r * r)
        }
    }
}

/// Neighbor radii: for each instance, the mean distance to its
/// `min(k, available)` nearest same-class members of Omega under `metric`.
///
/// Instances with no same-class candidate fall back to the median of the
/// defined radii; every radius is clamped below by `1e-8 *` the mean radius
/// (or `1e-8` absolute when everything is degenerate).
pub fn neighbor_radii(
    train: &DMatrix<f64>,
    labels: &[usize],
    metric: &Metric,
    k: usize,
    omega: &OmegaCache,
) -> Result<Vec<f64>> {
    let t = metric.transform_rows(train)?;
    radii_from_transformed(&t, labels, k, omega)
}

/// Radius of a single instance (see [`neighbor_radii`]; the fallback and
/// clamp rules are training-set-wide, so the batch is computed anyway).
pub fn neighbor_radius(
    i: usize,
    train: &DMatrix<f64>,
    labels: &[usize],
    metric: &Metric,
    k: usize,
    omega: &OmegaCache,
) -> Result<f64> {
    Ok(neighbor_radii(train, labels, metric, k, omega)?[i])
}

fn radii_from_transformed(
    t: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    omega: &OmegaCache,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let n = t.nrows();
    let mut sigma: Vec<Option<f64>> = vec![None; n];
    let mut dists: Vec<f64> = Vec::new();
    for i in 0..n {
        dists.clear();
        for &j in &omega.omega[i] {
            if labels[j] == labels[i] {
                dists.push(row_dist_sq(t, i, t, j).sqrt());
            }
        }
        if dists.is_empty() {
            continue;
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let take = k.min(dists.len());
        sigma[i] = Some(dists[..take].iter().sum::<f64>() / take as f64);
    }

    let mut defined: Vec<f64> = sigma.iter().flatten().copied().collect();
    let fallback = if defined.is_empty() {
        1e-8
    } else {
        defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mid = defined.len() / 2;
        if defined.len() % 2 == 1 {
            defined[mid]
        } else {
            0.5 * (defined[mid - 1] + defined[mid])
        }
    };
    let mut out: Vec<f64> = sigma.into_iter().map(|s| s.unwrap_or(fallback)).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let floor = if mean > 0.0 { 1e-8 * mean } else { 1e-8 };
    for s in &mut out {
        *s = s.max(floor);
    }
    Ok(out)
}

/// Per-instance filter masses, ambiguity, and center under one metric.
#[derive(Debug, Clone)]
pub struct InstanceStats {
    /// Neighbor radius sigma_i in metric-space distance units.
    pub sigma: f64,
    /// Same-class filter mass.
    pub p_s: f64,
    /// Different-class filter mass.
    pub p_d: f64,
    /// Total mass (`p_s + p_d` exactly).
    pub p_n: f64,
    /// Ambiguity `w = p_d / p_n` (0 when the total mass vanishes).
    pub w: f64,
    /// Center x_i^(c) in original standardized coordinates.
    pub center: DVector<f64>,
}

/// Computes [`InstanceStats`] for every training instance under `metric`.
///
/// Summation runs in Omega's stored order so results are bitwise
/// deterministic.
pub fn instance_stats_all(
    train: &DMatrix<f64>,
    labels: &[usize],
    metric: &Metric,
    k: usize,
    omega: &OmegaCache,
    kind: FilterKind,
    center_mode: CenterMode,
) -> Result<Vec<InstanceStats>> {
    let t = metric.transform_rows(train)?;
    let sigma = radii_from_transformed(&t, labels, k, omega)?;
    let n = train.nrows();
    let dim = train.ncols();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut p_s = 0.0;
        let mut p_d = 0.0;
        let mut center = DVector::zeros(dim);
        for &j in &omega.omega[i] {
            let p = filter_weight(kind, row_dist_sq(&t, i, &t, j), sigma[i]);
            if labels[j] == labels[i] {
                p_s += p;
                if center_mode == CenterMode::Weighted {
                    for c in 0..dim {
                        center[c] += p * train[(j, c)];
                    }
                }
            } else {
                p_d += p;
            }
        }
        let p_n = p_s + p_d;
        let w = if p_n > 0.0 { p_d / p_n } else { 0.0 };
        let center = if center_mode == CenterMode::Weighted && p_s > 0.0 {
            center / p_s
        } else {
            DVector::from_fn(dim, |c, _| train[(i, c)])
        };
        out.push(InstanceStats { sigma: sigma[i], p_s, p_d, p_n, w, center });
    }
    Ok(out)
}

/// Stats for a single instance (computes the batch; see [`neighbor_radius`]).
#[allow(clippy::too_many_arguments)]
pub fn instance_stats(
    i: usize,
    train: &DMatrix<f64>,
    labels: &[usize],
    metric: &Metric,
    k: usize,
    omega: &OmegaCache,
    kind: FilterKind,
    center_mode: CenterMode,
) -> Result<InstanceStats> {
    Ok(instance_stats_all(train, labels, metric, k, omega, kind, center_mode)?
        .swap_remove(i))
}

/// Ambiguities `w_i` for every instance under `metric` (a light view over
/// [`instance_stats_all`]).
pub fn ambiguities(
    train: &DMatrix<f64>,
    labels: &[usize],
    metric: &Metric,
    k: usize,
    omega: &OmegaCache,
    kind: FilterKind,
) -> Result<Vec<f64>> {
    Ok(
        instance_stats_all(train, labels, metric, k, omega, kind, CenterMode::SelfCentered)?
            .into_iter()
            .map(|s| s.w)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line_points() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0])
    }

    #[test]
    fn build_omega_orders_by_distance() {
        let omega = build_omega(&line_points(), &Metric::identity(1), 2).unwrap();
        assert_eq!(omega.omega[0], vec![1, 2]);
        assert_eq!(omega.omega[1], vec![0, 2]);
        assert_eq!(omega.omega[2], vec![1, 0]);
    }

    #[test]
    fn build_omega_saturates_at_all_others() {
        let omega = build_omega(&line_points(), &Metric::identity(1), 99).unwrap();
        for list in &omega.omega {
            assert_eq!(list.len(), 2);
        }
    }

    #[test]
    fn build_omega_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let train = DMatrix::from_fn(50, 3, |_, _| rng.gen_range(-1.0..1.0));
        let omega = build_omega(&train, &Metric::identity(3), 10).unwrap();
        for i in 0..50 {
            // Oracle: the chosen 10 must lexicographically precede every
            // unchosen candidate in (distance, index) order.
            let chosen = &omega.omega[i];
            assert_eq!(chosen.len(), 10);
            let d = |j: usize| row_dist_sq(&train, i, &train, j);
            let worst = chosen
                .iter()
                .map(|&j| (d(j), j))
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
                .unwrap();
            for j in 0..50 {
                if j != i && !chosen.contains(&j) {
                    assert!(
                        (d(j), j) > worst,
                        "unchosen {j} beats chosen worst at instance {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn neighbor_radius_averages_same_class() {
        // Same-class neighbors at distances 1 and 3, k=2 -> sigma 2.
        let train = line_points();
        let labels = vec![0, 0, 0];
        let omega = build_omega(&train, &Metric::identity(1), 2).unwrap();
        let sigma = neighbor_radius(0, &train, &labels, &Metric::identity(1), 2, &omega).unwrap();
        assert!((sigma - 2.0).abs() < 1e-12);
    }

    #[test]
    fn neighbor_radius_k1_nearest_only() {
        let train = DMatrix::from_row_slice(3, 1, &[0.0, 0.5, 3.0]);
        let labels = vec![0, 0, 0];
        let omega = build_omega(&train, &Metric::identity(1), 2).unwrap();
        let sigma = neighbor_radius(0, &train, &labels, &Metric::identity(1), 1, &omega).unwrap();
        assert!((sigma - 0.5).abs() < 1e-12);
    }

    #[test]
    fn neighbor_radius_clamps_duplicates() {
        let train = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let labels = vec![0, 0];
        let omega = build_omega(&train, &Metric::identity(1), 1).unwrap();
        let sigma = neighbor_radius(0, &train, &labels, &Metric::identity(1), 1, &omega).unwrap();
        assert!(sigma > 0.0, "clamp floor must keep sigma positive");
        assert!((sigma - 1e-8).abs() < 1e-20);
    }

    #[test]
    fn filter_weight_is_one_at_zero_distance() {
        assert_eq!(filter_weight(FilterKind::Gaussian, 0.0, 1.5), 1.0);
        assert_eq!(filter_weight(FilterKind::Butterworth, 0.0, 1.5), 1.0);
    }

    #[test]
    fn filter_weight_at_sigma() {
        let g = filter_weight(FilterKind::Gaussian, 4.0, 2.0); // d = sigma = 2
        assert!((g - (-0.5f64).exp()).abs() < 1e-12);
        assert!((g - 0.60653).abs() < 1e-5);
        let b = filter_weight(FilterKind::Butterworth, 4.0, 2.0);
        assert!((b - 0.5).abs() < 1e-12);
    }

    #[test]
    fn filter_weight_strictly_decreasing() {
        for kind in [FilterKind::Gaussian, FilterKind::Butterworth] {
            let mut prev = filter_weight(kind, 0.0, 1.0);
            for step in 1..200 {
                let cur = filter_weight(kind, step as f64 * 0.05, 1.0);
                assert!(cur < prev, "{kind:?} not strictly decreasing at {step}");
                prev = cur;
            }
        }
    }

    #[test]
    fn instance_stats_balanced_neighbors() {
        // One same-class and one different-class neighbor at equal distance.
        let train = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, -1.0]);
        let labels = vec![0, 0, 1];
        let omega = build_omega(&train, &Metric::identity(1), 2).unwrap();
        let stats = instance_stats(
            0,
            &train,
            &labels,
            &Metric::identity(1),
            1,
            &omega,
            FilterKind::Gaussian,
            CenterMode::Weighted,
        )
        .unwrap();
        assert!((stats.p_s - stats.p_d).abs() < 1e-15);
        assert!((stats.w - 0.5).abs() < 1e-15);
        assert_eq!(stats.p_n, stats.p_s + stats.p_d);
    }

    #[test]
    fn instance_stats_all_same_class_is_unambiguous() {
        let train = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let labels = vec![0, 0, 0];
        let omega = build_omega(&train, &Metric::identity(1), 2).unwrap();
        let stats = instance_stats(
            0,
            &train,
            &labels,
            &Metric::identity(1),
            2,
            &omega,
            FilterKind::Gaussian,
            CenterMode::Weighted,
        )
        .unwrap();
        assert_eq!(stats.w, 0.0);
        assert_eq!(stats.p_d, 0.0);
    }

    /// Independent scalar evaluation of the filter-mass formulas on a planted
    /// 6-point set, kept deliberately free of the library's matrix helpers.
    #[test]
    fn instance_stats_matches_direct_evaluation() {
        let pts: [[f64; 2]; 6] =
            [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 0.0], [1.5, 1.0], [-1.0, -1.0]];
        let labels = vec![0, 0, 0, 1, 1, 1];
        let train = DMatrix::from_fn(6, 2, |r, c| pts[r][c]);
        let omega = build_omega(&train, &Metric::identity(2), 5).unwrap();
        let k = 2;
        let stats = instance_stats_all(
            &train,
            &labels,
            &Metric::identity(2),
            k,
            &omega,
            FilterKind::Gaussian,
            CenterMode::Weighted,
        )
        .unwrap();

        let d2 = |a: [f64; 2], b: [f64; 2]| {
            (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
        };
        // Instance 0: same-class distances are 1 (pt 1) and 2 (pt 2).
        let sigma0 = (d2(pts[0], pts[1]).sqrt() + d2(pts[0], pts[2]).sqrt()) / 2.0;
        assert!((stats[0].sigma - sigma0).abs() < 1e-12);
        let mut p_s = 0.0;
        let mut p_d = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for j in 1..6 {
            let p = (-d2(pts[0], pts[j]) / (2.0 * sigma0 * sigma0)).exp();
            if labels[j] == 0 {
                p_s += p;
                cx += p * pts[j][0];
                cy += p * pts[j][1];
            } else {
                p_d += p;
            }
        }
        assert!((stats[0].p_s - p_s).abs() < 1e-12);
        assert!((stats[0].p_d - p_d).abs() < 1e-12);
        assert!((stats[0].w - p_d / (p_s + p_d)).abs() < 1e-12);
        assert!((stats[0].center[0] - cx / p_s).abs() < 1e-12);
        assert!((stats[0].center[1] - cy / p_s).abs() < 1e-12);
    }

    #[test]
    fn ambiguity_properties_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let train = DMatrix::from_fn(30, 2, |_, _| rng.gen_range(-1.0..1.0));
            let labels: Vec<usize> = (0..30).map(|_| rng.gen_range(0..3usize)).collect();
            let omega = build_omega(&train, &Metric::identity(2), 8).unwrap();
            let w = ambiguities(&train, &labels, &Metric::identity(2), 3, &omega, FilterKind::Gaussian)
                .unwrap();
            for (i, &wi) in w.iter().enumerate() {
                assert!((0.0..=1.0).contains(&wi));
                let has_diff = omega.omega[i].iter().any(|&j| labels[j] != labels[i]);
                assert_eq!(wi > 0.0, has_diff, "w > 0 iff a different-class candidate exists");
            }
        }
    }

    #[test]
    fn weighted_center_stays_in_same_class_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let train = DMatrix::from_fn(20, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let omega = build_omega(&train, &Metric::identity(2), 10).unwrap();
        let stats = instance_stats_all(
            &train,
            &labels,
            &Metric::identity(2),
            3,
            &omega,
            FilterKind::Gaussian,
            CenterMode::Weighted,
        )
        .unwrap();
        for (i, s) in stats.iter().enumerate() {
            let same: Vec<usize> = omega.omega[i]
                .iter()
                .copied()
                .filter(|&j| labels[j] == labels[i])
                .collect();
            for c in 0..2 {
                let lo = same.iter().map(|&j| train[(j, c)]).fold(f64::INFINITY, f64::min);
                let hi = same.iter().map(|&j| train[(j, c)]).fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    s.center[c] >= lo - 1e-12 && s.center[c] <= hi + 1e-12,
                    "weighted center outside the same-class bounding box"
                );
            }
        }
    }
}
