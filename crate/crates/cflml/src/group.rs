//! Metric groups and the local-search loop that grows them.
//!
//! A group starts as the identity metric and repeatedly proposes one
//! closed-form child from the currently ambiguous instances. A child is
//! kept only when it strictly lowers the group's validation error; after
//! `backtrace_max` consecutive rejections (or on reaching the metric cap)
//! the search stops.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::classify::{group_error, Model};
use crate::dataset::{fit_standardizer, Dataset, Split};
use crate::error::{Error, Result};
use crate::linalg::{DEFAULT_CUTOFF, DEFAULT_RIDGE};
use crate::metric::Metric;
use crate::neighborhood::{
    ambiguities, build_omega, default_capacity, instance_stats_all, CenterMode, FilterKind,
    InstanceStats, OmegaCache,
};
use crate::offspring::{assemble, scatter_for_instance, solve_child};

/// Default ambiguity threshold above which an instance joins the active set.
pub const DEFAULT_THETA: f64 = 0.1;
/// Default number of consecutive rejections that stops the search.
pub const DEFAULT_BACKTRACE: usize = 5;

/// How offspring weights are derived from the current group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Weights and scatters come from the most recently accepted metric.
    Radical,
    /// Each instance uses its associated metric, weighted by its group
    /// ambiguity.
    Conservative,
}

/// A group of metrics with the per-instance association induced by the
/// min rule over ambiguity weights.
#[derive(Debug, Clone)]
pub struct MetricGroup {
    /// Member metrics; index 0 is the metric the group was seeded with.
    pub metrics: Vec<Metric>,
    /// For each training instance, the index of its associated metric.
    pub association: Vec<usize>,
    /// Group ambiguity `w_i = min_t w_i^(t)`.
    pub group_w: Vec<f64>,
    /// Active-set threshold used during training.
    pub theta: f64,
}

impl MetricGroup {
    /// Instances whose group ambiguity exceeds theta.
    pub fn active_set(&self) -> Vec<bool> {
        self.group_w.iter().map(|&w| w > self.theta).collect()
    }
}

/// Recomputes the association and group ambiguities of `group` against a
/// training set, leaving the metrics themselves untouched.
pub fn recompute_association(
    group: &MetricGroup,
    train: &DMatrix<f64>,
    labels: &[usize],
    omega: &OmegaCache,
    k: usize,
    filter: FilterKind,
) -> Result<MetricGroup> {
    let mut w_per = Vec::with_capacity(group.metrics.len());
    for metric in &group.metrics {
        w_per.push(ambiguities(train, labels, metric, k, omega, filter)?);
    }
    let (association, group_w) = min_rule(&w_per);
    Ok(MetricGroup {
        metrics: group.metrics.clone(),
        association,
        group_w,
        theta: group.theta,
    })
}

/// Applies the min rule: each instance's group ambiguity is its smallest
/// per-metric ambiguity, ties resolved toward the smaller metric index.
fn min_rule(w_per: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
    let n = w_per.first().map_or(0, Vec::len);
    let mut association = vec![0usize; n];
    let mut group_w = w_per.first().cloned().unwrap_or_default();
    for (t, w) in w_per.iter().enumerate().skip(1) {
        for i in 0..n {
            if w[i] < group_w[i] {
                group_w[i] = w[i];
                association[i] = t;
            }
        }
    }
    (association, group_w)
}

/// Knobs for the local-search loop.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub strategy: Strategy,
    /// Upper bound on group size including the seed metric; `None` means
    /// unlimited.
    pub max_metrics: Option<usize>,
    /// Consecutive rejections that terminate the search.
    pub backtrace_max: usize,
    /// Neighborhood size for radii, ambiguities, and classification.
    pub k: usize,
    pub filter: FilterKind,
    pub center_mode: CenterMode,
    /// Active-set threshold on group ambiguity.
    pub theta: f64,
    /// Candidate-neighbor cache capacity; `None` picks the default.
    pub omega_capacity: Option<usize>,
    /// Optional cap on child metric rows.
    pub m_cap: Option<usize>,
    pub ridge: f64,
    pub rel_cutoff: f64,
    /// Carried alongside the data split for reporting; the loop itself is
    /// deterministic given its inputs.
    pub seed: u64,
}

impl EvolutionConfig {
    /// Defaults for everything except the neighborhood size.
    pub fn new(k: usize) -> Self {
        EvolutionConfig {
            strategy: Strategy::Radical,
            max_metrics: None,
            backtrace_max: DEFAULT_BACKTRACE,
            k,
            filter: FilterKind::Gaussian,
            center_mode: CenterMode::Weighted,
            theta: DEFAULT_THETA,
            omega_capacity: None,
            m_cap: None,
            ridge: DEFAULT_RIDGE,
            rel_cutoff: DEFAULT_CUTOFF,
            seed: 0,
        }
    }
}

/// Summary of one training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Metrics in the final group (the seed counts).
    pub accepted_metrics: usize,
    /// Offspring attempts, accepted or not.
    pub attempts: usize,
    /// Validation error after each accepted step, starting with the seed
    /// group's.
    pub validation_error_per_step: Vec<f64>,
    /// Validation error of the final group.
    pub final_val_error: f64,
    pub wall_time_secs: f64,
    /// True when a single-solve run produced no usable metric and the
    /// model fell back to the identity.
    pub fallback_l0: bool,
}

/// Grows a metric group on standardized training data, scoring candidates
/// on the held-out validation rows.
pub fn evolve(
    train: &DMatrix<f64>,
    labels: &[usize],
    val: &DMatrix<f64>,
    val_labels: &[usize],
    cfg: &EvolutionConfig,
) -> Result<(MetricGroup, TrainReport)> {
    let started = Instant::now();
    check_inputs(train, labels, val, val_labels, cfg)?;

    let capacity = cfg.omega_capacity.unwrap_or_else(|| default_capacity(train.nrows(), cfg.k));
    let mut metrics = vec![Metric::identity(train.ncols())];
    let omega = build_omega(train, &metrics[0], capacity)?;
    let mut w_per = vec![ambiguities(train, labels, &metrics[0], cfg.k, &omega, cfg.filter)?];
    let (mut association, mut group_w) = min_rule(&w_per);
    let mut best = group_error(&metrics, &association, train, labels, val, val_labels, cfg.k)?;
    let mut steps = vec![best];

    let cap = cfg.max_metrics.unwrap_or(usize::MAX);
    let mut attempts = 0;
    let mut rejections = 0;
    while metrics.len() < cap && rejections < cfg.backtrace_max {
        attempts += 1;
        let active: Vec<bool> = group_w.iter().map(|&w| w > cfg.theta).collect();
        let proposed =
            propose_child(train, labels, &omega, &metrics, &association, &group_w, &active, cfg)?;
        let Some(mut child) = proposed else {
            rejections += 1;
            continue;
        };
        child.id = metrics.len();

        let w_child = ambiguities(train, labels, &child, cfg.k, &omega, cfg.filter)?;
        let mut metrics_try = metrics.clone();
        metrics_try.push(child);
        let mut w_try = w_per.clone();
        w_try.push(w_child);
        let (assoc_try, gw_try) = min_rule(&w_try);
        let err = group_error(&metrics_try, &assoc_try, train, labels, val, val_labels, cfg.k)?;
        if err < best {
            metrics = metrics_try;
            w_per = w_try;
            association = assoc_try;
            group_w = gw_try;
            best = err;
            steps.push(err);
            rejections = 0;
        } else {
            rejections += 1;
        }
    }

    let group = MetricGroup { metrics, association, group_w, theta: cfg.theta };
    let report = TrainReport {
        accepted_metrics: group.metrics.len(),
        attempts,
        validation_error_per_step: steps,
        final_val_error: best,
        wall_time_secs: started.elapsed().as_secs_f64(),
        fallback_l0: false,
    };
    Ok((group, report))
}

fn check_inputs(
    train: &DMatrix<f64>,
    labels: &[usize],
    val: &DMatrix<f64>,
    val_labels: &[usize],
    cfg: &EvolutionConfig,
) -> Result<()> {
    if train.nrows() == 0 {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    if val.nrows() == 0 {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }
    if labels.len() != train.nrows() || val_labels.len() != val.nrows() {
        return Err(Error::Dimension("label count does not match instance count".into()));
    }
    if val.ncols() != train.ncols() {
        return Err(Error::Dimension(format!(
            "validation dimension {} does not match training dimension {}",
            val.ncols(),
            train.ncols()
        )));
    }
    if cfg.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if cfg.k > train.nrows() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the {} training instances",
            cfg.k,
            train.nrows()
        )));
    }
    if !(0.0..1.0).contains(&cfg.theta) {
        return Err(Error::InvalidArgument(format!("theta must lie in [0, 1), got {}", cfg.theta)));
    }
    Ok(())
}

/// One deterministic offspring attempt. Returns `None` when assembly or
/// the solve yields nothing usable; numeric factorization failures also
/// count as failed attempts rather than hard errors.
#[allow(clippy::too_many_arguments)]
fn propose_child(
    train: &DMatrix<f64>,
    labels: &[usize],
    omega: &OmegaCache,
    metrics: &[Metric],
    association: &[usize],
    group_w: &[f64],
    active: &[bool],
    cfg: &EvolutionConfig,
) -> Result<Option<Metric>> {
    let n = train.nrows();
    let (weights, scatters) = match cfg.strategy {
        Strategy::Radical => {
            let parent = metrics.last().expect("a group always holds at least one metric");
            let stats =
                instance_stats_all(train, labels, parent, cfg.k, omega, cfg.filter, cfg.center_mode)?;
            let mut scatters = Vec::with_capacity(n);
            for (i, st) in stats.iter().enumerate() {
                scatters.push(scatter_for_instance(i, st, omega, labels, train, cfg.filter, parent)?);
            }
            (stats.iter().map(|s| s.w).collect::<Vec<_>>(), scatters)
        }
        Strategy::Conservative => {
            let mut per_metric: Vec<Option<Vec<InstanceStats>>> = vec![None; metrics.len()];
            for &t in association {
                if per_metric[t].is_none() {
                    per_metric[t] = Some(instance_stats_all(
                        train,
                        labels,
                        &metrics[t],
                        cfg.k,
                        omega,
                        cfg.filter,
                        cfg.center_mode,
                    )?);
                }
            }
            let mut scatters = Vec::with_capacity(n);
            for i in 0..n {
                let t = association[i];
                let stats = per_metric[t].as_ref().expect("stats computed for every associated metric");
                scatters.push(scatter_for_instance(
                    i,
                    &stats[i],
                    omega,
                    labels,
                    train,
                    cfg.filter,
                    &metrics[t],
                )?);
            }
            (group_w.to_vec(), scatters)
        }
    };

    let Some(pair) = assemble(&weights, &scatters, active)? else {
        return Ok(None);
    };
    match solve_child(&pair, cfg.m_cap, cfg.ridge, cfg.rel_cutoff) {
        Ok(child) => Ok(child),
        // A non-PSD right side means the assembly itself is wrong; surface it.
        Err(e @ Error::NotPsd(_)) => Err(e),
        Err(_) => Ok(None),
    }
}

/// The shipped training modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Single closed-form solve; no search.
    Cflml1,
    /// Search capped at three metrics including the seed.
    Cflml3,
    /// Search bounded only by the rejection budget (or an explicit cap).
    Em,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cflml1" => Ok(Variant::Cflml1),
            "cflml3" => Ok(Variant::Cflml3),
            "em" => Ok(Variant::Em),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant '{other}' (expected cflml1, cflml3, or em)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Cflml1 => "cflml1",
            Variant::Cflml3 => "cflml3",
            Variant::Em => "em",
        })
    }
}

/// Trains one variant on a dataset split: fits the standardizer on the
/// full training partition, searches on the pure-training rows, and
/// scores candidates on the validation rows.
pub fn train_variant(
    variant: Variant,
    data: &Dataset,
    split: &Split,
    cfg: &EvolutionConfig,
) -> Result<(Model, TrainReport)> {
    let standardizer = fit_standardizer(data, &split.train)?;
    let pure = split.pure_train();
    if pure.is_empty() {
        return Err(Error::EmptyInput("no training rows remain after the validation carve".into()));
    }
    if split.val.is_empty() {
        return Err(Error::EmptyInput("validation set is empty".into()));
    }
    let train = standardizer.apply_rows(&data.rows(&pure));
    let train_labels = data.labels_at(&pure);
    let val = standardizer.apply_rows(&data.rows(&split.val));
    let val_labels = data.labels_at(&split.val);

    let mut cfg = cfg.clone();
    cfg.max_metrics = match variant {
        Variant::Cflml1 => Some(1), // unused; the single solve below bypasses the loop
        Variant::Cflml3 => Some(3),
        Variant::Em => cfg.max_metrics,
    };

    let (group, report) = match variant {
        Variant::Cflml1 => single_solve(&train, &train_labels, &val, &val_labels, &cfg)?,
        Variant::Cflml3 | Variant::Em => evolve(&train, &train_labels, &val, &val_labels, &cfg)?,
    };

    let model = Model {
        group,
        standardizer,
        train,
        labels: train_labels,
        class_names: data.class_names.clone(),
        k: cfg.k,
        filter: cfg.filter,
        center_mode: cfg.center_mode,
    };
    Ok((model, report))
}

/// The no-search variant: one offspring solve from the identity seed. The
/// resulting model holds just that metric; if the solve fails, the model
/// falls back to the identity and says so in the report.
fn single_solve(
    train: &DMatrix<f64>,
    labels: &[usize],
    val: &DMatrix<f64>,
    val_labels: &[usize],
    cfg: &EvolutionConfig,
) -> Result<(MetricGroup, TrainReport)> {
    let started = Instant::now();
    check_inputs(train, labels, val, val_labels, cfg)?;
    let capacity = cfg.omega_capacity.unwrap_or_else(|| default_capacity(train.nrows(), cfg.k));
    let identity = Metric::identity(train.ncols());
    let omega = build_omega(train, &identity, capacity)?;
    let w0 = ambiguities(train, labels, &identity, cfg.k, &omega, cfg.filter)?;
    let active: Vec<bool> = w0.iter().map(|&w| w > cfg.theta).collect();
    let seed_group = MetricGroup {
        metrics: vec![identity],
        association: vec![0; train.nrows()],
        group_w: w0,
        theta: cfg.theta,
    };
    let proposed = propose_child(
        train,
        labels,
        &omega,
        &seed_group.metrics,
        &seed_group.association,
        &seed_group.group_w,
        &active,
        cfg,
    )?;

    let (metrics, fallback) = match proposed {
        Some(mut child) => {
            child.id = 0;
            (vec![child], false)
        }
        None => (seed_group.metrics.clone(), true),
    };
    let group_w = ambiguities(train, labels, &metrics[0], cfg.k, &omega, cfg.filter)?;
    let group = MetricGroup {
        metrics,
        association: vec![0; train.nrows()],
        group_w,
        theta: cfg.theta,
    };
    let err = group_error(&group.metrics, &group.association, train, labels, val, val_labels, cfg.k)?;
    let report = TrainReport {
        accepted_metrics: 1,
        attempts: 1,
        validation_error_per_step: vec![err],
        final_val_error: err,
        wall_time_secs: started.elapsed().as_secs_f64(),
        fallback_l0: fallback,
    };
    Ok((group, report))
}
