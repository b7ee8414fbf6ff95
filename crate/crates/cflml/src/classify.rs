//! Multi-metric k-nearest-neighbor classification.
//!
//! A query first picks the group metric whose neighborhood it fits best:
//! for each metric, count how many of the query's k nearest training
//! instances under that metric are associated with it, and take the
//! argmax. The query is then labeled by majority vote under the chosen
//! metric.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::group::MetricGroup;
use crate::metric::Metric;
use crate::neighborhood::{CenterMode, FilterKind};

/// A trained classifier: the metric group plus everything needed to map a
/// raw query into the standardized training space.
#[derive(Debug, Clone)]
pub struct Model {
    pub group: MetricGroup,
    pub standardizer: Standardizer,
    /// Standardized training rows.
    pub train: DMatrix<f64>,
    /// Class id per training row.
    pub labels: Vec<usize>,
    /// Class-name table mapping label ids back to input strings.
    pub class_names: Vec<String>,
    pub k: usize,
    pub filter: FilterKind,
    pub center_mode: CenterMode,
}

/// One classified query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    /// Winning class id.
    pub label: usize,
    /// Index of the metric the query was routed to.
    pub chosen_metric: usize,
    /// The k nearest training rows under the chosen metric, nearest first.
    pub neighbor_ids: Vec<usize>,
    /// Votes per class id; sums to k.
    pub vote_counts: Vec<usize>,
}

/// Indices of the k nearest training rows to `query` under `metric`,
/// nearest first; distance ties break toward the smaller index.
pub fn knn_query(
    metric: &Metric,
    query: &DVector<f64>,
    train: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<usize>> {
    if k == 0 || k > train.nrows() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in [1, {}]",
            train.nrows()
        )));
    }
    let t_train = metric.transform_rows(train)?;
    let t_query = metric.transform(query)?;
    Ok(knn_from_transformed(&t_query, &t_train, k))
}

fn knn_from_transformed(t_query: &DVector<f64>, t_train: &DMatrix<f64>, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = (0..t_train.nrows())
        .map(|j| {
            let mut d = 0.0;
            for c in 0..t_train.ncols() {
                let diff = t_query[c] - t_train[(j, c)];
                d += diff * diff;
            }
            (d, j)
        })
        .collect();
    order.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1))
    });
    order.truncate(k);
    order.into_iter().map(|(_, j)| j).collect()
}

/// A metric group bound to its training rows, with per-metric transforms
/// cached so repeated queries stay cheap.
pub struct GroupClassifier<'a> {
    metrics: &'a [Metric],
    association: &'a [usize],
    labels: &'a [usize],
    class_count: usize,
    k: usize,
    transformed: Vec<DMatrix<f64>>,
}

impl<'a> GroupClassifier<'a> {
    pub fn new(
        metrics: &'a [Metric],
        association: &'a [usize],
        train: &DMatrix<f64>,
        labels: &'a [usize],
        class_count: usize,
        k: usize,
    ) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::EmptyInput("classifier needs at least one metric".into()));
        }
        if association.len() != train.nrows() || labels.len() != train.nrows() {
            return Err(Error::Dimension(
                "association and label counts must match the training rows".into(),
            ));
        }
        if k == 0 || k > train.nrows() {
            return Err(Error::InvalidArgument(format!(
                "k = {k} must lie in [1, {}]",
                train.nrows()
            )));
        }
        if let Some(&bad) = association.iter().find(|&&t| t >= metrics.len()) {
            return Err(Error::InvalidArgument(format!(
                "association refers to metric {bad} but the group has {}",
                metrics.len()
            )));
        }
        let transformed = metrics
            .iter()
            .map(|m| m.transform_rows(train))
            .collect::<Result<Vec<_>>>()?;
        Ok(GroupClassifier { metrics, association, labels, class_count, k, transformed })
    }

    /// Routes a standardized query to a metric. A single-metric group
    /// answers immediately without any neighbor queries.
    pub fn select_metric(&self, query: &DVector<f64>) -> Result<usize> {
        if self.metrics.len() == 1 {
            return Ok(0);
        }
        let mut best_t = 0;
        let mut best_count = 0;
        for (t, metric) in self.metrics.iter().enumerate() {
            let tq = metric.transform(query)?;
            let neighbors = knn_from_transformed(&tq, &self.transformed[t], self.k);
            let count = neighbors.iter().filter(|&&j| self.association[j] == t).count();
            if t == 0 || count > best_count {
                best_t = t;
                best_count = count;
            }
        }
        Ok(best_t)
    }

    /// Classifies a standardized query.
    ///
    /// Majority vote over the k nearest neighbors under the chosen
    /// metric; a tied vote goes to the nearest neighbor whose class is
    /// among the tied ones.
    pub fn predict(&self, query: &DVector<f64>) -> Result<Prediction> {
        let chosen = self.select_metric(query)?;
        let tq = self.metrics[chosen].transform(query)?;
        let neighbor_ids = knn_from_transformed(&tq, &self.transformed[chosen], self.k);
        let mut vote_counts = vec![0usize; self.class_count];
        for &j in &neighbor_ids {
            vote_counts[self.labels[j]] += 1;
        }
        let top = *vote_counts.iter().max().expect("at least one class");
        let tied = vote_counts.iter().filter(|&&v| v == top).count();
        let label = if tied == 1 {
            vote_counts.iter().position(|&v| v == top).expect("winner exists")
        } else {
            let nearest_tied = neighbor_ids
                .iter()
                .find(|&&j| vote_counts[self.labels[j]] == top)
                .expect("some neighbor belongs to a tied class");
            self.labels[*nearest_tied]
        };
        Ok(Prediction { label, chosen_metric: chosen, neighbor_ids, vote_counts })
    }
}

/// Misclassification fraction of `queries` (already in the same space as
/// `train`) under a metric group given directly as slices.
pub fn group_error(
    metrics: &[Metric],
    association: &[usize],
    train: &DMatrix<f64>,
    train_labels: &[usize],
    queries: &DMatrix<f64>,
    query_labels: &[usize],
    k: usize,
) -> Result<f64> {
    if queries.nrows() == 0 {
        return Err(Error::EmptyInput("no query rows to evaluate".into()));
    }
    if query_labels.len() != queries.nrows() {
        return Err(Error::Dimension("query label count does not match query rows".into()));
    }
    let class_count = train_labels.iter().copied().max().map_or(0, |m| m + 1);
    let clf = GroupClassifier::new(metrics, association, train, train_labels, class_count, k)?;
    let mut wrong = 0usize;
    for (r, &truth) in query_labels.iter().enumerate() {
        let q = DVector::from_fn(queries.ncols(), |c, _| queries[(r, c)]);
        if clf.predict(&q)?.label != truth {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / queries.nrows() as f64)
}

impl Model {
    /// Binds the group to its training rows for repeated queries.
    pub fn classifier(&self) -> Result<GroupClassifier<'_>> {
        GroupClassifier::new(
            &self.group.metrics,
            &self.group.association,
            &self.train,
            &self.labels,
            self.class_names.len(),
            self.k,
        )
    }

    /// Classifies a single raw-feature query.
    pub fn predict(&self, query: &DVector<f64>) -> Result<Prediction> {
        if query.len() != self.train.ncols() {
            return Err(Error::Dimension(format!(
                "query has {} features but the model expects {}",
                query.len(),
                self.train.ncols()
            )));
        }
        self.classifier()?.predict(&self.standardizer.apply_vec(query))
    }

    /// Misclassification fraction over the selected rows of a dataset.
    ///
    /// Labels are matched through class names, so the dataset's encoding
    /// need not match the model's; a class the model never saw always
    /// counts as an error.
    pub fn evaluate(&self, data: &Dataset, idx: &[usize]) -> Result<f64> {
        if idx.is_empty() {
            return Err(Error::EmptyInput("no rows selected for evaluation".into()));
        }
        if data.dim() != self.train.ncols() {
            return Err(Error::Dimension(format!(
                "dataset has {} features but the model expects {}",
                data.dim(),
                self.train.ncols()
            )));
        }
        let label_map: Vec<Option<usize>> = data
            .class_names
            .iter()
            .map(|name| self.class_names.iter().position(|m| m == name))
            .collect();
        let clf = self.classifier()?;
        let standardized = self.standardizer.apply_rows(&data.instances);
        let mut wrong = 0usize;
        for &i in idx {
            let q = DVector::from_fn(standardized.ncols(), |c, _| standardized[(i, c)]);
            let predicted = clf.predict(&q)?.label;
            match label_map[data.labels[i]] {
                Some(truth) if truth == predicted => {}
                _ => wrong += 1,
            }
        }
        Ok(wrong as f64 / idx.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::DEFAULT_THETA;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model_from(
        metrics: Vec<Metric>,
        association: Vec<usize>,
        train: DMatrix<f64>,
        labels: Vec<usize>,
        class_names: &[&str],
        k: usize,
    ) -> Model {
        let n = train.nrows();
        let dim = train.ncols();
        Model {
            group: MetricGroup { metrics, association, group_w: vec![0.0; n], theta: DEFAULT_THETA },
            standardizer: Standardizer::identity(dim),
            train,
            labels,
            class_names: class_names.iter().map(|s| s.to_string()).collect(),
            k,
            filter: FilterKind::Gaussian,
            center_mode: CenterMode::Weighted,
        }
    }

    #[test]
    fn knn_under_identity_prefers_euclidean_nearest() {
        let train = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let query = DVector::from_row_slice(&[0.0, 0.0]);
        let got = knn_query(&Metric::identity(2), &query, &train, 1).unwrap();
        assert_eq!(got, vec![0]);
    }

    #[test]
    fn knn_respects_the_metric() {
        // Under diag(3, 1) the point on the y axis becomes the nearer one:
        // distances 3 versus 2.
        let train = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let metric =
            Metric::from_rows(DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        let query = DVector::from_row_slice(&[0.0, 0.0]);
        let got = knn_query(&metric, &query, &train, 1).unwrap();
        assert_eq!(got, vec![1]);
    }

    #[test]
    fn knn_distance_ties_break_toward_smaller_index() {
        let train = DMatrix::from_row_slice(3, 1, &[5.0, 5.0, 5.0]);
        let query = DVector::from_row_slice(&[4.0]);
        let got = knn_query(&Metric::identity(1), &query, &train, 2).unwrap();
        assert_eq!(got, vec![0, 1]);
    }

    #[test]
    fn knn_rejects_out_of_range_k() {
        let train = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let query = DVector::from_row_slice(&[0.0]);
        assert!(knn_query(&Metric::identity(1), &query, &train, 0).is_err());
        assert!(knn_query(&Metric::identity(1), &query, &train, 3).is_err());
    }

    #[test]
    fn knn_matches_brute_force_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let train = DMatrix::from_fn(40, 3, |_, _| rng.gen_range(-1.0..1.0));
        for _ in 0..25 {
            let query = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let got = knn_query(&Metric::identity(3), &query, &train, 5).unwrap();
            let mut brute: Vec<(f64, usize)> = (0..40)
                .map(|j| {
                    let mut d = 0.0;
                    for c in 0..3 {
                        let diff = query[c] - train[(j, c)];
                        d += diff * diff;
                    }
                    (d, j)
                })
                .collect();
            brute.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expect: Vec<usize> = brute.iter().take(5).map(|&(_, j)| j).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn single_metric_group_always_selects_zero() {
        let train = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        let labels = vec![0, 1, 1];
        let assoc = vec![0, 0, 0];
        let metrics = vec![Metric::identity(2)];
        let clf = GroupClassifier::new(&metrics, &assoc, &train, &labels, 2, 1).unwrap();
        let got = clf.select_metric(&DVector::from_row_slice(&[9.0, 9.0])).unwrap();
        assert_eq!(got, 0);
    }

    #[test]
    fn metric_selection_follows_unanimous_neighborhoods() {
        // Under the y-only metric the two nearby points are both
        // associated with it; under the identity no neighbor is
        // associated with metric 0. Counts are 0 versus 2.
        let train = DMatrix::from_row_slice(
            4,
            2,
            &[5.0, 0.1, 6.0, -0.1, 0.2, 9.0, 0.3, 8.0],
        );
        let labels = vec![0, 1, 0, 1];
        let assoc = vec![1, 1, 0, 0];
        let metrics = vec![
            Metric::identity(2),
            Metric::from_rows(DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap(),
        ];
        let clf = GroupClassifier::new(&metrics, &assoc, &train, &labels, 2, 2).unwrap();
        let got = clf.select_metric(&DVector::from_row_slice(&[0.0, 0.0])).unwrap();
        assert_eq!(got, 1);
    }

    #[test]
    fn metric_selection_matches_exhaustive_count_oracle() {
        let pts: [[f64; 2]; 8] = [
            [0.0, 0.0],
            [1.0, 0.4],
            [0.3, 1.2],
            [-0.8, 0.5],
            [2.0, -0.3],
            [-1.5, -1.0],
            [0.6, -1.8],
            [1.4, 1.6],
        ];
        let train = DMatrix::from_fn(8, 2, |r, c| pts[r][c]);
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1];
        let assoc = vec![0, 1, 1, 0, 1, 0, 0, 1];
        let metrics = vec![
            Metric::identity(2),
            Metric::from_rows(DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0])).unwrap(),
        ];
        let k = 3;
        let clf = GroupClassifier::new(&metrics, &assoc, &train, &labels, 2, k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..20 {
            let q = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let mut best_t = 0;
            let mut best_count = 0;
            for (t, m) in metrics.iter().enumerate() {
                let neigh = knn_query(m, &q, &train, k).unwrap();
                let count = neigh.iter().filter(|&&j| assoc[j] == t).count();
                if t == 0 || count > best_count {
                    best_t = t;
                    best_count = count;
                }
            }
            assert_eq!(clf.select_metric(&q).unwrap(), best_t);
        }
    }

    #[test]
    fn predict_recovers_training_label_at_k_one() {
        let train = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 3.0, 0.0, 0.0, 3.0]);
        let labels = vec![0, 1, 2];
        let model = model_from(
            vec![Metric::identity(2)],
            vec![0; 3],
            train,
            labels,
            &["a", "b", "c"],
            1,
        );
        let p = model.predict(&DVector::from_row_slice(&[3.0, 0.0])).unwrap();
        assert_eq!(p.label, 1);
        assert_eq!(p.neighbor_ids, vec![1]);
        assert_eq!(p.vote_counts, vec![0, 1, 0]);
    }

    #[test]
    fn predict_majority_vote() {
        let train = DMatrix::from_row_slice(3, 1, &[0.0, 0.2, 5.0]);
        let labels = vec![0, 0, 1];
        let model =
            model_from(vec![Metric::identity(1)], vec![0; 3], train, labels, &["a", "b"], 3);
        let p = model.predict(&DVector::from_row_slice(&[0.1])).unwrap();
        assert_eq!(p.label, 0);
        assert_eq!(p.vote_counts, vec![2, 1]);
    }

    #[test]
    fn predict_vote_tie_goes_to_nearest_tied_class() {
        let train = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let labels = vec![0, 1];
        let model =
            model_from(vec![Metric::identity(1)], vec![0; 2], train, labels, &["a", "b"], 2);
        let p = model.predict(&DVector::from_row_slice(&[1.2])).unwrap();
        assert_eq!(p.label, 0, "tie must go to the nearer class");
        let p = model.predict(&DVector::from_row_slice(&[1.8])).unwrap();
        assert_eq!(p.label, 1);
    }

    #[test]
    fn evaluate_extremes() {
        let train = DMatrix::from_row_slice(2, 1, &[0.0, 10.0]);
        let labels = vec![0, 1];
        let model = model_from(
            vec![Metric::identity(1)],
            vec![0; 2],
            train,
            labels,
            &["a", "b"],
            1,
        );
        let right = Dataset {
            instances: DMatrix::from_row_slice(2, 1, &[0.1, 9.9]),
            labels: vec![0, 1],
            class_names: vec!["a".into(), "b".into()],
        };
        assert_eq!(model.evaluate(&right, &[0, 1]).unwrap(), 0.0);
        let wrong = Dataset {
            instances: DMatrix::from_row_slice(2, 1, &[0.1, 9.9]),
            labels: vec![1, 0],
            class_names: vec!["a".into(), "b".into()],
        };
        assert_eq!(model.evaluate(&wrong, &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_counts_unknown_class_names_as_errors() {
        let train = DMatrix::from_row_slice(2, 1, &[0.0, 10.0]);
        let model = model_from(
            vec![Metric::identity(1)],
            vec![0; 2],
            train,
            vec![0, 1],
            &["a", "b"],
            1,
        );
        let data = Dataset {
            instances: DMatrix::from_row_slice(1, 1, &[0.1]),
            labels: vec![0],
            class_names: vec!["mystery".into()],
        };
        assert_eq!(model.evaluate(&data, &[0]).unwrap(), 1.0);
    }

    #[test]
    fn uniform_metric_scaling_changes_no_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let train = DMatrix::from_fn(30, 2, |_, _| rng.gen_range(-2.0..2.0));
        let labels: Vec<usize> = (0..30).map(|_| rng.gen_range(0..3usize)).collect();
        let assoc: Vec<usize> = (0..30).map(|_| rng.gen_range(0..2usize)).collect();
        let base = vec![
            Metric::identity(2),
            Metric::from_rows(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 0.7])).unwrap(),
        ];
        let scaled: Vec<Metric> = base
            .iter()
            .map(|m| Metric::from_rows(m.rows() * 2.5).unwrap())
            .collect();
        let clf_a = GroupClassifier::new(&base, &assoc, &train, &labels, 3, 3).unwrap();
        let clf_b = GroupClassifier::new(&scaled, &assoc, &train, &labels, 3, 3).unwrap();
        for _ in 0..20 {
            let q = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            assert_eq!(clf_a.predict(&q).unwrap(), clf_b.predict(&q).unwrap());
        }
    }

    #[test]
    fn evaluation_error_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let train = DMatrix::from_fn(20, 2, |_, _| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..20).map(|_| rng.gen_range(0..2usize)).collect();
        let model = model_from(
            vec![Metric::identity(2)],
            vec![0; 20],
            train.clone(),
            labels.clone(),
            &["a", "b"],
            3,
        );
        let data = Dataset {
            instances: DMatrix::from_fn(10, 2, |_, _| rng.gen_range(-1.0..1.0)),
            labels: (0..10).map(|_| rng.gen_range(0..2usize)).collect(),
            class_names: vec!["a".into(), "b".into()],
        };
        let forward: Vec<usize> = (0..10).collect();
        let backward: Vec<usize> = (0..10).rev().collect();
        let a = model.evaluate(&data, &forward).unwrap();
        let b = model.evaluate(&data, &backward).unwrap();
        assert_eq!(a, b);
    }
}
