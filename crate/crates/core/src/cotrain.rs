//! Two-view co-training label expansion.
//!
//! The feature matrix is split column-wise into two disjoint, exhaustive
//! views. Each round fits one classifier per view on the labeled pool,
//! then moves the most confident unlabeled examples - those where both
//! classifiers agree and the proposing view's probability clears the
//! confidence threshold - into the pool, capped per class and per round.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::learn::{argmax, fit_forest, ForestConfig, TreeEnsemble};

/// Feature rows with a label for some documents and a column partition
/// defining the two views.
#[derive(Debug, Clone)]
pub struct PartiallyLabeled {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Option<usize>>,
    pub n_classes: usize,
    pub view1: Vec<usize>,
    pub view2: Vec<usize>,
}

impl PartiallyLabeled {
    pub fn new(
        x: Vec<Vec<f64>>,
        y: Vec<Option<usize>>,
        n_classes: usize,
        view1: Vec<usize>,
        view2: Vec<usize>,
    ) -> Result<Self> {
        if x.len() != y.len() || x.is_empty() {
            return Err(Error::InvalidInput(
                "x and y must be non-empty and the same length".into(),
            ));
        }
        let n_features = x[0].len();
        validate_views(n_features, &view1, &view2)?;
        let mut per_class = vec![0usize; n_classes];
        for label in y.iter().flatten() {
            if *label >= n_classes {
                return Err(Error::InvalidInput(format!(
                    "label {label} outside 0..{n_classes}"
                )));
            }
            per_class[*label] += 1;
        }
        if per_class.iter().any(|&c| c == 0) {
            return Err(Error::InvalidInput(
                "every class needs at least one labeled example".into(),
            ));
        }
        Ok(PartiallyLabeled {
            x,
            y,
            n_classes,
            view1,
            view2,
        })
    }
}

fn validate_views(n_features: usize, view1: &[usize], view2: &[usize]) -> Result<()> {
    if view1.is_empty() || view2.is_empty() {
        return Err(Error::InvalidInput("a view has zero columns".into()));
    }
    let mut seen = vec![false; n_features];
    for &c in view1.iter().chain(view2) {
        if c >= n_features {
            return Err(Error::InvalidInput(format!("column {c} out of range")));
        }
        if seen[c] {
            return Err(Error::InvalidInput(format!(
                "column {c} appears in both views"
            )));
        }
        seen[c] = true;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::InvalidInput(
            "views do not cover all columns".into(),
        ));
    }
    Ok(())
}

/// Column-project `x` onto the two views.
pub fn split_views(
    x: &[Vec<f64>],
    view1: &[usize],
    view2: &[usize],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if x.is_empty() {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    validate_views(x[0].len(), view1, view2)?;
    let project = |cols: &[usize]| -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| cols.iter().map(|&c| row[c]).collect())
            .collect()
    };
    Ok((project(view1), project(view2)))
}

/// A fitted classifier exposing class probabilities.
pub trait ProbabilisticClassifier {
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl ProbabilisticClassifier for TreeEnsemble {
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        TreeEnsemble::predict_proba(self, x)
    }
}

/// Factory producing the per-view base classifiers each round.
pub trait BaseLearner {
    type Classifier: ProbabilisticClassifier;
    fn fit(&self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<Self::Classifier>;
}

/// Default base learner: a seeded random forest.
#[derive(Debug, Clone)]
pub struct ForestLearner(pub ForestConfig);

impl BaseLearner for ForestLearner {
    type Classifier = TreeEnsemble;

    fn fit(&self, x: &[Vec<f64>], y: &[usize], n_classes: usize) -> Result<TreeEnsemble> {
        fit_forest(x, y, n_classes, &self.0)
    }
}

#[derive(Debug, Clone)]
pub struct CotrainConfig {
    /// Minimum predicted probability for an example to be adopted.
    pub confidence_threshold: f64,
    /// Adoptions per class, per classifier, per round.
    pub per_round_adds: usize,
    pub max_rounds: usize,
}

impl Default for CotrainConfig {
    fn default() -> Self {
        CotrainConfig {
            confidence_threshold: 0.9,
            per_round_adds: 5,
            max_rounds: 50,
        }
    }
}

impl CotrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.5 && self.confidence_threshold <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "confidence threshold {} not in (0.5, 1]",
                self.confidence_threshold
            )));
        }
        if self.per_round_adds == 0 {
            return Err(Error::InvalidInput("per_round_adds must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the round log.
#[derive(Debug, Clone, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub added_per_class: BTreeMap<usize, usize>,
    pub pool_size: usize,
    pub u_remaining: usize,
}

#[derive(Debug)]
pub struct CotrainOutcome<C> {
    /// Final labels; entries that started labeled are unchanged.
    pub labels: Vec<Option<usize>>,
    pub h1: C,
    pub h2: C,
    pub rounds: Vec<RoundLog>,
}

fn fit_view<L: BaseLearner>(
    learner: &L,
    x_view: &[Vec<f64>],
    labels: &[Option<usize>],
    n_classes: usize,
) -> Result<L::Classifier> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (row, label) in x_view.iter().zip(labels) {
        if let Some(l) = label {
            x.push(row.clone());
            y.push(*l);
        }
    }
    learner.fit(&x, &y, n_classes)
}

/// Iterative label expansion; stops when no example qualifies, the
/// unlabeled pool empties, or `max_rounds` is reached.
pub fn cotrain<L: BaseLearner>(
    data: &PartiallyLabeled,
    cfg: &CotrainConfig,
    learner: &L,
) -> Result<CotrainOutcome<L::Classifier>> {
    cfg.validate()?;
    let (x1, x2) = split_views(&data.x, &data.view1, &data.view2)?;
    let mut labels = data.y.clone();
    let mut rounds = Vec::new();

    loop {
        let h1 = fit_view(learner, &x1, &labels, data.n_classes)?;
        let h2 = fit_view(learner, &x2, &labels, data.n_classes)?;

        let unlabeled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_none()).collect();
        if unlabeled.is_empty() || rounds.len() == cfg.max_rounds {
            return Ok(CotrainOutcome {
                labels,
                h1,
                h2,
                rounds,
            });
        }

        // (probability, doc index, class) proposals per classifier: the
        // proposing view must clear the threshold and both must agree.
        let mut proposals_h1: Vec<(f64, usize, usize)> = Vec::new();
        let mut proposals_h2: Vec<(f64, usize, usize)> = Vec::new();
        for &i in &unlabeled {
            let p1 = h1.predict_proba(&x1[i])?;
            let p2 = h2.predict_proba(&x2[i])?;
            let c1 = argmax(&p1);
            let c2 = argmax(&p2);
            if c1 != c2 {
                continue;
            }
            if p1[c1] >= cfg.confidence_threshold {
                proposals_h1.push((p1[c1], i, c1));
            }
            if p2[c2] >= cfg.confidence_threshold {
                proposals_h2.push((p2[c2], i, c2));
            }
        }

        let mut adopted: BTreeMap<usize, usize> = BTreeMap::new(); // doc -> class
        let mut added_per_class: BTreeMap<usize, usize> = BTreeMap::new();
        for proposals in [&mut proposals_h1, &mut proposals_h2] {
            // Stable order: probability descending, then document index.
            proposals.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut taken = vec![0usize; data.n_classes];
            for &(_, doc, class) in proposals.iter() {
                if taken[class] == cfg.per_round_adds {
                    continue;
                }
                taken[class] += 1;
                adopted.entry(doc).or_insert(class);
            }
        }

        if adopted.is_empty() {
            return Ok(CotrainOutcome {
                labels,
                h1,
                h2,
                rounds,
            });
        }
        for (&doc, &class) in &adopted {
            labels[doc] = Some(class);
            *added_per_class.entry(class).or_insert(0) += 1;
        }
        let pool_size = labels.iter().filter(|l| l.is_some()).count();
        rounds.push(RoundLog {
            round: rounds.len() + 1,
            added_per_class,
            pool_size,
            u_remaining: labels.len() - pool_size,
        });
    }
}

/// Product-of-experts combination: `p(c|x) ~ p1(c|x) p2(c|x) / prior(c)`.
pub fn combined_predict<C: ProbabilisticClassifier>(
    h1: &C,
    h2: &C,
    x1: &[f64],
    x2: &[f64],
    priors: &[f64],
) -> Result<Vec<f64>> {
    combine_distributions(&h1.predict_proba(x1)?, &h2.predict_proba(x2)?, priors)
}

/// Direct product rule over externally supplied distributions; used where
/// the classifiers themselves are not available.
pub fn combine_distributions(p1: &[f64], p2: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    if p1.len() != p2.len() || p1.len() != priors.len() {
        return Err(Error::DimensionMismatch {
            expected: p1.len(),
            got: priors.len(),
        });
    }
    let mut combined: Vec<f64> = p1
        .iter()
        .zip(p2)
        .zip(priors)
        .map(|((a, b), prior)| if *prior <= 0.0 { 0.0 } else { a * b / prior })
        .collect();
    let norm: f64 = combined.iter().sum();
    if norm == 0.0 {
        return Err(Error::InvalidInput(
            "all class products are zero; cannot normalize".into(),
        ));
    }
    for c in &mut combined {
        *c /= norm;
    }
    Ok(combined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::two_view_blobs;

    #[test]
    fn split_views_projects_columns() {
        let x = vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]];
        let (t1, t2) = split_views(&x, &[0, 1], &[2, 3]).unwrap();
        assert_eq!(t1, vec![vec![1.0, 2.0], vec![5.0, 6.0]]);
        assert_eq!(t2, vec![vec![3.0, 4.0], vec![7.0, 8.0]]);
    }

    #[test]
    fn split_views_reassembles_to_the_original() {
        let x = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let view1 = vec![2, 0];
        let view2 = vec![1];
        let (t1, t2) = split_views(&x, &view1, &view2).unwrap();
        for (r, row) in x.iter().enumerate() {
            for (j, &c) in view1.iter().enumerate() {
                assert_eq!(t1[r][j], row[c]);
            }
            for (j, &c) in view2.iter().enumerate() {
                assert_eq!(t2[r][j], row[c]);
            }
        }
    }

    #[test]
    fn split_views_rejects_bad_partitions() {
        let x = vec![vec![1.0, 2.0, 3.0]];
        assert!(split_views(&x, &[0, 1], &[1, 2]).is_err()); // overlap
        assert!(split_views(&x, &[0], &[2]).is_err()); // incomplete
        assert!(split_views(&x, &[], &[0, 1, 2]).is_err()); // empty view
    }

    #[test]
    fn random_partition_matches_direct_indexing() {
        let x: Vec<Vec<f64>> = (0..5)
            .map(|r| (0..6).map(|c| (r * 6 + c) as f64).collect())
            .collect();
        let view1 = vec![4, 1, 5];
        let view2 = vec![0, 3, 2];
        let (t1, _) = split_views(&x, &view1, &view2).unwrap();
        assert_eq!(t1[3][0], x[3][4]);
        assert_eq!(t1[2][2], x[2][5]);
    }

    fn labeled_blobs() -> (PartiallyLabeled, Vec<usize>) {
        two_view_blobs(50, 450, 3, 42)
    }

    fn small_forest(seed: u64) -> ForestLearner {
        ForestLearner(ForestConfig {
            n_trees: 20,
            max_depth: 4,
            seed,
        })
    }

    #[test]
    fn no_unlabeled_returns_immediately() {
        let (mut data, _) = labeled_blobs();
        for (i, label) in data.y.iter_mut().enumerate() {
            if label.is_none() {
                *label = Some(i % 3);
            }
        }
        let out = cotrain(&data, &CotrainConfig::default(), &small_forest(1)).unwrap();
        assert!(out.rounds.is_empty());
        assert_eq!(out.labels, data.y);
    }

    #[test]
    fn expansion_on_separable_two_view_data() {
        let (data, truth) = labeled_blobs();
        let initially_labeled = data.y.iter().filter(|l| l.is_some()).count();
        let cfg = CotrainConfig {
            per_round_adds: 10,
            ..CotrainConfig::default()
        };
        let out = cotrain(&data, &cfg, &small_forest(5)).unwrap();
        let final_labeled = out.labels.iter().filter(|l| l.is_some()).count();
        assert!(
            final_labeled >= 5 * initially_labeled,
            "pool grew {initially_labeled} -> {final_labeled}"
        );
        let mut added = 0usize;
        let mut added_correct = 0usize;
        for i in 0..data.y.len() {
            if data.y[i].is_none() {
                if let Some(label) = out.labels[i] {
                    added += 1;
                    if label == truth[i] {
                        added_correct += 1;
                    }
                }
            }
        }
        assert!(added > 0);
        let accuracy = added_correct as f64 / added as f64;
        assert!(accuracy >= 0.95, "added-label accuracy {accuracy}");
    }

    /// Forest whose probabilities are shrunk toward uniform, so it can
    /// never emit exactly 1.
    struct CalibratedForest(ForestLearner);

    struct CalibratedClassifier(TreeEnsemble);

    impl ProbabilisticClassifier for CalibratedClassifier {
        fn predict_proba(&self, x: &[f64]) -> crate::error::Result<Vec<f64>> {
            let p = self.0.predict_proba(x)?;
            let k = p.len() as f64;
            Ok(p.iter().map(|v| v * 0.98 + 0.02 / k).collect())
        }
    }

    impl BaseLearner for CalibratedForest {
        type Classifier = CalibratedClassifier;

        fn fit(
            &self,
            x: &[Vec<f64>],
            y: &[usize],
            n_classes: usize,
        ) -> crate::error::Result<CalibratedClassifier> {
            Ok(CalibratedClassifier(self.0.fit(x, y, n_classes)?))
        }
    }

    #[test]
    fn unreachable_threshold_terminates_without_additions() {
        let (data, _) = labeled_blobs();
        let cfg = CotrainConfig {
            confidence_threshold: 1.0,
            ..CotrainConfig::default()
        };
        let learner = CalibratedForest(small_forest(3));
        let out = cotrain(&data, &cfg, &learner).unwrap();
        assert!(out.rounds.is_empty());
        assert_eq!(out.labels, data.y);
    }

    #[test]
    fn labeled_pool_is_monotone_and_never_relabels() {
        let (data, _) = labeled_blobs();
        let cfg = CotrainConfig {
            max_rounds: 5,
            ..CotrainConfig::default()
        };
        let out = cotrain(&data, &cfg, &small_forest(9)).unwrap();
        for i in 0..data.y.len() {
            if let Some(orig) = data.y[i] {
                assert_eq!(out.labels[i], Some(orig));
            }
        }
        let mut prev = data.y.iter().filter(|l| l.is_some()).count();
        for round in &out.rounds {
            assert!(round.pool_size >= prev);
            prev = round.pool_size;
        }
        assert!(out.rounds.len() <= 5);
    }

    #[test]
    fn combined_prediction_uniform_inputs_stay_uniform() {
        let p = combine_distributions(
            &[1.0 / 3.0; 3],
            &[1.0 / 3.0; 3],
            &[1.0 / 3.0; 3],
        )
        .unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_prediction_certainty_dominates() {
        let p = combine_distributions(&[1.0, 0.0, 0.0], &[0.4, 0.3, 0.3], &[1.0 / 3.0; 3]).unwrap();
        assert_eq!(argmax(&p), 0);
        assert!((p[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combined_prediction_matches_hand_computed_product_rule() {
        let p1 = [0.6, 0.3, 0.1];
        let p2 = [0.2, 0.5, 0.3];
        let priors = [0.5, 0.25, 0.25];
        let got = combine_distributions(&p1, &p2, &priors).unwrap();
        let raw = [
            0.6 * 0.2 / 0.5,
            0.3 * 0.5 / 0.25,
            0.1 * 0.3 / 0.25,
        ];
        let norm: f64 = raw.iter().sum();
        for (g, r) in got.iter().zip(&raw) {
            assert!((g - r / norm).abs() < 1e-12);
        }
    }

    #[test]
    fn combined_prediction_zero_normalizer_errors() {
        assert!(combine_distributions(&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]).is_err());
    }
}
