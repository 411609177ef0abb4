//! Bagged Gini decision trees with per-split feature subsampling.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 450,
            max_depth: 5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf {
        probs: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_probs(&self, x: &[f64]) -> &[f64] {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    fn depth_from(&self, node: usize) -> usize {
        match &self.nodes[node] {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => {
                1 + self.depth_from(*left).max(self.depth_from(*right))
            }
        }
    }
}

/// A bootstrap-bagged ensemble of depth-limited Gini trees; prediction is
/// the average of the leaf class distributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    pub n_classes: usize,
    pub n_features: usize,
    pub config: ForestConfig,
}

impl TreeEnsemble {
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut probs = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (p, l) in probs.iter_mut().zip(tree.leaf_probs(x)) {
                *p += l;
            }
        }
        let n = self.trees.len() as f64;
        for p in &mut probs {
            *p /= n;
        }
        Ok(probs)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(super::argmax(&self.predict_proba(x)?))
    }

    pub fn max_tree_depth(&self) -> usize {
        self.trees.iter().map(|t| t.depth_from(0)).max().unwrap_or(0)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

fn gini(counts: &[usize], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / t;
            p * p
        })
        .sum::<f64>()
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    n_split_features: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, indices: &[usize]) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &i in indices {
            counts[self.y[i]] += 1;
        }
        let total = indices.len() as f64;
        let probs = counts.iter().map(|&c| c as f64 / total).collect();
        self.nodes.push(Node::Leaf { probs });
        self.nodes.len() - 1
    }

    fn build(&mut self, indices: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let first = self.y[indices[0]];
        let pure = indices.iter().all(|&i| self.y[i] == first);
        if depth == self.max_depth || pure || indices.len() < 2 {
            return self.leaf(indices);
        }

        let n_features = self.x[0].len();
        let mut feature_pool: Vec<usize> = (0..n_features).collect();
        feature_pool.shuffle(rng);
        feature_pool.truncate(self.n_split_features);

        let mut best: Option<(f64, usize, f64)> = None;
        for &feature in &feature_pool {
            let mut sorted: Vec<(f64, usize)> = indices
                .iter()
                .map(|&i| (self.x[i][feature], self.y[i]))
                .collect();
            sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left_counts = vec![0usize; self.n_classes];
            let mut right_counts = vec![0usize; self.n_classes];
            for &(_, label) in &sorted {
                right_counts[label] += 1;
            }
            let total = sorted.len();
            for i in 0..total - 1 {
                let label = sorted[i].1;
                left_counts[label] += 1;
                right_counts[label] -= 1;
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let n_left = i + 1;
                let n_right = total - n_left;
                let weighted = (n_left as f64 * gini(&left_counts, n_left)
                    + n_right as f64 * gini(&right_counts, n_right))
                    / total as f64;
                if best.as_ref().is_none_or(|(g, _, _)| weighted < *g) {
                    let threshold = (sorted[i].0 + sorted[i + 1].0) / 2.0;
                    best = Some((weighted, feature, threshold));
                }
            }
        }

        let Some((_, feature, threshold)) = best else {
            return self.leaf(indices);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.x[i][feature] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() }); // patched below
        let left = self.build(&left_idx, depth + 1, rng);
        let right = self.build(&right_idx, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Fit a random forest: bootstrap rows per tree, Gini splits over
/// `sqrt(n_features)` candidate features, averaged leaf distributions.
/// Tree `t` draws from an RNG seeded with `config.seed + t`.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    config: &ForestConfig,
) -> Result<TreeEnsemble> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "need matching non-empty x ({}) and y ({})",
            x.len(),
            y.len()
        )));
    }
    let n_features = x[0].len();
    if n_features == 0 {
        return Err(Error::InvalidInput("no features".into()));
    }
    for row in x {
        if row.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature".into()));
        }
    }
    if n_classes == 0 || y.iter().any(|&label| label >= n_classes) {
        return Err(Error::InvalidInput("label outside class range".into()));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidInput("n_trees must be >= 1".into()));
    }

    let n_split_features = ((n_features as f64).sqrt().floor() as usize).max(1);
    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(t as u64));
        let indices: Vec<usize> = (0..x.len())
            .map(|_| rand::Rng::gen_range(&mut rng, 0..x.len()))
            .collect();
        let mut builder = TreeBuilder {
            x,
            y,
            n_classes,
            max_depth: config.max_depth,
            n_split_features,
            nodes: Vec::new(),
        };
        builder.build(&indices, 0, &mut rng);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }
    Ok(TreeEnsemble {
        trees,
        n_classes,
        n_features,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(n_per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        // Two well-separated 2D clusters, deterministic jitter.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for class in 0..2 {
            let center = if class == 0 { -2.0 } else { 2.0 };
            for _ in 0..n_per_class {
                let jx: f64 = rand::Rng::gen_range(&mut rng, -0.5..0.5);
                let jy: f64 = rand::Rng::gen_range(&mut rng, -0.5..0.5);
                x.push(vec![center + jx, center + jy]);
                y.push(class);
            }
        }
        (x, y)
    }

    #[test]
    fn single_class_predicts_that_class_everywhere() {
        let x = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5]];
        let y = vec![1, 1, 1];
        let forest = fit_forest(&x, &y, 3, &ForestConfig { n_trees: 10, max_depth: 3, seed: 0 }).unwrap();
        let probs = forest.predict_proba(&[9.0, -9.0]).unwrap();
        assert_eq!(probs, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn separable_blobs_reach_high_held_out_accuracy() {
        let (x, y) = blobs(60, 1);
        let (xt, yt) = blobs(40, 2);
        let forest = fit_forest(
            &x,
            &y,
            2,
            &ForestConfig {
                n_trees: 30,
                max_depth: 2,
                seed: 7,
            },
        )
        .unwrap();
        let correct = xt
            .iter()
            .zip(&yt)
            .filter(|(row, &label)| forest.predict(row).unwrap() == label)
            .count();
        let accuracy = correct as f64 / yt.len() as f64;
        assert!(accuracy >= 0.95, "accuracy {accuracy}");
    }

    #[test]
    fn depth_limit_is_respected() {
        let (x, y) = blobs(50, 3);
        let forest = fit_forest(
            &x,
            &y,
            2,
            &ForestConfig {
                n_trees: 20,
                max_depth: 5,
                seed: 9,
            },
        )
        .unwrap();
        assert!(forest.max_tree_depth() <= 5);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let (x, y) = blobs(30, 4);
        let forest = fit_forest(&x, &y, 2, &ForestConfig { n_trees: 45, max_depth: 5, seed: 5 }).unwrap();
        for row in x.iter().take(10) {
            let probs = forest.predict_proba(row).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum {sum}");
        }
    }

    #[test]
    fn fitting_is_deterministic_per_seed() {
        let (x, y) = blobs(20, 5);
        let cfg = ForestConfig {
            n_trees: 8,
            max_depth: 3,
            seed: 11,
        };
        let a = fit_forest(&x, &y, 2, &cfg).unwrap();
        let b = fit_forest(&x, &y, 2, &cfg).unwrap();
        for row in &x {
            assert_eq!(a.predict_proba(row).unwrap(), b.predict_proba(row).unwrap());
        }
    }

    #[test]
    fn defaults_match_the_documented_configuration() {
        let cfg = ForestConfig::default();
        assert_eq!(cfg.n_trees, 450);
        assert_eq!(cfg.max_depth, 5);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(fit_forest(&[], &[], 2, &ForestConfig::default()).is_err());
        let x = vec![vec![0.0]];
        assert!(fit_forest(&x, &[5], 2, &ForestConfig::default()).is_err());
        let bad = vec![vec![f64::NAN]];
        assert!(fit_forest(&bad, &[0], 1, &ForestConfig::default()).is_err());
    }
}
