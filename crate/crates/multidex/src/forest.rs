//! Random-forest regression for learning the immediate reward function when
//! it is not directly computable from the observed state.
//!
//! Trees use axis-aligned variance-reduction (CART) splits over a random
//! feature subset per node and mean-value leaves; the forest predicts the
//! mean over trees.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per node; defaults to ceil(dim / 3).
    pub features_per_split: Option<usize>,
    /// Train each tree on a bootstrap resample of the data (with
    /// replacement, same size). Disabled only in tests.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: 12,
            min_samples_leaf: 2,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, input: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if input[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
    dim: usize,
}

struct TreeBuilder<'a> {
    inputs: &'a [Vec<f64>],
    targets: &'a [f64],
    cfg: &'a ForestConfig,
    n_features: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, indices: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = indices.len();
        let sum: f64 = indices.iter().map(|&i| self.targets[i]).sum();
        let mean = sum / n as f64;
        if depth >= self.cfg.max_depth || n < 2 * self.cfg.min_samples_leaf {
            return self.push(Node::Leaf(mean));
        }
        let Some((feature, threshold)) = self.best_split(indices, rng) else {
            return self.push(Node::Leaf(mean));
        };
        let mid = partition(indices, |i| self.inputs[i][feature] <= threshold);
        let (left_idx, right_idx) = indices.split_at_mut(mid);
        // placeholder; children indices are patched after recursion
        let node = self.push(Node::Leaf(mean));
        let left = self.build(left_idx, depth + 1, rng);
        let right = self.build(right_idx, depth + 1, rng);
        self.nodes[node] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        node
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Variance-reduction split: maximize S_l^2/n_l + S_r^2/n_r over the
    /// candidate features.
    fn best_split(&self, indices: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let k = self
            .cfg
            .features_per_split
            .unwrap_or_else(|| self.n_features.div_ceil(3))
            .min(self.n_features);
        let mut features: Vec<usize> = (0..self.n_features).collect();
        // partial Fisher-Yates for the first k entries
        for i in 0..k {
            let j = rng.gen_range(i..self.n_features);
            features.swap(i, j);
        }

        let min_leaf = self.cfg.min_samples_leaf;
        let n = indices.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = indices.to_vec();
        for &feature in &features[..k] {
            order.sort_by(|&a, &b| {
                self.inputs[a][feature]
                    .partial_cmp(&self.inputs[b][feature])
                    .unwrap()
            });
            let total: f64 = order.iter().map(|&i| self.targets[i]).sum();
            let mut s_left = 0.0;
            for (pos, &i) in order.iter().enumerate().take(n - 1) {
                s_left += self.targets[i];
                let n_l = pos + 1;
                let n_r = n - n_l;
                if n_l < min_leaf || n_r < min_leaf {
                    continue;
                }
                let v = self.inputs[i][feature];
                let v_next = self.inputs[order[pos + 1]][feature];
                if v == v_next {
                    continue;
                }
                let s_right = total - s_left;
                let score = s_left * s_left / n_l as f64 + s_right * s_right / n_r as f64;
                if best.is_none_or(|(b, _, _)| score > b) {
                    best = Some((score, feature, 0.5 * (v + v_next)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn partition<F: Fn(usize) -> bool>(indices: &mut [usize], pred: F) -> usize {
    let mut mid = 0;
    for i in 0..indices.len() {
        if pred(indices[i]) {
            indices.swap(mid, i);
            mid += 1;
        }
    }
    mid
}

impl RandomForest {
    /// Fits the forest; deterministic given `seed`.
    pub fn fit(
        inputs: &[Vec<f64>],
        targets: &[f64],
        cfg: &ForestConfig,
        seed: u64,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(Error::EmptyData("random forest fit"));
        }
        let dim = inputs[0].len();
        if inputs.iter().any(|i| i.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: 0,
            });
        }
        let n = inputs.len();
        let trees = (0..cfg.n_trees)
            .map(|t| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ (t as u64).wrapping_mul(0xA24BAED4963EE407));
                let mut indices: Vec<usize> = if cfg.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut builder = TreeBuilder {
                    inputs,
                    targets,
                    cfg,
                    n_features: dim,
                    nodes: Vec::new(),
                };
                builder.build(&mut indices, 0, &mut rng);
                Tree {
                    nodes: builder.nodes,
                }
            })
            .collect();
        Ok(Self { trees, dim })
    }

    pub fn predict(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: input.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(input)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_targets_predict_constant() {
        let inputs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, -(i as f64)]).collect();
        let targets = vec![3.5; 50];
        let f = RandomForest::fit(&inputs, &targets, &ForestConfig::default(), 1).unwrap();
        assert_eq!(f.predict(&[7.0, 100.0]).unwrap(), 3.5);
    }

    #[test]
    fn single_sample_predicts_it_everywhere() {
        let f = RandomForest::fit(&[vec![0.0]], &[2.0], &ForestConfig::default(), 1).unwrap();
        assert_eq!(f.predict(&[-10.0]).unwrap(), 2.0);
        assert_eq!(f.predict(&[10.0]).unwrap(), 2.0);
    }

    #[test]
    fn learns_step_function() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inputs: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (x[0] > 0.0) as u8 as f64).collect();
        let f = RandomForest::fit(&inputs, &targets, &ForestConfig::default(), 2).unwrap();
        let mut correct = 0;
        let mut total = 0;
        for i in 0..200 {
            let x = -1.0 + 2.0 * i as f64 / 199.0;
            if x.abs() <= 0.1 {
                continue;
            }
            total += 1;
            let pred = f.predict(&[x]).unwrap();
            let label = (x > 0.0) as u8 as f64;
            if (pred - label).abs() < 0.5 {
                correct += 1;
            }
        }
        assert!(correct as f64 / total as f64 >= 0.95);
    }

    #[test]
    fn single_unbagged_tree_interpolates_training_points() {
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: usize::MAX,
            min_samples_leaf: 1,
            bootstrap: false,
            features_per_split: Some(1),
        };
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let f = RandomForest::fit(&inputs, &targets, &cfg, 0).unwrap();
        for i in 0..20 {
            assert_eq!(f.predict(&[i as f64]).unwrap(), (i * i) as f64);
        }
    }

    #[test]
    fn predictions_bounded_by_target_range() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let inputs: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let targets: Vec<f64> = inputs.iter().map(|x| x[0] * x[1]).collect();
        let lo = targets.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let f = RandomForest::fit(&inputs, &targets, &ForestConfig::default(), 3).unwrap();
        for _ in 0..200 {
            let q = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let p = f.predict(&q).unwrap();
            assert!(p >= lo && p <= hi);
        }
    }

    #[test]
    fn refit_is_reproducible() {
        let inputs: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| x[0] * 2.0 + 1.0).collect();
        let a = RandomForest::fit(&inputs, &targets, &ForestConfig::default(), 5).unwrap();
        let b = RandomForest::fit(&inputs, &targets, &ForestConfig::default(), 5).unwrap();
        for i in 0..30 {
            let q = [i as f64 / 10.0 - 1.5];
            assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
        }
    }

    #[test]
    fn rmse_non_increasing_in_tree_count() {
        use rand::{Rng, SeedableRng};
        // 5-seed median of held-out RMSE at 1, 10, 50 trees
        let mut med = [Vec::new(), Vec::new(), Vec::new()];
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(30 + seed);
            let inputs: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
            let targets: Vec<f64> = inputs.iter().map(|x| x[0].sin()).collect();
            let test: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
            for (slot, n_trees) in [1usize, 10, 50].iter().enumerate() {
                let cfg = ForestConfig {
                    n_trees: *n_trees,
                    ..ForestConfig::default()
                };
                let f = RandomForest::fit(&inputs, &targets, &cfg, seed).unwrap();
                let mse: f64 = test
                    .iter()
                    .map(|&x| {
                        let e = f.predict(&[x]).unwrap() - x.sin();
                        e * e
                    })
                    .sum::<f64>()
                    / test.len() as f64;
                med[slot].push(mse.sqrt());
            }
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[2]
        };
        let (m1, m10, m50) = (
            median(&mut med[0]),
            median(&mut med[1]),
            median(&mut med[2]),
        );
        assert!(m10 <= m1, "1 tree {m1} vs 10 trees {m10}");
        assert!(m50 <= m10, "10 trees {m10} vs 50 trees {m50}");
    }

    #[test]
    fn dimension_mismatch_errors() {
        let f = RandomForest::fit(&[vec![0.0, 1.0]], &[1.0], &ForestConfig::default(), 0).unwrap();
        assert!(f.predict(&[0.0]).is_err());
        assert!(RandomForest::fit(&[], &[], &ForestConfig::default(), 0).is_err());
    }
}
