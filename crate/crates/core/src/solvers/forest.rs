//! Random-forest regression: bootstrapped CART trees with feature subsampling.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::mdp::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means a third of them, at least one.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 64, max_depth: 24, min_samples_leaf: 1, max_features: None, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left } else { *right } as usize;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    features: usize,
    trees: Vec<Tree>,
}

impl RandomForest {
    /// Fits a forest. Panics if `x` is empty or ragged.
    pub fn fit(x: &[Vec<f64>], y: &[f64], config: &ForestConfig) -> Self {
        assert!(!x.is_empty() && x.len() == y.len(), "need matching, non-empty data");
        let features = x[0].len();
        assert!(x.iter().all(|r| r.len() == features), "ragged feature rows");
        let trees = (0..config.trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[t as u64]));
                let rows: Vec<usize> = if config.bootstrap {
                    (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                let mut builder = Builder { x, y, config, features, rng, nodes: Vec::new() };
                builder.grow(rows, 0);
                Tree { nodes: builder.nodes }
            })
            .collect();
        Self { features, trees }
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    config: &'a ForestConfig,
    features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));
        let min_leaf = self.config.min_samples_leaf.max(1);
        if depth >= self.config.max_depth || rows.len() < 2 * min_leaf {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, min_leaf) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id as usize] = Node::Split { feature: feature as u32, threshold, left, right };
        id
    }

    fn best_split(&mut self, rows: &[usize], min_leaf: usize) -> Option<(usize, f64)> {
        let k = self.config.max_features.unwrap_or(self.features.div_ceil(3)).clamp(1, self.features);
        // Features are drawn in random order until `k` of them could split.
        let candidates = sample(&mut self.rng, self.features, self.features);
        let mut tried = 0;
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let total_sq: f64 = rows.iter().map(|&r| self.y[r] * self.y[r]).sum();
        let parent_sse = total_sq - total * total / n;
        if parent_sse <= 1e-12 {
            return None;
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = rows.to_vec();
        for f in candidates {
            if tried == k {
                break;
            }
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            if self.x[order[0]][f] == self.x[order[order.len() - 1]][f] {
                continue;
            }
            tried += 1;
            let (mut ls, mut lsq) = (0.0, 0.0);
            for (i, &r) in order.iter().enumerate().take(order.len() - 1) {
                ls += self.y[r];
                lsq += self.y[r] * self.y[r];
                let nl = (i + 1) as f64;
                let (a, b) = (self.x[r][f], self.x[order[i + 1]][f]);
                if a == b || i + 1 < min_leaf || order.len() - i - 1 < min_leaf {
                    continue;
                }
                let nr = n - nl;
                let rs = total - ls;
                let rsq = total_sq - lsq;
                let sse = (lsq - ls * ls / nl) + (rsq - rs * rs / nr);
                if best.is_none_or(|(s, _, _)| sse < s - 1e-12) {
                    best = Some((sse, f, 0.5 * (a + b)));
                }
            }
        }
        best.filter(|(sse, _, _)| *sse < parent_sse - 1e-12).map(|(_, f, t)| (f, t))
    }
}
