use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use super::{stable_mean, Matrix, ModelError, TrainingSet};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `ceil(d / 3)`.
    pub max_features: Option<usize>,
    /// Smallest training set a forest will be fit on.
    pub min_train: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 50, max_depth: 10, min_leaf: 5, max_features: None, min_train: 10 }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_trees < 2 {
            return Err(ModelError::Config(format!("a forest needs at least 2 trees, got {}", self.n_trees)));
        }
        if self.min_leaf == 0 {
            return Err(ModelError::Config("min_leaf must be at least 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(ModelError::Config("max_features must be at least 1".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        self.max_features.unwrap_or(d.div_ceil(3)).clamp(1, d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(f64),
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A binary regression tree stored as a flat node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

impl TreeModel {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, ModelError> {
        if nodes.is_empty() {
            return Err(ModelError::Config("tree has no nodes".into()));
        }
        for n in &nodes {
            match *n {
                Node::Leaf(v) if !v.is_finite() => {
                    return Err(ModelError::Config("non-finite leaf value".into()));
                }
                Node::Split { left, right, .. } if left >= nodes.len() || right >= nodes.len() => {
                    return Err(ModelError::Config("child index out of range".into()));
                }
                _ => {}
            }
        }
        Ok(Self { nodes })
    }

    pub fn constant(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf(value)] }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .max()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    feature_pool: Vec<usize>,
    scratch: Vec<(f64, f64)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let mean = stable_mean(rows.iter().map(|&r| self.y[r]));
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_leaf {
            return id;
        }
        let Some(best) = self.best_split(rows, mean) else { return id };

        // partition in place: left block first
        let mut k = 0;
        for i in 0..rows.len() {
            if self.x.get(rows[i], best.feature) <= best.threshold {
                rows.swap(i, k);
                k += 1;
            }
        }
        let (l, r) = rows.split_at_mut(k);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        id
    }

    /// Best variance-reducing split over a random subset of features.
    fn best_split(&mut self, rows: &[usize], mean: f64) -> Option<BestSplit> {
        let d = self.feature_pool.len();
        for i in 0..self.mtry {
            let j = self.rng.random_range(i..d);
            self.feature_pool.swap(i, j);
        }
        let n = rows.len();
        let min_leaf = self.params.min_leaf;
        let mut best: Option<BestSplit> = None;
        for c in 0..self.mtry {
            let feature = self.feature_pool[c];
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&r| (self.x.get(r, feature), self.y[r] - mean)));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = self.scratch.iter().map(|p| p.1).sum();
            let mut left_sum = 0.0;
            for i in 1..n {
                left_sum += self.scratch[i - 1].1;
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (lo, hi) = (self.scratch[i - 1].0, self.scratch[i].0);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                // SSE reduction relative to the parent, in centered coordinates
                let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64
                    - total * total / n as f64;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit { feature, threshold, gain });
                }
            }
        }
        best
    }
}

/// Fits one tree on the rows listed in `sample` (duplicates allowed).
pub fn fit_tree(
    x: &Matrix,
    y: &[f64],
    sample: &[usize],
    params: &ForestParams,
    rng: ChaCha8Rng,
) -> TreeModel {
    let d = x.cols();
    let mut builder = Builder {
        x,
        y,
        params,
        mtry: params.features_per_split(d),
        rng,
        nodes: Vec::new(),
        feature_pool: (0..d).collect(),
        scratch: Vec::with_capacity(sample.len()),
    };
    let mut rows = sample.to_vec();
    builder.build(&mut rows, 0);
    TreeModel { nodes: builder.nodes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    n_features: usize,
    trained_on: Vec<u64>,
    seed: u64,
}

/// Each tree sees a same-size bootstrap resample of the id-ordered training
/// set, drawn from a stream seeded by `(seed, tree_index)`.
pub fn fit_forest(
    data: &TrainingSet,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ModelError> {
    params.validate()?;
    let n = data.len();
    if n < params.min_train.max(1) {
        return Err(ModelError::Training(format!(
            "need at least {} training points, got {n}",
            params.min_train.max(1)
        )));
    }
    let d = data.x().cols();
    if d == 0 {
        return Err(ModelError::Training("training data has no features".into()));
    }
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeding::rng_for(seed, &[t as u64]);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            fit_tree(data.x(), data.y(), &sample, params, rng)
        })
        .collect();
    Ok(ForestModel { trees, n_features: d, trained_on: data.ids().to_vec(), seed })
}

impl ForestModel {
    /// Assembles a forest from existing trees (at least two).
    pub fn from_trees(trees: Vec<TreeModel>, n_features: usize) -> Result<Self, ModelError> {
        if trees.len() < 2 {
            return Err(ModelError::Config("a forest needs at least 2 trees".into()));
        }
        if let Some(f) = trees.iter().filter_map(TreeModel::max_feature).max() {
            if f >= n_features {
                return Err(ModelError::Config(format!("tree splits on feature {f} of {n_features}")));
            }
        }
        Ok(Self { trees, n_features, trained_on: Vec::new(), seed: 0 })
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trained_on(&self) -> &[u64] {
        &self.trained_on
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row `t` holds tree `t`'s predictions for every input row.
    pub fn per_tree_predictions(&self, x: &Matrix) -> Result<Matrix, ModelError> {
        x.check_width(self.n_features)?;
        let n = x.rows();
        let mut out = Matrix::zeros(self.trees.len(), n);
        for (t, tree) in self.trees.iter().enumerate() {
            let row = out.row_mut(t);
            for (i, slot) in row.iter_mut().enumerate() {
                *slot = tree.predict_row(x.row(i));
            }
        }
        Ok(out)
    }

    /// Ensemble mean, in log-consumption space.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        let per_tree = self.per_tree_predictions(x)?;
        Ok(column_means(&per_tree))
    }
}

pub(crate) fn column_means(m: &Matrix) -> Vec<f64> {
    (0..m.cols()).map(|i| stable_mean((0..m.rows()).map(|t| m.get(t, i)))).collect()
}
