//! Random-forest score function.
//!
//! A CART forest (Gini impurity, bootstrap rows, random feature subsets per
//! node) trained to separate labeled nulls from the unlabeled mix. A point's
//! score is the mean over trees of the class-1 fraction in the leaf it lands
//! in, so scores live in `[0, 1]` and larger means less null-like.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::PuDataset;
use super::Scorer;
use crate::error::{Error, Result};

/// Feature index marking a leaf node.
pub const LEAF: u16 = u16::MAX;

/// Deepest tree whose node indices still fit the 16-bit wire format.
pub const MAX_DEPTH_LIMIT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum LearnerId {
    RandomForest = 1,
}

impl LearnerId {
    pub fn from_u8(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(LearnerId::RandomForest),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `⌈√d⌉`.
    pub max_features: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 8,
            min_leaf: 5,
            max_features: None,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trees == 0 || self.trees > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "tree count {} outside 1..=65535",
                self.trees
            )));
        }
        if self.max_depth > MAX_DEPTH_LIMIT {
            return Err(Error::InvalidConfig(format!(
                "max depth {} exceeds {MAX_DEPTH_LIMIT}",
                self.max_depth
            )));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min leaf size must be positive".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidConfig("max features must be positive".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, dim: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
            .clamp(1, dim)
    }
}

/// Internal nodes send `x[feature] < value` left; leaves carry their score in
/// `value` and have `feature == LEAF`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u16,
    pub left: u16,
    pub right: u16,
    pub value: f64,
}

impl Node {
    pub fn leaf(value: f64) -> Self {
        Self {
            feature: LEAF,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn split(feature: u16, threshold: f64, left: u16, right: u16) -> Self {
        Self {
            feature,
            left,
            right,
            value: threshold,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

/// Nodes in allocation order; children always come after their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, point: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while !node.is_leaf() {
            let next = if point[node.feature as usize] < node.value {
                node.left
            } else {
                node.right
            };
            node = &self.nodes[next as usize];
        }
        node.value
    }
}

/// Trained score-function parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub learner: LearnerId,
    pub dim: usize,
    pub trees: Vec<Tree>,
    pub train_seed: u64,
}

impl ScoreModel {
    /// Checks that every tree is well formed for `dim` features.
    pub fn from_trees(dim: usize, trees: Vec<Tree>, train_seed: u64) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidInput("forest without trees".into()));
        }
        for (t, tree) in trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::InvalidInput(format!("tree {t} has no nodes")));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if !node.value.is_finite() {
                    return Err(Error::InvalidInput(format!("tree {t} node {i} is not finite")));
                }
                if node.is_leaf() {
                    continue;
                }
                let (l, r) = (node.left as usize, node.right as usize);
                if node.feature as usize >= dim
                    || l <= i
                    || r <= i
                    || l >= tree.nodes.len()
                    || r >= tree.nodes.len()
                {
                    return Err(Error::InvalidInput(format!(
                        "tree {t} node {i} is malformed for dimension {dim}"
                    )));
                }
            }
        }
        Ok(Self {
            learner: LearnerId::RandomForest,
            dim,
            trees,
            train_seed,
        })
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(|t| t.nodes.len()).sum()
    }

    /// Real parameters in wire order: per tree, per node, the split
    /// threshold or leaf value.
    pub fn params(&self) -> Vec<f64> {
        self.trees
            .iter()
            .flat_map(|t| t.nodes.iter().map(|n| n.value))
            .collect()
    }

    /// Same topology with the real parameters replaced.
    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.node_count() {
            return Err(Error::InvalidInput(format!(
                "{} parameters for {} nodes",
                params.len(),
                self.node_count()
            )));
        }
        let mut out = self.clone();
        for (node, &v) in out.trees.iter_mut().flat_map(|t| t.nodes.iter_mut()).zip(params) {
            node.value = v;
        }
        Ok(out)
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "point has dimension {}, model expects {}",
                point.len(),
                self.dim
            )));
        }
        if point.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("NaN feature value".into()));
        }
        let sum: f64 = self.trees.iter().map(|t| t.eval(point)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}

impl Scorer for ScoreModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score(&self, point: &[f64]) -> Result<f64> {
        self.evaluate(point)
    }
}

/// Trains the PU classifier: `train_nulls` labeled 0, `unlabeled_mix`
/// labeled 1. Deterministic in `(data, config, seed)`; tree `t` draws from
/// stream `t` of a ChaCha generator keyed by `seed`.
pub fn train_score_model(data: &PuDataset, config: &ForestConfig, seed: u64) -> Result<ScoreModel> {
    config.validate()?;
    let dim = data.dim;
    if dim >= LEAF as usize {
        return Err(Error::InvalidInput(format!("dimension {dim} too large")));
    }
    let rows: Vec<&Vec<f64>> = data.train_nulls.iter().chain(&data.unlabeled_mix).collect();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidInput("dimension mismatch in training data".into()));
    }
    let x: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    let y: Vec<u8> = std::iter::repeat_n(0u8, data.train_nulls.len())
        .chain(std::iter::repeat_n(1u8, data.unlabeled_mix.len()))
        .collect();

    let mut builder = TreeBuilder {
        x: &x,
        y: &y,
        dim,
        config,
        mtry: config.features_per_split(dim),
        scratch: Vec::with_capacity(y.len()),
        features: (0..dim).collect(),
    };
    let trees = (0..config.trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            builder.build(&mut rng)
        })
        .collect();
    ScoreModel::from_trees(dim, trees, seed)
}

struct TreeBuilder<'a> {
    x: &'a [f64],
    y: &'a [u8],
    dim: usize,
    config: &'a ForestConfig,
    mtry: usize,
    scratch: Vec<(f64, u8)>,
    features: Vec<usize>,
}

#[derive(Clone, Copy)]
struct Split {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

impl Split {
    fn beats(&self, other: &Split) -> bool {
        self.impurity < other.impurity
            || (self.impurity == other.impurity
                && (self.feature < other.feature
                    || (self.feature == other.feature && self.threshold < other.threshold)))
    }
}

impl TreeBuilder<'_> {
    fn build(&mut self, rng: &mut ChaCha8Rng) -> Tree {
        let n = self.y.len();
        let mut samples: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();
        let mut nodes = vec![Node::leaf(0.0)];
        // (node slot, sample range, depth)
        let mut stack = vec![(0usize, 0usize, n, 0usize)];
        while let Some((slot, lo, hi, depth)) = stack.pop() {
            let part = &mut samples[lo..hi];
            let ones = part.iter().filter(|&&s| self.y[s as usize] == 1).count();
            let size = part.len();
            let leaf_value = ones as f64 / size as f64;
            let pure = ones == 0 || ones == size;
            if pure || depth >= self.config.max_depth || size < 2 * self.config.min_leaf {
                nodes[slot] = Node::leaf(leaf_value);
                continue;
            }
            let Some(split) = self.best_split(part, ones, rng) else {
                nodes[slot] = Node::leaf(leaf_value);
                continue;
            };
            let mid = partition(part, |s| self.x[s as usize * self.dim + split.feature] < split.threshold);
            let left = nodes.len();
            nodes.push(Node::leaf(0.0));
            nodes.push(Node::leaf(0.0));
            nodes[slot] = Node::split(split.feature as u16, split.threshold, left as u16, left as u16 + 1);
            stack.push((left + 1, lo + mid, hi, depth + 1));
            stack.push((left, lo, lo + mid, depth + 1));
        }
        Tree { nodes }
    }

    fn best_split(&mut self, part: &[u32], ones: usize, rng: &mut ChaCha8Rng) -> Option<Split> {
        let n = part.len();
        let min_leaf = self.config.min_leaf;
        let total = [n - ones, ones];
        let mut best: Option<Split> = None;
        for i in 0..self.mtry {
            let j = rng.random_range(i..self.dim);
            self.features.swap(i, j);
        }
        for fi in 0..self.mtry {
            let feature = self.features[fi];
            self.scratch.clear();
            self.scratch.extend(
                part.iter()
                    .map(|&s| (self.x[s as usize * self.dim + feature], self.y[s as usize])),
            );
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0usize; 2];
            for i in 1..n {
                left[self.scratch[i - 1].1 as usize] += 1;
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let (lo_x, hi_x) = (self.scratch[i - 1].0, self.scratch[i].0);
                if lo_x >= hi_x {
                    continue;
                }
                let nl = i as f64;
                let nr = (n - i) as f64;
                let right = [total[0] - left[0], total[1] - left[1]];
                // weighted Gini, up to a constant factor
                let impurity = (left[0] * left[1]) as f64 / nl + (right[0] * right[1]) as f64 / nr;
                let mut threshold = lo_x + (hi_x - lo_x) / 2.0;
                if threshold <= lo_x {
                    threshold = hi_x;
                }
                let candidate = Split {
                    impurity,
                    feature,
                    threshold,
                };
                if best.as_ref().is_none_or(|b| candidate.beats(b)) {
                    best = Some(candidate);
                }
            }
        }
        best
    }
}

/// Moves elements satisfying `pred` to the front; returns their count.
fn partition(items: &mut [u32], pred: impl Fn(u32) -> bool) -> usize {
    let mut next = 0;
    for i in 0..items.len() {
        if pred(items[i]) {
            items.swap(next, i);
            next += 1;
        }
    }
    next
}
