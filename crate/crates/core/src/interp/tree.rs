//! Regression trees on `(x, y)` features: bagged forests and gradient boosting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainingSet;
use crate::error::{Error, Result};
use crate::geo_grid::LocalPoint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: 12, min_leaf: 5, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams { n_rounds: 200, learning_rate: 0.1, max_depth: 4, min_leaf: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind {
    RandomForest(ForestParams),
    Boosting(BoostParams),
}

#[derive(Debug, Clone, Copy)]
enum Node<T> {
    Leaf(T),
    Split { on_y: bool, threshold: T, left: u32, right: u32 },
}

/// A binary regression tree; samples with `feature ≤ threshold` go left.
#[derive(Debug, Clone)]
pub struct RegressionTree<T> {
    nodes: Vec<Node<T>>,
}

struct Builder<'a, T> {
    points: &'a [LocalPoint<T>],
    targets: &'a [T],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node<T>>,
}

#[inline]
fn feature<T: Scalar>(p: &LocalPoint<T>, on_y: bool) -> T {
    if on_y {
        p.y
    } else {
        p.x
    }
}

impl<T: Scalar> Builder<'_, T> {
    fn mean(&self, idx: &[usize]) -> T {
        idx.iter().map(|&i| self.targets[i]).sum::<T>() / T::of_usize(idx.len())
    }

    /// Best `(gain, on_y, threshold, split position)` over both features.
    fn best_split(&self, idx: &mut [usize]) -> Option<(T, bool, T, usize)> {
        let n = idx.len();
        if n < 2 * self.min_leaf.max(1) {
            return None;
        }
        let total: T = idx.iter().map(|&i| self.targets[i]).sum();
        let nt = T::of_usize(n);
        let base = total * total / nt;
        let mut best: Option<(T, bool, T, usize)> = None;
        for on_y in [false, true] {
            idx.sort_by(|&a, &b| {
                cmp_scalar(feature(&self.points[a], on_y), feature(&self.points[b], on_y)).then(a.cmp(&b))
            });
            let mut left = T::zero();
            for pos in 1..n {
                left += self.targets[idx[pos - 1]];
                if pos < self.min_leaf.max(1) || n - pos < self.min_leaf.max(1) {
                    continue;
                }
                let lo = feature(&self.points[idx[pos - 1]], on_y);
                let hi = feature(&self.points[idx[pos]], on_y);
                if !(lo < hi) {
                    continue;
                }
                let nl = T::of_usize(pos);
                let nr = T::of_usize(n - pos);
                let right = total - left;
                let gain = left * left / nl + right * right / nr - base;
                if best.is_none_or(|b| gain > b.0) {
                    let mut thr = lo + (hi - lo) / T::of(2.0);
                    if thr >= hi {
                        thr = lo;
                    }
                    best = Some((gain, on_y, thr, pos));
                }
            }
        }
        let tol = T::of(1e-12) * (base.abs() + T::one());
        best.filter(|b| b.0 > tol)
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let split = if depth < self.max_depth { self.best_split(idx) } else { None };
        let Some((_, on_y, threshold, _)) = split else {
            let m = self.mean(idx);
            self.nodes.push(Node::Leaf(m));
            return id;
        };
        idx.sort_by(|&a, &b| {
            cmp_scalar(feature(&self.points[a], on_y), feature(&self.points[b], on_y)).then(a.cmp(&b))
        });
        let pos = idx.partition_point(|&i| feature(&self.points[i], on_y) <= threshold);
        self.nodes.push(Node::Leaf(T::zero()));
        let (l, r) = idx.split_at_mut(pos);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id as usize] = Node::Split { on_y, threshold, left, right };
        id
    }
}

#[inline]
fn cmp_scalar<T: Scalar>(a: T, b: T) -> std::cmp::Ordering {
    a.partial_cmp(&b).unwrap_or(std::cmp::Ordering::Equal)
}

impl<T: Scalar> RegressionTree<T> {
    /// Grows a tree on the samples listed in `idx` (repeats allowed) by exhaustive
    /// squared-error split search. Ties prefer the `x` feature, then the lowest threshold.
    pub fn fit(points: &[LocalPoint<T>], targets: &[T], mut idx: Vec<usize>, max_depth: usize, min_leaf: usize) -> Self {
        assert!(!idx.is_empty(), "tree needs at least one sample");
        let mut b = Builder { points, targets, max_depth, min_leaf, nodes: Vec::new() };
        b.grow(&mut idx, 0);
        RegressionTree { nodes: b.nodes }
    }

    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { on_y, threshold, left, right } => {
                    i = if feature(q, on_y) <= threshold { left } else { right } as usize;
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Debug, Clone)]
pub struct RandomForest<T> {
    trees: Vec<RegressionTree<T>>,
}

impl<T: Scalar> RandomForest<T> {
    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        self.trees.iter().map(|t| t.predict_one(q)).sum::<T>() / T::of_usize(self.trees.len())
    }
}

#[derive(Debug, Clone)]
pub struct BoostedTrees<T> {
    init: T,
    learning_rate: T,
    trees: Vec<RegressionTree<T>>,
    /// Training mean squared error after 0, 1, ..., n rounds.
    pub loss_history: Vec<T>,
}

impl<T: Scalar> BoostedTrees<T> {
    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        self.trees.iter().fold(self.init, |acc, t| acc + self.learning_rate * t.predict_one(q))
    }
}

#[derive(Debug, Clone)]
pub enum TreeEnsemble<T> {
    Forest(RandomForest<T>),
    Boosted(BoostedTrees<T>),
}

impl<T: Scalar> TreeEnsemble<T> {
    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        match self {
            TreeEnsemble::Forest(f) => f.predict_one(q),
            TreeEnsemble::Boosted(b) => b.predict_one(q),
        }
    }
}

/// Trains a random forest or gradient-boosted ensemble; deterministic in `seed`.
pub fn fit_tree_ensemble<T: Scalar>(train: &TrainingSet<T>, kind: &EnsembleKind, seed: u64) -> Result<TreeEnsemble<T>> {
    if train.len() < 2 {
        return Err(Error::Size(format!("tree ensembles need ≥ 2 samples, got {}", train.len())));
    }
    let n = train.len();
    match kind {
        EnsembleKind::RandomForest(p) => {
            if p.n_trees == 0 {
                return Err(Error::Config("n_trees must be ≥ 1".into()));
            }
            let trees = (0..p.n_trees)
                .into_par_iter()
                .map(|t| {
                    let idx = if p.bootstrap {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        rng.set_stream(t as u64);
                        (0..n).map(|_| rng.random_range(0..n)).collect()
                    } else {
                        (0..n).collect()
                    };
                    RegressionTree::fit(&train.points, &train.values, idx, p.max_depth, p.min_leaf)
                })
                .collect();
            Ok(TreeEnsemble::Forest(RandomForest { trees }))
        }
        EnsembleKind::Boosting(p) => {
            if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) {
                return Err(Error::Config(format!("learning_rate must be in (0, 1], got {}", p.learning_rate)));
            }
            let lr = T::of(p.learning_rate);
            let init = train.values.iter().copied().sum::<T>() / T::of_usize(n);
            let mut fitted = vec![init; n];
            let mse = |f: &[T]| f.iter().zip(&train.values).map(|(a, b)| (*b - *a) * (*b - *a)).sum::<T>() / T::of_usize(n);
            let mut loss_history = vec![mse(&fitted)];
            let mut trees = Vec::with_capacity(p.n_rounds);
            for _ in 0..p.n_rounds {
                let residuals: Vec<T> = train.values.iter().zip(&fitted).map(|(z, f)| *z - *f).collect();
                let tree = RegressionTree::fit(&train.points, &residuals, (0..n).collect(), p.max_depth, p.min_leaf);
                for (f, pt) in fitted.iter_mut().zip(&train.points) {
                    *f += lr * tree.predict_one(pt);
                }
                loss_history.push(mse(&fitted));
                trees.push(tree);
            }
            Ok(TreeEnsemble::Boosted(BoostedTrees { init, learning_rate: lr, trees, loss_history }))
        }
    }
}
