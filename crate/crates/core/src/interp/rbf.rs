//! Multiquadric radial basis function interpolation with a linear polynomial tail.
//!
//! The interpolant is `s(q) = Σ w_i φ(|q − x_i|) + c0 + c1·(q_x − m_x) + c2·(q_y − m_y)`
//! with `φ(r) = sqrt(1 + (εr)²)`, `m` the centroid of the centers, and the
//! weights constrained by `Σ w_i = Σ w_i x_i = Σ w_i y_i = 0`. Smoothing `δ`
//! enters the kernel matrix as `Φ − δI`: the multiquadric is conditionally
//! negative definite on the constrained subspace, so this is the sign that
//! regularizes. With fewer than three centers the tail drops to a constant.
//!
//! Large training sets are handled with a local solve over the nearest
//! `neighbors` centers of each query.

use serde::{Deserialize, Serialize};

use super::knn::KdTree;
use super::linalg::Lu;
use super::TrainingSet;
use crate::error::{Error, Result};
use crate::geo_grid::LocalPoint;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbfParams {
    /// Shape parameter in 1/m.
    pub epsilon: f64,
    /// Smoothing δ, subtracted from the kernel diagonal.
    pub smoothing: f64,
    /// Neighborhood size for local solves.
    pub neighbors: usize,
    /// Training sets up to this size are solved globally.
    pub global_max: usize,
}

impl Default for RbfParams {
    fn default() -> Self {
        RbfParams { epsilon: 1.0, smoothing: 0.1, neighbors: 64, global_max: 2000 }
    }
}

#[inline]
fn multiquadric<T: Scalar>(eps: T, r: T) -> T {
    let er = eps * r;
    (T::one() + er * er).sqrt()
}

/// Solved expansion over a fixed set of centers.
#[derive(Debug, Clone)]
pub struct RbfExpansion<T> {
    centers: Vec<LocalPoint<T>>,
    weights: Vec<T>,
    /// Constant, then optional x and y slopes.
    tail: Vec<T>,
    centroid: LocalPoint<T>,
    epsilon: T,
}

impl<T: Scalar> RbfExpansion<T> {
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn tail(&self) -> &[T] {
        &self.tail
    }

    pub fn eval(&self, q: &LocalPoint<T>) -> T {
        let k: T = self
            .centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| *w * multiquadric(self.epsilon, c.dist(q)))
            .sum();
        let mut v = k + self.tail[0];
        if self.tail.len() == 3 {
            v += self.tail[1] * (q.x - self.centroid.x) + self.tail[2] * (q.y - self.centroid.y);
        }
        v
    }
}

fn centroid<T: Scalar>(pts: &[LocalPoint<T>]) -> LocalPoint<T> {
    let n = T::of_usize(pts.len());
    LocalPoint::new(pts.iter().map(|p| p.x).sum::<T>() / n, pts.iter().map(|p| p.y).sum::<T>() / n)
}

/// True when the centered point cloud spans only a line (or a point).
pub(crate) fn is_collinear<T: Scalar>(pts: &[LocalPoint<T>]) -> bool {
    if pts.len() < 3 {
        return true;
    }
    let m = centroid(pts);
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for p in pts {
        let (dx, dy) = (p.x - m.x, p.y - m.y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    !(det > T::of(1e-10) * trace * trace)
}

/// Solves the augmented system for `centers`/`values`.
///
/// `linear_tail` requests the degree-1 tail; callers must ensure the centers
/// are not collinear when it is set.
pub fn solve_expansion<T: Scalar>(
    centers: Vec<LocalPoint<T>>,
    values: &[T],
    epsilon: T,
    smoothing: T,
    linear_tail: bool,
) -> Result<RbfExpansion<T>> {
    let n = centers.len();
    let m = if linear_tail { 3 } else { 1 };
    let dim = n + m;
    let c = centroid(&centers);
    let mut a = vec![T::zero(); dim * dim];
    for i in 0..n {
        for j in 0..n {
            a[i * dim + j] = multiquadric(epsilon, centers[i].dist(&centers[j]));
        }
        a[i * dim + i] -= smoothing;
        let tail = [T::one(), centers[i].x - c.x, centers[i].y - c.y];
        for (t, v) in tail.iter().take(m).enumerate() {
            a[i * dim + n + t] = *v;
            a[(n + t) * dim + i] = *v;
        }
    }
    let mut rhs = values.to_vec();
    rhs.resize(dim, T::zero());
    let lu = Lu::factor(a, dim).map_err(|s| {
        Error::Conditioning(format!(
            "RBF system is singular at column {}; increase the smoothing δ or remove near-duplicate samples",
            s.column
        ))
    })?;
    let mut sol = lu.solve(&rhs);
    let tail = sol.split_off(n);
    Ok(RbfExpansion { centers, weights: sol, tail, centroid: c, epsilon })
}

/// Global RBF solve over a whole training set.
pub fn rbf_solve<T: Scalar>(train: &TrainingSet<T>, epsilon: f64, smoothing: f64) -> Result<RbfExpansion<T>> {
    check_params(epsilon, smoothing)?;
    if train.is_empty() {
        return Err(Error::Size("RBF needs at least one sample".into()));
    }
    let linear = train.len() >= 3;
    if linear && is_collinear(&train.points) {
        return Err(Error::Conditioning(
            "training points are collinear; the linear polynomial tail is rank deficient".into(),
        ));
    }
    solve_expansion(train.points.clone(), &train.values, T::of(epsilon), T::of(smoothing), linear)
}

fn check_params(epsilon: f64, smoothing: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("RBF epsilon must be > 0, got {epsilon}")));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::Config(format!("RBF smoothing must be ≥ 0, got {smoothing}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum RbfModel<T> {
    Global(RbfExpansion<T>),
    Local { tree: KdTree<T>, values: Vec<T>, epsilon: T, smoothing: T, neighbors: usize },
}

impl<T: Scalar> RbfModel<T> {
    pub fn fit(train: &TrainingSet<T>, params: &RbfParams) -> Result<Self> {
        check_params(params.epsilon, params.smoothing)?;
        if train.len() <= params.global_max {
            return Ok(RbfModel::Global(rbf_solve(train, params.epsilon, params.smoothing)?));
        }
        Ok(RbfModel::Local {
            tree: KdTree::new(train.points.clone()),
            values: train.values.clone(),
            epsilon: T::of(params.epsilon),
            smoothing: T::of(params.smoothing),
            neighbors: params.neighbors.max(1),
        })
    }

    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        match self {
            RbfModel::Global(e) => e.eval(q),
            RbfModel::Local { tree, values, epsilon, smoothing, neighbors } => {
                let nbrs = tree.nearest(q, *neighbors);
                let pts: Vec<LocalPoint<T>> = nbrs.iter().map(|n| tree.points()[n.0]).collect();
                let vals: Vec<T> = nbrs.iter().map(|n| values[n.0]).collect();
                let linear = !is_collinear(&pts);
                solve_expansion(pts.clone(), &vals, *epsilon, *smoothing, linear)
                    .or_else(|_| solve_expansion(pts, &vals, *epsilon, *smoothing, false))
                    .map(|e| e.eval(q))
                    .unwrap_or(vals[0])
            }
        }
    }
}
