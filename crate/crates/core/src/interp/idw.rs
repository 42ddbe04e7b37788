//! Inverse distance weighting over the k nearest samples.

use serde::{Deserialize, Serialize};

use super::knn::{nearest_brute, KdTree};
use crate::geo_grid::LocalPoint;
use crate::scalar::Scalar;

/// Distance below which a query counts as an exact hit on a sample, in meters.
pub const EXACT_HIT_M: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdwParams {
    pub power: f64,
    pub k_neighbors: usize,
}

impl Default for IdwParams {
    fn default() -> Self {
        IdwParams { power: 2.0, k_neighbors: 12 }
    }
}

/// Normalized weights for neighbors given as `(index, squared distance)`, closest first.
fn neighbor_weights<T: Scalar>(neighbors: &[(usize, T)], power: T) -> Vec<T> {
    let hit = T::of(EXACT_HIT_M);
    if neighbors.first().is_some_and(|n| n.1 < hit * hit) {
        let mut w = vec![T::zero(); neighbors.len()];
        w[0] = T::one();
        return w;
    }
    let half = power / T::of(2.0);
    let raw: Vec<T> = neighbors.iter().map(|n| n.1.powf(-half)).collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// IDW weights of every point in `points` for `query`.
///
/// Only the `k_neighbors` nearest points get non-zero weight `d^-power`,
/// normalized to sum to one; a point closer than 1e-9 m takes all the weight.
pub fn idw_weights<T: Scalar>(query: &LocalPoint<T>, points: &[LocalPoint<T>], power: T, k_neighbors: usize) -> Vec<T> {
    let nbrs = nearest_brute(points, query, k_neighbors.max(1));
    let w = neighbor_weights(&nbrs, power);
    let mut out = vec![T::zero(); points.len()];
    for ((i, _), wi) in nbrs.iter().zip(w) {
        out[*i] = wi;
    }
    out
}

#[derive(Debug, Clone)]
pub struct IdwModel<T> {
    tree: KdTree<T>,
    values: Vec<T>,
    power: T,
    k: usize,
}

impl<T: Scalar> IdwModel<T> {
    pub fn new(points: Vec<LocalPoint<T>>, values: Vec<T>, params: &IdwParams) -> Self {
        IdwModel { tree: KdTree::new(points), values, power: T::of(params.power), k: params.k_neighbors.max(1) }
    }

    pub fn predict_one(&self, q: &LocalPoint<T>) -> T {
        let nbrs = self.tree.nearest(q, self.k);
        let w = neighbor_weights(&nbrs, self.power);
        nbrs.iter().zip(w).map(|((i, _), wi)| wi * self.values[*i]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(ds: &[f64]) -> Vec<LocalPoint<f64>> {
        ds.iter().map(|&d| LocalPoint::new(d, 0.0)).collect()
    }

    #[test]
    fn weight_examples() {
        let q = LocalPoint::new(0.0, 0.0);
        let w = idw_weights(&q, &[LocalPoint::new(1.0, 0.0), LocalPoint::new(0.0, -1.0)], 2.0, 12);
        assert_relative_eq!(w[0], 0.5);
        assert_relative_eq!(w[1], 0.5);

        let w = idw_weights(&q, &line(&[1.0, 2.0]), 2.0, 12);
        assert_relative_eq!(w[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(w[1], 0.2, epsilon = 1e-15);

        let w = idw_weights(&q, &line(&[3.0, 0.0, 1.0]), 2.0, 12);
        assert_eq!(w, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn only_k_nearest_contribute() {
        let w = idw_weights(&LocalPoint::new(0.0, 0.0), &line(&[1.0, 2.0, 3.0, 4.0]), 1.0, 2);
        assert_eq!(w[2], 0.0);
        assert_eq!(w[3], 0.0);
        assert_relative_eq!(w[0] + w[1], 1.0);
    }

    #[test]
    fn model_matches_weight_function() {
        let pts = vec![LocalPoint::new(0.0, 0.0), LocalPoint::new(10.0, 0.0), LocalPoint::new(3.0, 7.0)];
        let vals = vec![-60.0, -80.0, -75.0];
        let m = IdwModel::new(pts.clone(), vals.clone(), &IdwParams::default());
        let q = LocalPoint::new(4.0, 2.0);
        let w = idw_weights(&q, &pts, 2.0, 12);
        let expected: f64 = w.iter().zip(&vals).map(|(a, b)| a * b).sum();
        assert_relative_eq!(m.predict_one(&q), expected, epsilon = 1e-12);
        assert_eq!(m.predict_one(&pts[2]), -75.0);

        let pair = IdwModel::new(pts[..2].to_vec(), vals[..2].to_vec(), &IdwParams::default());
        assert_eq!(pair.predict_one(&LocalPoint::new(5.0, 3.0)), -70.0);
    }
}
