//! Static 2-d tree for k-nearest-neighbor queries.
//!
//! Results are ordered by `(squared distance, point index)`, so equidistant
//! neighbors resolve to the lowest index and queries are fully deterministic.

use std::cmp::Ordering;

use crate::geo_grid::LocalPoint;
use crate::scalar::Scalar;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis_y: bool, value: T, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<LocalPoint<T>>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

#[inline]
fn coord<T: Scalar>(p: &LocalPoint<T>, axis_y: bool) -> T {
    if axis_y {
        p.y
    } else {
        p.x
    }
}

#[inline]
fn closer<T: Scalar>(a: (T, usize), b: (T, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl<T: Scalar> KdTree<T> {
    pub fn new(points: Vec<LocalPoint<T>>) -> Self {
        let mut tree = KdTree { order: (0..points.len()).collect(), points, nodes: Vec::new() };
        if !tree.points.is_empty() {
            tree.build(0, tree.points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LocalPoint<T>] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let (mut lo, mut hi) = (self.points[self.order[start]], self.points[self.order[start]]);
        for &i in &self.order[start..end] {
            let p = self.points[i];
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let axis_y = hi.y - lo.y > hi.x - lo.x;
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coord(&pts[a], axis_y)
                .partial_cmp(&coord(&pts[b], axis_y))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let value = coord(&self.points[self.order[mid]], axis_y);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis_y, value, left, right };
        id
    }

    /// The `k` nearest points to `q` as `(index, squared distance)`, closest first.
    pub fn nearest(&self, q: &LocalPoint<T>, k: usize) -> Vec<(usize, T)> {
        let k = k.min(self.points.len());
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            self.search(0, q, k, &mut best);
        }
        best.into_iter().map(|(d, i)| (i, d)).collect()
    }

    fn search(&self, node: usize, q: &LocalPoint<T>, k: usize, best: &mut Vec<(T, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (self.points[i].dist2(q), i);
                    if best.len() < k || closer(cand, best[best.len() - 1]) {
                        let pos = best.partition_point(|&b| closer(b, cand));
                        best.insert(pos, cand);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { axis_y, value, left, right } => {
                let diff = coord(q, axis_y) - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// Exhaustive k-nearest search with the same ordering as [`KdTree::nearest`].
pub fn nearest_brute<T: Scalar>(points: &[LocalPoint<T>], q: &LocalPoint<T>, k: usize) -> Vec<(usize, T)> {
    let mut all: Vec<(T, usize)> = points.iter().enumerate().map(|(i, p)| (p.dist2(q), i)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all.into_iter().map(|(d, i)| (i, d)).collect()
}
