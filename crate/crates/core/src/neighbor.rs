//! Exact k-nearest-neighbor and radius search over 3D points with a balanced k-d tree.
//!
//! Ties in distance are broken by the lower point index, so results are fully
//! determined by the indexed cloud and the query.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

pub const DEFAULT_LEAF_SIZE: usize = 16;

/// A neighbor hit: point index and Euclidean distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub distance: T,
}

#[derive(Debug)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

/// Immutable balanced k-d tree over a fixed set of points.
#[derive(Debug)]
pub struct SpatialIndex<T> {
    points: Vec<Vec3<T>>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
    leaf_size: usize,
}

#[derive(Clone, Copy)]
struct Candidate<T> {
    d2: T,
    index: usize,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl<T: Real> Eq for Candidate<T> {}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, o: &Self) -> Ordering {
        self.d2.partial_cmp(&o.d2).unwrap_or(Ordering::Equal).then(self.index.cmp(&o.index))
    }
}

impl<T: Real> SpatialIndex<T> {
    pub fn new(points: &[Vec3<T>]) -> Self {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &[Vec3<T>], leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let mut index = Self { points: points.to_vec(), order: (0..points.len()).collect(), nodes: Vec::new(), leaf_size };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        if end - start <= self.leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        // Split on the axis of largest spread at the median.
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i].0[a]);
                hi[a] = hi[a].max(self.points[i].0[a]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap()).unwrap();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            points[i].0[axis].partial_cmp(&points[j].0[axis]).unwrap_or(Ordering::Equal)
        });
        let value = self.points[self.order[mid]].0[axis];
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[slot] = Node::Split { axis, value, left, right };
        slot
    }

    /// Exact `k` nearest neighbors, ascending by distance, ties by lower index.
    pub fn knn(&self, query: &Vec3<T>, k: usize) -> Result<Vec<Neighbor<T>>> {
        if k == 0 || k > self.points.len() {
            return Err(Error::OutOfRange { what: "k", value: k, min: 1, max: self.points.len() });
        }
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(0, query, k, &mut heap);
        Ok(finish(heap.into_sorted_vec()))
    }

    /// Nearest single point; `None` only for an empty index.
    pub fn nearest(&self, query: &Vec3<T>) -> Option<Neighbor<T>> {
        if self.points.is_empty() {
            return None;
        }
        self.knn(query, 1).ok().map(|v| v[0])
    }

    fn knn_visit(&self, node: usize, q: &Vec3<T>, k: usize, heap: &mut BinaryHeap<Candidate<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let c = Candidate { d2: self.points[i].distance_squared(q), index: i };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q.0[axis] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.knn_visit(near, q, k, heap);
                // `>=` keeps equal-distance candidates reachable for the index tie-break.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.knn_visit(far, q, k, heap);
                }
            }
        }
    }

    /// Every point with `distance² ≤ r²`, ascending by distance, ties by lower index.
    pub fn radius_neighbors(&self, query: &Vec3<T>, r: T) -> Result<Vec<Neighbor<T>>> {
        if !(r > T::zero()) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
        }
        let mut out = Vec::new();
        if !self.points.is_empty() {
            self.radius_visit(0, query, r * r, &mut out);
        }
        out.sort();
        Ok(finish(out))
    }

    fn radius_visit(&self, node: usize, q: &Vec3<T>, r2: T, out: &mut Vec<Candidate<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = self.points[i].distance_squared(q);
                    if d2 <= r2 {
                        out.push(Candidate { d2, index: i });
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q.0[axis] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.radius_visit(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_visit(far, q, r2, out);
                }
            }
        }
    }
}

fn finish<T: Real>(sorted: Vec<Candidate<T>>) -> Vec<Neighbor<T>> {
    sorted.into_iter().map(|c| Neighbor { index: c.index, distance: c.d2.sqrt() }).collect()
}
