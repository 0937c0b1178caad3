//! Static kd-tree for exact k-nearest-neighbour queries in 3-D.
//!
//! Results are ordered by `(distance, index)`, so ties are broken by the
//! lower stored index and every query is deterministic.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::cloud::{dist2, Point3};
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 8;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    // range into `order`
    lo: u32,
    hi: u32,
    axis: u8,
    split: f64,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone)]
pub struct KnnIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    idx: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.idx.cmp(&other.idx))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KnnIndex {
    pub fn build(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::arg("cannot index an empty point set"));
        }
        if points.len() >= NO_CHILD as usize {
            return Err(Error::Size(format!(
                "{} points exceed the index capacity",
                points.len()
            )));
        }
        let mut index = KnnIndex {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    fn build_node(&mut self, lo: usize, hi: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo: lo as u32,
            hi: hi as u32,
            axis: 0,
            split: 0.0,
            left: NO_CHILD,
            right: NO_CHILD,
        });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for &i in &self.order[lo..hi] {
            let p = &self.points[i as usize];
            for d in 0..3 {
                min[d] = min[d].min(p[d]);
                max[d] = max[d].max(p[d]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (max[a] - min[a]).total_cmp(&(max[b] - min[b])))
            .unwrap();
        if max[axis] - min[axis] == 0.0 {
            // all points coincide
            return id;
        }
        let mid = (lo + hi) / 2;
        let points = &self.points;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
            points[a as usize][axis].total_cmp(&points[b as usize][axis])
        });
        let split = self.points[self.order[mid] as usize][axis];
        let left = self.build_node(lo, mid);
        let right = self.build_node(mid, hi);
        let node = &mut self.nodes[id as usize];
        node.axis = axis as u8;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// The `min(k, n)` nearest stored points with their Euclidean distances,
    /// sorted by nondecreasing distance.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        if k == 0 {
            return Err(Error::arg("k must be positive"));
        }
        let k = k.min(self.points.len());
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let sorted = heap.into_sorted_vec();
        Ok((
            sorted.iter().map(|c| c.idx as usize).collect(),
            sorted.iter().map(|c| c.d2.sqrt()).collect(),
        ))
    }

    /// Neighbour indices only, flattened row-major (`queries.len() × min(k, n)`).
    pub fn knn_batch(&self, queries: &[Point3], k: usize) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::arg("k must be positive"));
        }
        let rows: Vec<Vec<usize>> = queries
            .par_iter()
            .map(|q| self.knn(q, k).map(|(idx, _)| idx))
            .collect::<Result<_>>()?;
        Ok(rows.concat())
    }

    fn search(&self, node: u32, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let n = &self.nodes[node as usize];
        if n.left == NO_CHILD {
            for &i in &self.order[n.lo as usize..n.hi as usize] {
                let c = Candidate {
                    d2: dist2(q, &self.points[i as usize]),
                    idx: i,
                };
                if heap.len() < k {
                    heap.push(c);
                } else if c < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(c);
                }
            }
            return;
        }
        let diff = q[n.axis as usize] - n.split;
        let (near, far) = if diff < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, k, heap);
        // `<=` keeps equal-distance candidates with smaller indices reachable
        if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
            self.search(far, q, k, heap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points() {
        let idx = KnnIndex::build(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        let (i, d) = idx.knn(&[0.0, 0.0, 0.0], 1).unwrap();
        assert_eq!((i, d), (vec![0], vec![0.0]));
        let (i, d) = idx.knn(&[0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!((i, d), (vec![0, 1], vec![0.0, 1.0]));
    }

    #[test]
    fn k_zero_is_rejected() {
        let idx = KnnIndex::build(&[[0.0; 3]]).unwrap();
        assert!(idx.knn(&[0.0; 3], 0).is_err());
    }

    #[test]
    fn k_larger_than_n_returns_all() {
        let idx = KnnIndex::build(&[[0.0; 3], [1.0; 3], [2.0; 3]]).unwrap();
        assert_eq!(idx.knn(&[5.0; 3], 10).unwrap().0, vec![2, 1, 0]);
    }

    #[test]
    fn duplicates_tie_break_by_index() {
        let pts = vec![[1.0, 1.0, 1.0]; 20];
        let idx = KnnIndex::build(&pts).unwrap();
        assert_eq!(idx.knn(&[1.0; 3], 3).unwrap().0, vec![0, 1, 2]);
    }
}
