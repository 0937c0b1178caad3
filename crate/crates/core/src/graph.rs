//! Undirected weighted neighbourhood graph over a point cloud.

use crate::cloud::{dist, PointCloud};
use crate::error::{Error, Result};
use crate::knn::KnnIndex;

/// Minimum edge length used in the inverse-distance weight.
pub const MIN_EDGE_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
}

/// Edges are stored once with `i < j`, sorted, without duplicates or self-loops.
#[derive(Debug, Clone)]
pub struct AdjacencyGraph {
    n: usize,
    edges: Vec<Edge>,
}

/// Compressed adjacency lists: `(neighbour, edge index)` per vertex.
#[derive(Debug, Clone)]
pub struct Neighbors {
    offsets: Vec<usize>,
    entries: Vec<(usize, usize)>,
}

impl Neighbors {
    pub fn of(&self, v: usize) -> &[(usize, usize)] {
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }
}

impl AdjacencyGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut out: Vec<Edge> = Vec::new();
        for e in edges {
            if e.i == e.j {
                return Err(Error::invalid(format!("self-loop on vertex {}", e.i)));
            }
            if e.i >= n || e.j >= n {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) out of range",
                    e.i, e.j
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has weight {}",
                    e.i, e.j, e.weight
                )));
            }
            out.push(Edge {
                i: e.i.min(e.j),
                j: e.i.max(e.j),
                weight: e.weight,
            });
        }
        out.sort_by(|a, b| (a.i, a.j).cmp(&(b.i, b.j)));
        out.dedup_by(|a, b| a.i == b.i && a.j == b.j);
        Ok(AdjacencyGraph { n, edges: out })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self) -> Neighbors {
        let mut deg = vec![0usize; self.n + 1];
        for e in &self.edges {
            deg[e.i] += 1;
            deg[e.j] += 1;
        }
        let mut offsets = vec![0usize; self.n + 1];
        for v in 0..self.n {
            offsets[v + 1] = offsets[v] + deg[v];
        }
        let mut fill = offsets.clone();
        let mut entries = vec![(0, 0); 2 * self.edges.len()];
        for (k, e) in self.edges.iter().enumerate() {
            entries[fill[e.i]] = (e.j, k);
            fill[e.i] += 1;
            entries[fill[e.j]] = (e.i, k);
            fill[e.j] += 1;
        }
        Neighbors { offsets, entries }
    }

    /// Connected component id per vertex, numbered by lowest member.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.i, e.j);
        }
        uf.dense_labels()
    }
}

/// Symmetrized `k_adj`-NN graph with weights `mean_length / max(length, 1e-9)`.
pub fn build_adjacency(cloud: &PointCloud, k_adj: usize) -> Result<AdjacencyGraph> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::arg("adjacency needs at least two points"));
    }
    if k_adj == 0 || k_adj >= n {
        return Err(Error::arg(format!(
            "k_adj must lie in [1, {n}), got {k_adj}"
        )));
    }
    let index = KnnIndex::build(cloud.coords())?;
    let rows = index.knn_batch(cloud.coords(), k_adj + 1)?;
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * k_adj);
    for i in 0..n {
        let row = &rows[i * (k_adj + 1)..(i + 1) * (k_adj + 1)];
        for &j in row.iter().filter(|&&j| j != i).take(k_adj) {
            pairs.push((i.min(j), i.max(j)));
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let pts = cloud.coords();
    let lengths: Vec<f64> = pairs.iter().map(|&(i, j)| dist(&pts[i], &pts[j])).collect();
    let mean = lengths.iter().sum::<f64>() / lengths.len() as f64;
    let edges = pairs.iter().zip(&lengths).map(|(&(i, j), &d)| Edge {
        i,
        j,
        weight: if mean > 0.0 {
            mean / d.max(MIN_EDGE_LENGTH)
        } else {
            1.0
        },
    });
    AdjacencyGraph::from_edges(n, edges)
}

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }

    /// Dense labels in order of first appearance, plus the label count.
    pub fn dense_labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut next = 0;
        for v in 0..n {
            let r = self.find(v);
            if map[r] == usize::MAX {
                map[r] = next;
                next += 1;
            }
            labels[v] = map[r];
        }
        (labels, next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_single_unit_edge() {
        let c = PointCloud::from_coords(vec![[0.0; 3], [0.0, 0.0, 2.0]]).unwrap();
        let g = build_adjacency(&c, 1).unwrap();
        assert_eq!(
            g.edges(),
            &[Edge {
                i: 0,
                j: 1,
                weight: 1.0
            }]
        );
    }

    #[test]
    fn collinear_equidistant() {
        let c = PointCloud::from_coords(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let g = build_adjacency(&c, 1).unwrap();
        assert_eq!(g.edges().len(), 2);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn k_adj_must_be_below_n() {
        let c = PointCloud::from_coords(vec![[0.0; 3], [1.0; 3]]).unwrap();
        assert!(build_adjacency(&c, 2).is_err());
        assert!(build_adjacency(&c, 0).is_err());
    }

    #[test]
    fn coincident_points_get_unit_weight() {
        let c = PointCloud::from_coords(vec![[0.0; 3]; 3]).unwrap();
        let g = build_adjacency(&c, 2).unwrap();
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn from_edges_validates() {
        assert!(AdjacencyGraph::from_edges(
            2,
            [Edge {
                i: 1,
                j: 1,
                weight: 1.0
            }]
        )
        .is_err());
        assert!(AdjacencyGraph::from_edges(
            2,
            [Edge {
                i: 0,
                j: 1,
                weight: 0.0
            }]
        )
        .is_err());
        let g = AdjacencyGraph::from_edges(
            3,
            [
                Edge {
                    i: 1,
                    j: 0,
                    weight: 1.0,
                },
                Edge {
                    i: 0,
                    j: 1,
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.connected_components(), (vec![0, 0, 1], 2));
    }
}
