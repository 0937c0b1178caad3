//! Piecewise-constant graph partition under a Potts penalty.
//!
//! The energy of an assignment of points to components with values `g` is
//!
//! ```text
//! Σ_i ‖g[comp(i)] − f_i‖² + λ Σ_{(i,j) ∈ E} ω_ij [comp(i) ≠ comp(j)]
//! ```
//!
//! [`cut_pursuit`] minimises it approximately by repeatedly splitting each
//! component with a binary graph cut, then greedily merging adjacent
//! components while that lowers the energy. [`brute_force_partition`]
//! solves tiny problems exactly and serves as the reference.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::flow::FlowNetwork;
use crate::graph::{AdjacencyGraph, Neighbors, UnionFind};
use crate::mat::{sq_dist, Mat};
use crate::sampling::split_oversized;

/// Components larger than this seed 2-means with the double-sweep
/// approximation of the farthest feature pair.
const EXACT_SEED_LIMIT: usize = 64;

/// Alternations of binary cut and value re-estimation per split attempt.
const CUT_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct PartitionProblem<'a> {
    pub graph: &'a AdjacencyGraph,
    pub features: &'a Mat,
    pub lambda: f64,
}

impl<'a> PartitionProblem<'a> {
    pub fn new(graph: &'a AdjacencyGraph, features: &'a Mat, lambda: f64) -> Result<Self> {
        if features.rows() != graph.num_vertices() {
            return Err(Error::arg(format!(
                "{} feature rows for {} vertices",
                features.rows(),
                graph.num_vertices()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(PartitionProblem {
            graph,
            features,
            lambda,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionResult {
    /// Dense component id per point.
    pub component: Vec<usize>,
    /// `m × c`, the mean feature of each component.
    pub values: Mat,
    pub energy: f64,
    /// Energy after each solver iteration, starting with the initial state.
    pub trace: Vec<f64>,
}

impl PartitionResult {
    pub fn num_components(&self) -> usize {
        self.values.rows()
    }

    /// Point indices of every component.
    pub fn members(&self) -> Vec<Vec<usize>> {
        members_of(&self.component, self.num_components())
    }

    /// Builds a result from an assignment, computing means and energy.
    pub fn from_assignment(problem: &PartitionProblem, component: Vec<usize>) -> Result<Self> {
        let (component, m) = canonical_labels(&component);
        let values = component_means(problem.features, &component, m);
        let energy = partition_energy(problem, &component, &values)?;
        Ok(PartitionResult {
            component,
            values,
            energy,
            trace: vec![energy],
        })
    }
}

pub(crate) fn members_of(component: &[usize], m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); m];
    for (i, &c) in component.iter().enumerate() {
        out[c].push(i);
    }
    out
}

/// Relabels ids densely in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

pub fn component_means(features: &Mat, component: &[usize], m: usize) -> Mat {
    let c = features.cols();
    let mut sums = Mat::zeros(m, c);
    let mut counts = vec![0usize; m];
    for (i, &k) in component.iter().enumerate() {
        counts[k] += 1;
        for (s, v) in sums.row_mut(k).iter_mut().zip(features.row(i)) {
            *s += v;
        }
    }
    for (k, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            for s in sums.row_mut(k) {
                *s /= cnt as f64;
            }
        }
    }
    sums
}

pub fn partition_energy(
    problem: &PartitionProblem,
    component: &[usize],
    values: &Mat,
) -> Result<f64> {
    if component.len() != problem.len() {
        return Err(Error::arg(format!(
            "{} component ids for {} points",
            component.len(),
            problem.len()
        )));
    }
    if values.cols() != problem.dim() {
        return Err(Error::arg(format!(
            "values have {} columns, features have {}",
            values.cols(),
            problem.dim()
        )));
    }
    if let Some(&bad) = component.iter().find(|&&k| k >= values.rows()) {
        return Err(Error::arg(format!(
            "component id {bad} has no value row ({} rows)",
            values.rows()
        )));
    }
    let fidelity: f64 = component
        .iter()
        .enumerate()
        .map(|(i, &k)| sq_dist(values.row(k), problem.features.row(i)))
        .sum();
    let cut: f64 = problem
        .graph
        .edges()
        .iter()
        .filter(|e| component[e.i] != component[e.j])
        .map(|e| e.weight)
        .sum();
    Ok(fidelity + problem.lambda * cut)
}

#[derive(Debug, Clone, Copy)]
pub struct CutPursuitOptions {
    pub max_iter: usize,
    pub kmeans_sweeps: usize,
    /// Greedy merge of adjacent components after each split round.
    pub merge: bool,
    /// Passes of single-vertex moves between adjacent components.
    pub refine_sweeps: usize,
    /// Also descend from singletons merged greedily and keep the better run.
    pub agglomerative_start: bool,
}

impl Default for CutPursuitOptions {
    fn default() -> Self {
        CutPursuitOptions {
            max_iter: 10,
            kmeans_sweeps: 5,
            merge: true,
            refine_sweeps: 3,
            agglomerative_start: true,
        }
    }
}

pub fn cut_pursuit(problem: &PartitionProblem) -> PartitionResult {
    cut_pursuit_with(problem, &CutPursuitOptions::default())
}

pub fn cut_pursuit_with(problem: &PartitionProblem, opts: &CutPursuitOptions) -> PartitionResult {
    let graph = problem.graph;
    let feats = problem.features;
    if problem.lambda == 0.0 {
        // fidelity alone: fuse only neighbours with identical features
        let mut uf = UnionFind::new(problem.len());
        for e in graph.edges() {
            if feats.row(e.i) == feats.row(e.j) {
                uf.union(e.i, e.j);
            }
        }
        let (component, _) = uf.dense_labels();
        return PartitionResult::from_assignment(problem, component)
            .expect("internally consistent assignment");
    }

    let nbrs = graph.neighbors();
    let (start, _) = graph.connected_components();
    let coarse = descend(problem, &nbrs, start, opts);
    if !opts.agglomerative_start {
        return coarse;
    }
    // second start: every point alone, greedily merged
    let mut start: Vec<usize> = (0..problem.len()).collect();
    merge_components(problem, &mut start);
    let fine = descend(problem, &nbrs, start, opts);
    if fine.energy < coarse.energy {
        fine
    } else {
        coarse
    }
}

/// Alternates splits, merges and boundary moves from `component` until the
/// energy stops decreasing.
fn descend(
    problem: &PartitionProblem,
    nbrs: &Neighbors,
    component: Vec<usize>,
    opts: &CutPursuitOptions,
) -> PartitionResult {
    let mut current = PartitionResult::from_assignment(problem, component)
        .expect("internally consistent assignment");
    let mut component = current.component.clone();
    let mut trace = vec![current.energy];

    for _ in 0..opts.max_iter {
        let m = current.num_components();
        let members = members_of(&component, m);
        let mut pos = vec![0usize; component.len()];
        for nodes in &members {
            for (k, &v) in nodes.iter().enumerate() {
                pos[v] = k;
            }
        }
        let splits: Vec<Option<Vec<Vec<usize>>>> = members
            .par_iter()
            .map(|nodes| try_split(problem, nbrs, &component, &pos, nodes, opts))
            .collect();
        let mut changed = false;
        let mut next = vec![0usize; component.len()];
        let mut id = 0;
        for (nodes, split) in members.iter().zip(splits) {
            match split {
                Some(parts) => {
                    changed = true;
                    for part in parts {
                        for v in part {
                            next[v] = id;
                        }
                        id += 1;
                    }
                }
                None => {
                    for &v in nodes {
                        next[v] = id;
                    }
                    id += 1;
                }
            }
        }
        if opts.merge && merge_components(problem, &mut next) {
            changed = true;
        }
        if opts.refine_sweeps > 0 && refine_boundaries(problem, nbrs, &mut next, opts.refine_sweeps)
        {
            changed = true;
        }
        if !changed {
            break;
        }
        let candidate = PartitionResult::from_assignment(problem, next.clone())
            .expect("internally consistent assignment");
        if candidate.energy >= current.energy {
            break;
        }
        component = candidate.component.clone();
        current = candidate;
        trace.push(current.energy);
    }
    current.trace = trace;
    current
}

fn improves(new: f64, old: f64) -> bool {
    new < old - 1e-12 * (1.0 + old.abs())
}

fn try_split(
    problem: &PartitionProblem,
    nbrs: &Neighbors,
    component: &[usize],
    pos: &[usize],
    nodes: &[usize],
    opts: &CutPursuitOptions,
) -> Option<Vec<Vec<usize>>> {
    let k = nodes.len();
    if k < 2 {
        return None;
    }
    let feats = problem.features;
    let f = |local: usize| feats.row(nodes[local]);
    let c = problem.dim();

    let (a, b) = seed_pair(nodes, feats);
    if sq_dist(f(a), f(b)) == 0.0 {
        return None;
    }
    let mut centroids = [f(a).to_vec(), f(b).to_vec()];
    let mut assign = vec![0u8; k];
    for _ in 0..opts.kmeans_sweeps {
        for (i, lab) in assign.iter_mut().enumerate() {
            let d0 = sq_dist(f(i), &centroids[0]);
            let d1 = sq_dist(f(i), &centroids[1]);
            *lab = u8::from(d1 < d0);
        }
        let mut sums = [vec![0.0; c], vec![0.0; c]];
        let mut counts = [0usize; 2];
        for (i, &lab) in assign.iter().enumerate() {
            counts[lab as usize] += 1;
            for (s, v) in sums[lab as usize].iter_mut().zip(f(i)) {
                *s += v;
            }
        }
        for t in 0..2 {
            if counts[t] > 0 {
                centroids[t] = sums[t].iter().map(|s| s / counts[t] as f64).collect();
            }
        }
    }

    // second start: the point farthest from the mean against the rest
    let mut mean = vec![0.0; c];
    for i in 0..k {
        for (m, v) in mean.iter_mut().zip(f(i)) {
            *m += v;
        }
    }
    let far = (0..k)
        .map(|i| {
            (
                sq_dist(f(i), &mean.iter().map(|m| m / k as f64).collect::<Vec<_>>()),
                i,
            )
        })
        .fold(
            (f64::NEG_INFINITY, 0),
            |acc, x| if x.0 > acc.0 { x } else { acc },
        )
        .1;
    let rest: Vec<f64> = mean
        .iter()
        .zip(f(far))
        .map(|(m, v)| (m - v) / (k - 1) as f64)
        .collect();
    let outlier = [rest, f(far).to_vec()];

    let lambda = problem.lambda;
    let edges = problem.graph.edges();
    let old = fidelity(feats, nodes);
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for mut centroids in [centroids, outlier] {
        let mut prev_labels: Option<Vec<bool>> = None;
        for _ in 0..CUT_ROUNDS {
            let labels = binary_cut(problem, nbrs, component, pos, nodes, &centroids);
            if prev_labels.as_ref() == Some(&labels) {
                break;
            }
            let (piece, pieces) = label_pieces(nbrs, component, pos, nodes, &labels);
            if pieces.len() >= 2 {
                let mut energy: f64 = pieces.iter().map(|p| fidelity(feats, p)).sum();
                for (i, &v) in nodes.iter().enumerate() {
                    for &(u, e) in nbrs.of(v) {
                        if u > v && component[u] == component[v] && piece[pos[u]] != piece[i] {
                            energy += lambda * edges[e].weight;
                        }
                    }
                }
                if best.as_ref().is_none_or(|(b, _)| energy < *b) {
                    best = Some((energy, pieces));
                }
            }
            // re-estimate both values from the cut
            let mut sums = [vec![0.0; c], vec![0.0; c]];
            let mut counts = [0usize; 2];
            for (i, &src) in labels.iter().enumerate() {
                let t = usize::from(!src);
                counts[t] += 1;
                for (s, v) in sums[t].iter_mut().zip(f(i)) {
                    *s += v;
                }
            }
            if counts.contains(&0) {
                break;
            }
            for t in 0..2 {
                centroids[t] = sums[t].iter().map(|s| s / counts[t] as f64).collect();
            }
            prev_labels = Some(labels);
        }
    }
    match best {
        Some((new, mut pieces)) if improves(new, old) => {
            for p in pieces.iter_mut() {
                p.sort_unstable();
            }
            Some(pieces)
        }
        _ => None,
    }
}

/// Min-cut labelling of a component between two values; `true` means the
/// point takes `centroids[0]`.
fn binary_cut(
    problem: &PartitionProblem,
    nbrs: &Neighbors,
    component: &[usize],
    pos: &[usize],
    nodes: &[usize],
    centroids: &[Vec<f64>; 2],
) -> Vec<bool> {
    let k = nodes.len();
    let feats = problem.features;
    let source = k;
    let sink = k + 1;
    let mut net = FlowNetwork::with_capacity(k + 2, 4 * k);
    for (i, &v) in nodes.iter().enumerate() {
        let d0 = sq_dist(feats.row(v), &centroids[0]);
        let d1 = sq_dist(feats.row(v), &centroids[1]);
        if d1 > d0 {
            net.add_edge(source, i, d1 - d0, 0.0);
        } else if d0 > d1 {
            net.add_edge(i, sink, d0 - d1, 0.0);
        }
    }
    let edges = problem.graph.edges();
    for (i, &v) in nodes.iter().enumerate() {
        for &(u, e) in nbrs.of(v) {
            if u > v && component[u] == component[v] {
                let w = problem.lambda * edges[e].weight;
                net.add_edge(i, pos[u], w, w);
            }
        }
    }
    let mut side = net.solve(source, sink).source_side;
    side.truncate(k);
    side
}

/// Connected pieces of equal label inside one component: the local piece id
/// of every node and the global members of every piece.
fn label_pieces(
    nbrs: &Neighbors,
    component: &[usize],
    pos: &[usize],
    nodes: &[usize],
    labels: &[bool],
) -> (Vec<usize>, Vec<Vec<usize>>) {
    let k = nodes.len();
    let mut piece = vec![usize::MAX; k];
    let mut pieces: Vec<Vec<usize>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..k {
        if piece[start] != usize::MAX {
            continue;
        }
        let id = pieces.len();
        let mut part = vec![nodes[start]];
        piece[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let v = nodes[i];
            for &(u, _) in nbrs.of(v) {
                if component[u] != component[v] {
                    continue;
                }
                let j = pos[u];
                if piece[j] == usize::MAX && labels[j] == labels[i] {
                    piece[j] = id;
                    part.push(u);
                    queue.push_back(j);
                }
            }
        }
        pieces.push(part);
    }
    (piece, pieces)
}

/// Local indices of two far-apart feature vectors; ties go to lower indices.
fn seed_pair(nodes: &[usize], feats: &Mat) -> (usize, usize) {
    let f = |local: usize| feats.row(nodes[local]);
    let k = nodes.len();
    let argmax_from = |anchor: &[f64]| {
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..k {
            let d = sq_dist(f(i), anchor);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        best
    };
    if k <= EXACT_SEED_LIMIT {
        let mut best = (0, 1);
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..k {
            for j in i + 1..k {
                let d = sq_dist(f(i), f(j));
                if d > best_d {
                    best_d = d;
                    best = (i, j);
                }
            }
        }
        best
    } else {
        let c = feats.cols();
        let mut mean = vec![0.0; c];
        for i in 0..k {
            for (m, v) in mean.iter_mut().zip(f(i)) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= k as f64;
        }
        let a = argmax_from(&mean);
        let b = argmax_from(f(a));
        (a.min(b), a.max(b))
    }
}

fn fidelity(feats: &Mat, nodes: &[usize]) -> f64 {
    let c = feats.cols();
    let mut mean = vec![0.0; c];
    for &v in nodes {
        for (m, x) in mean.iter_mut().zip(feats.row(v)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= nodes.len() as f64;
    }
    nodes.iter().map(|&v| sq_dist(feats.row(v), &mean)).sum()
}

#[derive(Debug, PartialEq)]
struct MergeCandidate {
    gain: f64,
    a: usize,
    b: usize,
    stamp: (u64, u64),
}

impl Eq for MergeCandidate {}

impl Ord for MergeCandidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on gain, then lowest (a, b)
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

impl PartialOrd for MergeCandidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedily merges adjacent components while a merge lowers the energy.
/// Gains of pairs touched by an earlier merge are refreshed lazily when they
/// reach the top of the queue. Relabels `component` in place; returns
/// whether anything merged.
fn merge_components(problem: &PartitionProblem, component: &mut [usize]) -> bool {
    let m = component.iter().max().map_or(0, |&x| x + 1);
    let c = problem.dim();
    let mut counts = vec![0usize; m];
    let mut sums = vec![0.0; m * c];
    for (i, &k) in component.iter().enumerate() {
        counts[k] += 1;
        for (s, v) in sums[k * c..(k + 1) * c].iter_mut().zip(problem.features.row(i)) {
            *s += v;
        }
    }
    let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); m];
    for e in problem.graph.edges() {
        let (a, b) = (component[e.i], component[e.j]);
        if a != b {
            *adj[a].entry(b).or_insert(0.0) += e.weight;
            *adj[b].entry(a).or_insert(0.0) += e.weight;
        }
    }
    let lambda = problem.lambda;
    let gain = |counts: &[usize], sums: &[f64], a: usize, b: usize, w: f64| {
        let (na, nb) = (counts[a] as f64, counts[b] as f64);
        let mut d2 = 0.0;
        for t in 0..c {
            let diff = sums[a * c + t] / na - sums[b * c + t] / nb;
            d2 += diff * diff;
        }
        // energy decrease from merging a and b
        lambda * w - na * nb / (na + nb) * d2
    };
    let mut version = vec![0u64; m];
    let mut alive = vec![true; m];
    let mut heap = BinaryHeap::new();
    for a in 0..m {
        for (&b, &w) in &adj[a] {
            if a < b {
                let g = gain(&counts, &sums, a, b, w);
                heap.push(MergeCandidate { gain: g, a, b, stamp: (0, 0) });
            }
        }
    }
    let mut uf = UnionFind::new(m);
    let mut merged = false;
    while let Some(cand) = heap.pop() {
        let (a, b) = (cand.a, cand.b);
        if !(alive[a] && alive[b]) {
            continue;
        }
        if cand.stamp != (version[a], version[b]) {
            let w = adj[a][&b];
            heap.push(MergeCandidate {
                gain: gain(&counts, &sums, a, b, w),
                a,
                b,
                stamp: (version[a], version[b]),
            });
            continue;
        }
        if cand.gain <= 1e-12 * (1.0 + cand.gain.abs()) {
            break;
        }
        merged = true;
        // the larger neighbourhood survives
        let (keep, gone) = if adj[a].len() >= adj[b].len() { (a, b) } else { (b, a) };
        uf.union(keep, gone);
        alive[gone] = false;
        counts[keep] += counts[gone];
        for t in 0..c {
            sums[keep * c + t] += sums[gone * c + t];
        }
        let absorbed = std::mem::take(&mut adj[gone]);
        adj[keep].remove(&gone);
        version[keep] += 1;
        for (x, w) in absorbed {
            if x == keep {
                continue;
            }
            adj[x].remove(&gone);
            *adj[x].entry(keep).or_insert(0.0) += w;
            let total = *adj[keep].entry(x).and_modify(|v| *v += w).or_insert(w);
            let (p, q) = (keep.min(x), keep.max(x));
            heap.push(MergeCandidate {
                gain: gain(&counts, &sums, keep, x, total),
                a: p,
                b: q,
                stamp: (version[p], version[q]),
            });
        }
    }
    if merged {
        for k in component.iter_mut() {
            *k = uf.find(*k);
        }
    }
    merged
}

/// Moves single vertices to an adjacent component whenever that lowers the
/// energy, then splits components the moves disconnected. Relabels
/// `component` in place; returns whether any vertex moved.
fn refine_boundaries(
    problem: &PartitionProblem,
    nbrs: &Neighbors,
    component: &mut [usize],
    sweeps: usize,
) -> bool {
    let feats = problem.features;
    let c = problem.dim();
    let m = component.iter().max().map_or(0, |&x| x + 1);
    let mut counts = vec![0usize; m];
    let mut sums = vec![0.0; m * c];
    for (i, &k) in component.iter().enumerate() {
        counts[k] += 1;
        for (s, v) in sums[k * c..(k + 1) * c].iter_mut().zip(feats.row(i)) {
            *s += v;
        }
    }
    // ‖f − mean(k)‖²
    let dist_to = |counts: &[usize], sums: &[f64], k: usize, f: &[f64]| {
        let n = counts[k] as f64;
        (0..c)
            .map(|t| (f[t] - sums[k * c + t] / n).powi(2))
            .sum::<f64>()
    };
    let edges = problem.graph.edges();
    let lambda = problem.lambda;
    let mut moved = false;
    let mut link: BTreeMap<usize, f64> = BTreeMap::new();
    for _ in 0..sweeps {
        let mut any = false;
        for v in 0..component.len() {
            let a = component[v];
            link.clear();
            for &(u, e) in nbrs.of(v) {
                *link.entry(component[u]).or_insert(0.0) += edges[e].weight;
            }
            if link.keys().all(|&k| k == a) {
                continue;
            }
            let f = feats.row(v);
            let na = counts[a] as f64;
            let leave = if counts[a] > 1 {
                na / (na - 1.0) * dist_to(&counts, &sums, a, f)
            } else {
                0.0
            };
            let w_a = link.get(&a).copied().unwrap_or(0.0);
            let mut best: Option<(f64, usize)> = None;
            for (&b, &w_b) in &link {
                if b == a {
                    continue;
                }
                let nb = counts[b] as f64;
                let join = nb / (nb + 1.0) * dist_to(&counts, &sums, b, f);
                let delta = join - leave + lambda * (w_a - w_b);
                if best.is_none_or(|(d, _)| delta < d) {
                    best = Some((delta, b));
                }
            }
            let Some((delta, b)) = best else { continue };
            if delta < -1e-12 * (1.0 + leave.abs()) {
                counts[a] -= 1;
                counts[b] += 1;
                for t in 0..c {
                    sums[a * c + t] -= f[t];
                    sums[b * c + t] += f[t];
                }
                component[v] = b;
                any = true;
            }
        }
        if !any {
            break;
        }
        moved = true;
    }
    if moved {
        let mut uf = UnionFind::new(component.len());
        for e in edges {
            if component[e.i] == component[e.j] {
                uf.union(e.i, e.j);
            }
        }
        let (pieces, _) = uf.dense_labels();
        component.copy_from_slice(&pieces);
    }
    moved
}

/// Largest problem the exhaustive solver accepts.
pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Exact minimiser by enumeration of all partitions into connected components.
pub fn brute_force_partition(problem: &PartitionProblem) -> Result<PartitionResult> {
    let n = problem.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::Size(format!(
            "brute force is limited to {BRUTE_FORCE_LIMIT} points, got {n}"
        )));
    }
    if n == 0 {
        return Err(Error::arg("empty problem"));
    }
    let nbrs = problem.graph.neighbors();
    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    enumerate_partitions(&mut labels, 1, 1, &mut |labels, m| {
        if !blocks_connected(&nbrs, labels, m) {
            return;
        }
        let values = component_means(problem.features, labels, m);
        let e = partition_energy(problem, labels, &values).expect("consistent shapes");
        if best.as_ref().is_none_or(|(b, _)| e < *b) {
            best = Some((e, labels.to_vec()));
        }
    });
    let (_, labels) = best.expect("at least one partition exists");
    PartitionResult::from_assignment(problem, labels)
}

// restricted growth strings: labels[i] <= max(labels[..i]) + 1
fn enumerate_partitions(
    labels: &mut [usize],
    i: usize,
    used: usize,
    visit: &mut impl FnMut(&[usize], usize),
) {
    if i == labels.len() {
        visit(labels, used);
        return;
    }
    for l in 0..=used {
        labels[i] = l;
        enumerate_partitions(labels, i + 1, used.max(l + 1), visit);
    }
}

fn blocks_connected(nbrs: &Neighbors, labels: &[usize], m: usize) -> bool {
    let n = labels.len();
    let mut seen = vec![false; n];
    let mut roots = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        roots += 1;
        if roots > m {
            return false;
        }
        seen[s] = true;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for &(u, _) in nbrs.of(v) {
                if !seen[u] && labels[u] == labels[v] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
    }
    roots == m
}

/// True when every component induces a connected subgraph.
pub fn components_connected(graph: &AdjacencyGraph, component: &[usize]) -> bool {
    let m = component.iter().max().map_or(0, |&x| x + 1);
    blocks_connected(&graph.neighbors(), component, m)
}

/// Re-splits every component whose bounding-box diagonal exceeds `max_dia`
/// on a voxel grid of cell `max_dia / √3` anchored at the component's box
/// minimum. Means and energy are recomputed.
pub fn enforce_diameter_cap(
    result: &PartitionResult,
    cloud: &PointCloud,
    problem: &PartitionProblem,
    max_dia: f64,
) -> Result<PartitionResult> {
    if !(max_dia > 0.0 && max_dia.is_finite()) {
        return Err(Error::arg(format!(
            "max diameter must be positive, got {max_dia}"
        )));
    }
    if cloud.len() != result.component.len() {
        return Err(Error::arg("cloud and partition sizes differ"));
    }
    let (next, origin) = split_oversized(cloud.coords(), &result.component, result.num_components(), max_dia)?;
    let id = origin.len();
    let values = component_means(problem.features, &next, id);
    let energy = partition_energy(problem, &next, &values)?;
    Ok(PartitionResult {
        component: next,
        values,
        energy,
        trace: vec![energy],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn chain(n: usize) -> AdjacencyGraph {
        AdjacencyGraph::from_edges(
            n,
            (0..n - 1).map(|i| Edge {
                i,
                j: i + 1,
                weight: 1.0,
            }),
        )
        .unwrap()
    }

    #[test]
    fn energy_by_hand() {
        let g = chain(2);
        let f = Mat::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let p = PartitionProblem::new(&g, &f, 1.0).unwrap();
        let v = Mat::from_vec(1, 1, vec![1.0]).unwrap();
        assert_eq!(partition_energy(&p, &[0, 0], &v).unwrap(), 2.0);
        let p0 = PartitionProblem::new(&g, &f, 0.0).unwrap();
        assert_eq!(partition_energy(&p0, &[0, 1], &f).unwrap(), 0.0);
    }

    #[test]
    fn energy_rejects_mismatch() {
        let g = chain(2);
        let f = Mat::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let p = PartitionProblem::new(&g, &f, 1.0).unwrap();
        assert!(partition_energy(&p, &[0], &f).is_err());
        assert!(partition_energy(&p, &[0, 2], &f).is_err());
        assert!(partition_energy(&p, &[0, 1], &Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn five_node_chain() {
        let g = chain(5);
        let f = Mat::from_vec(5, 1, vec![0.0, 0.0, 0.0, 10.0, 10.0]).unwrap();
        let p = PartitionProblem::new(&g, &f, 1.0).unwrap();
        let r = cut_pursuit(&p);
        assert_eq!(r.component, vec![0, 0, 0, 1, 1]);
        assert!((r.energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_gives_singletons() {
        let g = chain(4);
        let f = Mat::from_vec(4, 1, vec![0.1, 0.5, 0.2, 0.9]).unwrap();
        let p = PartitionProblem::new(&g, &f, 0.0).unwrap();
        let r = cut_pursuit(&p);
        assert_eq!(r.num_components(), 4);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn brute_force_two_points() {
        let g = chain(2);
        let f = Mat::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let r = brute_force_partition(&PartitionProblem::new(&g, &f, 0.5).unwrap()).unwrap();
        assert_eq!(r.num_components(), 2);
        assert_eq!(r.energy, 0.5);
        let r = brute_force_partition(&PartitionProblem::new(&g, &f, 3.0).unwrap()).unwrap();
        assert_eq!(r.num_components(), 1);
        assert_eq!(r.energy, 2.0);
    }

    #[test]
    fn brute_force_limits() {
        let g = chain(11);
        let f = Mat::zeros(11, 1);
        let p = PartitionProblem::new(&g, &f, 1.0).unwrap();
        assert!(matches!(brute_force_partition(&p), Err(Error::Size(_))));
        let g1 = AdjacencyGraph::from_edges(1, []).unwrap();
        let f1 = Mat::zeros(1, 1);
        let r = brute_force_partition(&PartitionProblem::new(&g1, &f1, 1.0).unwrap()).unwrap();
        assert_eq!((r.num_components(), r.energy), (1, 0.0));
    }

    #[test]
    fn disconnected_graph_is_solved_per_part() {
        let g = AdjacencyGraph::from_edges(
            4,
            [
                Edge {
                    i: 0,
                    j: 1,
                    weight: 1.0,
                },
                Edge {
                    i: 2,
                    j: 3,
                    weight: 1.0,
                },
            ],
        )
        .unwrap();
        let f = Mat::from_vec(4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let r = cut_pursuit(&PartitionProblem::new(&g, &f, 10.0).unwrap());
        assert_eq!(r.component, vec![0, 0, 1, 1]);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn diameter_cap_splits_a_long_partition() {
        // x in [0, 0.5); a point at exactly 0.5 would open a third cell
        let pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64 * 0.0499, 0.0, 0.0]).collect();
        let cloud = PointCloud::from_coords(pts).unwrap();
        let g = chain(10);
        let f = Mat::zeros(10, 1);
        let p = PartitionProblem::new(&g, &f, 1.0).unwrap();
        let single = PartitionResult::from_assignment(&p, vec![0; 10]).unwrap();
        let capped = enforce_diameter_cap(&single, &cloud, &p, 0.25 * 3f64.sqrt()).unwrap();
        assert_eq!(capped.num_components(), 2);
        // x < 0.25 vs x >= 0.25
        assert_eq!(capped.component, vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
        let same = enforce_diameter_cap(&single, &cloud, &p, 1.0).unwrap();
        assert_eq!(same.component, single.component);
        assert_eq!(same.values, single.values);
    }
}
