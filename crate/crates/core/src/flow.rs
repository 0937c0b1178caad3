//! Max-flow / min-cut with real capacities.
//!
//! The solver grows search trees from both terminals and reuses them between
//! augmentations (Boykov–Kolmogorov), which is fast on the shallow, wide
//! graphs produced by labelling problems.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MinCut {
    pub flow: f64,
    /// `true` for nodes on the source side of the minimum cut.
    pub source_side: Vec<bool>,
}

/// Directed network under construction.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    nodes: usize,
    edges: Vec<(u32, u32, f64, f64)>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            nodes,
            edges: Vec::new(),
        }
    }

    pub fn with_capacity(nodes: usize, arcs: usize) -> Self {
        FlowNetwork {
            nodes,
            edges: Vec::with_capacity(arcs),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes
    }

    /// Adds `u → v` with capacity `cap` and `v → u` with capacity `rev_cap`.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: f64, rev_cap: f64) {
        self.edges.push((u as u32, v as u32, cap, rev_cap));
    }

    pub fn solve(self, source: usize, sink: usize) -> MinCut {
        let mut solver = Solver::new(self, source, sink);
        solver.run();
        let mut side: Vec<bool> = (0..solver.n)
            .map(|i| solver.parent[i] != FREE && !solver.in_sink[i])
            .collect();
        side[source] = true;
        side[sink] = false;
        MinCut {
            flow: solver.flow,
            source_side: side,
        }
    }
}

const FREE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: u32,
    cap: f64,
}

struct Solver {
    n: usize,
    arcs: Vec<Arc>,
    first: Vec<u32>,
    adj: Vec<u32>,
    /// Residual terminal capacity: positive from the source, negative to the sink.
    tr_cap: Vec<f64>,
    /// Arc from a node towards its tree parent, or a marker.
    parent: Vec<u32>,
    in_sink: Vec<bool>,
    stamp: Vec<u64>,
    dist: Vec<u32>,
    active: VecDeque<u32>,
    is_active: Vec<bool>,
    orphans: VecDeque<u32>,
    time: u64,
    eps: f64,
    flow: f64,
}

impl Solver {
    fn new(net: FlowNetwork, source: usize, sink: usize) -> Self {
        let n = net.nodes;
        let mut tr_cap = vec![0.0; n];
        let mut to_sink = vec![0.0; n];
        let mut flow = 0.0;
        let mut degree = vec![0u32; n];
        let mut inner = Vec::with_capacity(net.edges.len());
        let mut max_cap: f64 = 0.0;
        let is_terminal = |x: usize| x == source || x == sink;
        for &(u, v, cap, rev) in &net.edges {
            let (u, v) = (u as usize, v as usize);
            max_cap = max_cap.max(cap).max(rev);
            if u == v {
                continue;
            }
            if is_terminal(u) || is_terminal(v) {
                for (a, b, c) in [(u, v, cap), (v, u, rev)] {
                    // arcs into the source or out of the sink never carry flow
                    if a == source && b == sink {
                        flow += c;
                    } else if a == source {
                        tr_cap[b] += c;
                    } else if b == sink {
                        to_sink[a] += c;
                    }
                }
            } else {
                degree[u] += 1;
                degree[v] += 1;
                inner.push((u, v, cap, rev));
            }
        }
        // a node linked to both terminals passes the common part straight through
        for (t, s) in tr_cap.iter_mut().zip(&to_sink) {
            flow += t.min(*s);
            *t -= s;
        }
        let mut first = vec![0u32; n + 1];
        for i in 0..n {
            first[i + 1] = first[i] + degree[i];
        }
        let mut fill = first.clone();
        let mut arcs = Vec::with_capacity(2 * inner.len());
        let mut adj = vec![0u32; 2 * inner.len()];
        for (u, v, c, r) in inner {
            let id = arcs.len() as u32;
            arcs.push(Arc { to: v as u32, cap: c });
            arcs.push(Arc { to: u as u32, cap: r });
            adj[fill[u] as usize] = id;
            fill[u] += 1;
            adj[fill[v] as usize] = id + 1;
            fill[v] += 1;
        }
        Solver {
            n,
            arcs,
            first,
            adj,
            tr_cap,
            parent: vec![FREE; n],
            in_sink: vec![false; n],
            stamp: vec![0; n],
            dist: vec![0; n],
            active: VecDeque::new(),
            is_active: vec![false; n],
            orphans: VecDeque::new(),
            time: 0,
            eps: 1e-12 * max_cap.max(1e-300),
            flow,
        }
    }

    fn arcs_of(&self, i: usize) -> std::ops::Range<usize> {
        self.first[i] as usize..self.first[i + 1] as usize
    }

    fn activate(&mut self, i: usize) {
        if !self.is_active[i] {
            self.is_active[i] = true;
            self.active.push_back(i as u32);
        }
    }

    fn run(&mut self) {
        for i in 0..self.n {
            let t = self.tr_cap[i];
            if t > self.eps || t < -self.eps {
                self.parent[i] = TERMINAL;
                self.in_sink[i] = t < 0.0;
                self.dist[i] = 1;
                self.activate(i);
            }
        }
        let mut current: Option<usize> = None;
        loop {
            // growth: find an arc from the source tree into the sink tree
            let mut bridge = None;
            while bridge.is_none() {
                let i = match current.take() {
                    Some(i) if self.parent[i] != FREE => i,
                    _ => match self.active.pop_front() {
                        Some(i) => {
                            let i = i as usize;
                            self.is_active[i] = false;
                            if self.parent[i] == FREE {
                                continue;
                            }
                            i
                        }
                        None => return,
                    },
                };
                bridge = self.grow(i);
                if bridge.is_some() {
                    current = Some(i);
                }
            }
            self.time += 1;
            self.augment(bridge.unwrap());
            self.adopt();
        }
    }

    /// Expands the tree of `i`; returns an arc from a source-tree node to a
    /// sink-tree node when the trees touch.
    fn grow(&mut self, i: usize) -> Option<u32> {
        let sink_tree = self.in_sink[i];
        for k in self.arcs_of(i) {
            let a = self.adj[k];
            // residual direction: away from the source, towards the sink
            let open = if sink_tree {
                self.arcs[(a ^ 1) as usize].cap
            } else {
                self.arcs[a as usize].cap
            };
            if open <= self.eps {
                continue;
            }
            let j = self.arcs[a as usize].to as usize;
            if self.parent[j] == FREE {
                self.parent[j] = a ^ 1;
                self.in_sink[j] = sink_tree;
                self.stamp[j] = self.stamp[i];
                self.dist[j] = self.dist[i] + 1;
                self.activate(j);
            } else if self.in_sink[j] != sink_tree {
                return Some(if sink_tree { a ^ 1 } else { a });
            } else if self.stamp[j] <= self.stamp[i] && self.dist[j] > self.dist[i] {
                // shorter path to the terminal through i
                self.parent[j] = a ^ 1;
                self.stamp[j] = self.stamp[i];
                self.dist[j] = self.dist[i] + 1;
            }
        }
        None
    }

    fn augment(&mut self, bridge: u32) {
        let bridge = bridge as usize;
        let mut push = self.arcs[bridge].cap;
        // parent arcs point from child to parent; in the source tree flow
        // runs parent → child, in the sink tree child → parent
        let mut i = self.arcs[bridge ^ 1].to as usize;
        while self.parent[i] != TERMINAL {
            let a = self.parent[i] as usize;
            push = push.min(self.arcs[a ^ 1].cap);
            i = self.arcs[a].to as usize;
        }
        push = push.min(self.tr_cap[i]);
        let mut j = self.arcs[bridge].to as usize;
        while self.parent[j] != TERMINAL {
            let a = self.parent[j] as usize;
            push = push.min(self.arcs[a].cap);
            j = self.arcs[a].to as usize;
        }
        push = push.min(-self.tr_cap[j]);

        self.arcs[bridge].cap -= push;
        self.arcs[bridge ^ 1].cap += push;
        let mut i = self.arcs[bridge ^ 1].to as usize;
        while self.parent[i] != TERMINAL {
            let a = self.parent[i] as usize;
            self.arcs[a].cap += push;
            self.arcs[a ^ 1].cap -= push;
            let next = self.arcs[a].to as usize;
            if self.arcs[a ^ 1].cap <= self.eps {
                self.make_orphan(i);
            }
            i = next;
        }
        self.tr_cap[i] -= push;
        if self.tr_cap[i] <= self.eps {
            self.make_orphan(i);
        }
        let mut j = self.arcs[bridge].to as usize;
        while self.parent[j] != TERMINAL {
            let a = self.parent[j] as usize;
            self.arcs[a ^ 1].cap += push;
            self.arcs[a].cap -= push;
            let next = self.arcs[a].to as usize;
            if self.arcs[a].cap <= self.eps {
                self.make_orphan(j);
            }
            j = next;
        }
        self.tr_cap[j] += push;
        if self.tr_cap[j] >= -self.eps {
            self.make_orphan(j);
        }
        self.flow += push;
    }

    fn make_orphan(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_back(i as u32);
    }

    /// Distance from `j` to its terminal when its path is intact.
    fn origin_distance(&mut self, start: usize) -> Option<u32> {
        let mut j = start;
        let mut d = 0u32;
        loop {
            if self.stamp[j] == self.time {
                d += self.dist[j];
                break;
            }
            let a = self.parent[j];
            d += 1;
            if a == TERMINAL {
                break;
            }
            if a == ORPHAN || a == FREE {
                return None;
            }
            j = self.arcs[a as usize].to as usize;
        }
        // cache distances along the verified path
        let mut j = start;
        let mut dd = d;
        while self.stamp[j] != self.time {
            self.stamp[j] = self.time;
            self.dist[j] = dd;
            let a = self.parent[j];
            if a == TERMINAL {
                break;
            }
            dd -= 1;
            j = self.arcs[a as usize].to as usize;
        }
        Some(d)
    }

    fn adopt(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            let i = i as usize;
            if self.parent[i] != ORPHAN {
                continue;
            }
            let sink_tree = self.in_sink[i];
            let t = self.tr_cap[i];
            if (sink_tree && t < -self.eps) || (!sink_tree && t > self.eps) {
                self.parent[i] = TERMINAL;
                self.stamp[i] = self.time;
                self.dist[i] = 1;
                continue;
            }
            let mut best: Option<(u32, u32)> = None;
            for k in self.arcs_of(i) {
                let a = self.adj[k];
                let j = self.arcs[a as usize].to as usize;
                if self.parent[j] == FREE || self.in_sink[j] != sink_tree {
                    continue;
                }
                // residual from the new parent towards i (source tree) or
                // from i towards the new parent (sink tree)
                let open = if sink_tree {
                    self.arcs[a as usize].cap
                } else {
                    self.arcs[(a ^ 1) as usize].cap
                };
                if open <= self.eps {
                    continue;
                }
                if let Some(d) = self.origin_distance(j) {
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, a));
                    }
                }
            }
            if let Some((d, a)) = best {
                self.parent[i] = a;
                self.stamp[i] = self.time;
                self.dist[i] = d + 1;
                continue;
            }
            self.parent[i] = FREE;
            self.is_active[i] = false;
            for k in self.arcs_of(i) {
                let a = self.adj[k];
                let j = self.arcs[a as usize].to as usize;
                if self.parent[j] == FREE || self.in_sink[j] != sink_tree {
                    continue;
                }
                let open = if sink_tree {
                    self.arcs[a as usize].cap
                } else {
                    self.arcs[(a ^ 1) as usize].cap
                };
                if open > self.eps {
                    self.activate(j);
                }
                let pj = self.parent[j];
                if pj != TERMINAL && pj != ORPHAN && self.arcs[pj as usize].to as usize == i {
                    self.make_orphan(j);
                }
            }
        }
    }
}

/// Maximum flow value and a minimum cut for a directed network.
pub fn max_flow_min_cut(
    nodes: usize,
    arcs: &[(usize, usize, f64)],
    source: usize,
    sink: usize,
) -> Result<MinCut> {
    if source == sink {
        return Err(Error::arg("source and sink must differ"));
    }
    if source >= nodes || sink >= nodes {
        return Err(Error::arg("source or sink out of range"));
    }
    let mut net = FlowNetwork::with_capacity(nodes, arcs.len());
    for &(u, v, c) in arcs {
        if u >= nodes || v >= nodes {
            return Err(Error::arg(format!("arc ({u}, {v}) out of range")));
        }
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::arg(format!("arc ({u}, {v}) has capacity {c}")));
        }
        net.add_edge(u, v, c, 0.0);
    }
    Ok(net.solve(source, sink))
}
