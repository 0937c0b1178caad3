//! Geometry-informed aggregation: vector attention over the k nearest
//! points plus vector attention over the k nearest superpoints, summed and
//! passed through a merge map.

use std::sync::Arc;

use rand::Rng;

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::nn::{Linear, Mlp};
use crate::tensor::{Graph, NodeId, ParamStore, Tensor};

/// Neighbour indices and the matching relative offsets for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborContext {
    pub n: usize,
    pub k_local: usize,
    /// `n × k_local`, row `i` starts with `i`.
    pub local_idx: Arc<[usize]>,
    pub k_global: usize,
    /// `n × k_global` superpoint indices.
    pub global_idx: Arc<[usize]>,
    /// Superpoint count the global indices refer to.
    pub num_superpoints: usize,
    local_rel: Tensor,
    global_rel: Tensor,
    local_center: Arc<[usize]>,
    global_center: Arc<[usize]>,
}

fn repeat_rows(n: usize, k: usize) -> Arc<[usize]> {
    (0..n).flat_map(|i| std::iter::repeat_n(i, k)).collect()
}

fn offsets(from: &[Point3], to: &[Point3], idx: &[usize], k: usize) -> Tensor {
    let mut data = Vec::with_capacity(idx.len() * 3);
    for (r, &j) in idx.iter().enumerate() {
        let p = from[r / k];
        let q = to[j];
        data.extend_from_slice(&[p[0] - q[0], p[1] - q[1], p[2] - q[2]]);
    }
    Tensor::from_vec(&[idx.len(), 3], data).expect("sized")
}

impl NeighborContext {
    /// Builds both neighbourhoods by exact kNN. `k_local` is clipped to the
    /// point count and `k_global` to the superpoint count.
    pub fn build(coords: &[Point3], sp_coords: &[Point3], k_local: usize, k_global: usize) -> Result<Self> {
        let n = coords.len();
        if k_local == 0 {
            return Err(Error::arg("k_local must be at least 1"));
        }
        if k_global > 0 && sp_coords.is_empty() {
            return Err(Error::arg("superpoint set is empty but k_global > 0"));
        }
        let k_local = k_local.min(n);
        let index = KnnIndex::build(coords)?;
        let mut local_idx = Vec::with_capacity(n * k_local);
        for (i, p) in coords.iter().enumerate() {
            let (nb, _) = index.knn(p, k_local)?;
            local_idx.push(i);
            // duplicates may outrank the point itself
            local_idx.extend(nb.into_iter().filter(|&j| j != i).take(k_local - 1));
            while local_idx.len() < (i + 1) * k_local {
                local_idx.push(i);
            }
        }
        let k_global = k_global.min(sp_coords.len());
        let global_idx = if k_global > 0 {
            KnnIndex::build(sp_coords)?.knn_batch(coords, k_global)?
        } else {
            Vec::new()
        };
        Self::from_indices(coords, sp_coords, local_idx, k_local, global_idx, k_global)
    }

    /// Wraps precomputed neighbour lists after validating them.
    pub fn from_indices(
        coords: &[Point3],
        sp_coords: &[Point3],
        local_idx: Vec<usize>,
        k_local: usize,
        global_idx: Vec<usize>,
        k_global: usize,
    ) -> Result<Self> {
        let n = coords.len();
        if k_local == 0 || local_idx.len() != n * k_local {
            return Err(Error::arg("local index must be n × k_local with k_local ≥ 1"));
        }
        if global_idx.len() != n * k_global {
            return Err(Error::arg("global index must be n × k_global"));
        }
        if local_idx.iter().any(|&j| j >= n) {
            return Err(Error::arg("local neighbour index out of range"));
        }
        if global_idx.iter().any(|&j| j >= sp_coords.len()) {
            return Err(Error::arg("superpoint index out of range"));
        }
        Ok(NeighborContext {
            n,
            k_local,
            local_rel: offsets(coords, coords, &local_idx, k_local),
            global_rel: offsets(coords, sp_coords, &global_idx, k_global),
            local_center: repeat_rows(n, k_local),
            global_center: repeat_rows(n, k_global),
            local_idx: local_idx.into(),
            k_global,
            global_idx: global_idx.into(),
            num_superpoints: sp_coords.len(),
        })
    }
}

/// One vector-attention branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionParams {
    /// Applied to the attending point.
    pub center: Linear,
    /// Applied to the attended neighbour.
    pub neighbor: Linear,
    pub value: Linear,
    /// Position encoding of relative offsets, 3 → c.
    pub position: Mlp,
    /// Weight encoding, c → c.
    pub weight: Mlp,
}

impl AttentionParams {
    pub fn new(store: &mut ParamStore, name: &str, c: usize, rng: &mut impl Rng) -> Self {
        AttentionParams {
            center: Linear::new(store, &format!("{name}.center"), c, c, rng),
            neighbor: Linear::new(store, &format!("{name}.neighbor"), c, c, rng),
            value: Linear::new(store, &format!("{name}.value"), c, c, rng),
            position: Mlp::new(store, &format!("{name}.pos"), 3, c, rng),
            weight: Mlp::new(store, &format!("{name}.weight"), c, c, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GiaParams {
    pub local: AttentionParams,
    pub global: AttentionParams,
    pub merge: Linear,
}

impl GiaParams {
    pub fn new(store: &mut ParamStore, name: &str, c: usize, rng: &mut impl Rng) -> Self {
        GiaParams {
            local: AttentionParams::new(store, &format!("{name}.local"), c, rng),
            global: AttentionParams::new(store, &format!("{name}.global"), c, rng),
            merge: Linear::new(store, &format!("{name}.merge"), c, c, rng),
        }
    }
}

/// Output rows plus the `[n, k, c]` attention weights (absent when k = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attended {
    pub out: NodeId,
    pub weights: Option<NodeId>,
}

/// Which side the weight encoding subtracts.
#[derive(Clone, Copy)]
enum Relation {
    /// `neighbor(f_j) − center(f_i)`
    NeighborMinusCenter,
    /// `center(f_i) − neighbor(f_j)`
    CenterMinusNeighbor,
}

#[allow(clippy::too_many_arguments)]
fn attend(
    g: &mut Graph,
    store: &ParamStore,
    p: &AttentionParams,
    feats: NodeId,
    others: NodeId,
    idx: &Arc<[usize]>,
    center: &Arc<[usize]>,
    k: usize,
    rel: &Tensor,
    relation: Relation,
) -> Result<Attended> {
    let n = g.value(feats).rows();
    let c = g.value(feats).cols();
    let q = p.center.forward(g, store, feats)?;
    let q = g.gather(q, center.clone())?;
    let kf = p.neighbor.forward(g, store, others)?;
    let kf = g.gather(kf, idx.clone())?;
    let v = p.value.forward(g, store, others)?;
    let v = g.gather(v, idx.clone())?;
    let rel = g.input(rel.clone());
    let delta = p.position.forward(g, store, rel)?;
    let diff = match relation {
        Relation::NeighborMinusCenter => g.sub(kf, q)?,
        Relation::CenterMinusNeighbor => g.sub(q, kf)?,
    };
    let pre = g.add(diff, delta)?;
    let w = p.weight.forward(g, store, pre)?;
    let w = g.reshape(w, &[n, k, c])?;
    let w = g.softmax(w, 1)?;
    let v = g.add(v, delta)?;
    let v = g.reshape(v, &[n, k, c])?;
    let weighted = g.mul(w, v)?;
    let out = g.sum_axis(weighted, 1)?;
    Ok(Attended { out, weights: Some(w) })
}

/// `Σ_j softmax_j(ω(φ(f_j) − ψ(f_i) + θ(p_i − p_j))) ⊙ (α(f_j) + θ(p_i − p_j))`.
pub fn local_vector_attention(
    g: &mut Graph,
    store: &ParamStore,
    params: &AttentionParams,
    feats: NodeId,
    ctx: &NeighborContext,
) -> Result<Attended> {
    check_rows(g, feats, ctx)?;
    attend(
        g,
        store,
        params,
        feats,
        feats,
        &ctx.local_idx,
        &ctx.local_center,
        ctx.k_local,
        &ctx.local_rel,
        Relation::NeighborMinusCenter,
    )
}

/// Attention of every point over its nearest superpoints; zero when
/// `k_global = 0`.
pub fn partition_attention(
    g: &mut Graph,
    store: &ParamStore,
    params: &AttentionParams,
    feats: NodeId,
    sp_feats: Option<NodeId>,
    ctx: &NeighborContext,
) -> Result<Attended> {
    check_rows(g, feats, ctx)?;
    if ctx.k_global == 0 {
        let shape = g.shape(feats).to_vec();
        return Ok(Attended {
            out: g.input(Tensor::zeros(&shape)),
            weights: None,
        });
    }
    let sp = sp_feats.ok_or_else(|| Error::arg("superpoint features missing with k_global > 0"))?;
    if g.value(sp).rows() != ctx.num_superpoints {
        return Err(Error::arg(format!(
            "context indexes {} superpoints, got {}",
            ctx.num_superpoints,
            g.value(sp).rows()
        )));
    }
    attend(
        g,
        store,
        params,
        feats,
        sp,
        &ctx.global_idx,
        &ctx.global_center,
        ctx.k_global,
        &ctx.global_rel,
        Relation::CenterMinusNeighbor,
    )
}

/// `ξ(local + global)`.
pub fn geometry_informed_aggregation(
    g: &mut Graph,
    store: &ParamStore,
    params: &GiaParams,
    feats: NodeId,
    sp_feats: Option<NodeId>,
    ctx: &NeighborContext,
) -> Result<NodeId> {
    let local = local_vector_attention(g, store, &params.local, feats, ctx)?;
    let global = partition_attention(g, store, &params.global, feats, sp_feats, ctx)?;
    let sum = g.add(local.out, global.out)?;
    params.merge.forward(g, store, sum)
}

fn check_rows(g: &Graph, feats: NodeId, ctx: &NeighborContext) -> Result<()> {
    let shape = g.shape(feats);
    if shape.len() != 2 || shape[0] != ctx.n {
        return Err(Error::arg(format!(
            "features of shape {shape:?} do not match a context over {} points",
            ctx.n
        )));
    }
    Ok(())
}
