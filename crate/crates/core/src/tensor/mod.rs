//! Reverse-mode differentiation over a closed catalog of dense ops.
//!
//! A [`Graph`] records every op as it is evaluated; [`Graph::backward`] then
//! walks the record in reverse and accumulates gradients. Parameters live in
//! a [`ParamStore`] and enter a graph as leaves.

mod checkpoint;
pub mod gradcheck;
mod grad;
mod param;

use std::sync::Arc;

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_VERSION};
pub use param::{AdamW, ParamId, ParamStore};

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::arg(format!(
                "{} values do not fill shape {shape:?}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Size of the last axis (1 for scalars).
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Product of all axes but the last.
    pub fn rows(&self) -> usize {
        self.len() / self.cols().max(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Input,
    Param(ParamId),
    Affine { x: NodeId, w: NodeId, b: Option<NodeId> },
    Relu(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    RowScale(NodeId, Arc<[f64]>),
    Concat(Vec<NodeId>),
    Softmax { x: NodeId, axis: usize },
    Gather { x: NodeId, index: Arc<[usize]> },
    Reshape(NodeId),
    SegmentMax { x: NodeId, argmax: Vec<usize> },
    SegmentMean { x: NodeId, segment: Arc<[usize]>, counts: Vec<usize> },
    SumAxis { x: NodeId, axis: usize },
    SumAll(NodeId),
    MeanAll(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Vec<f64>, inv_std: Vec<f64> },
    CrossEntropy { logits: NodeId, target: Arc<[f64]>, probs: Vec<f64> },
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Record of evaluated ops.
#[derive(Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) grads: Vec<Option<Vec<f64>>>,
}

fn outer_len_inner(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].value.shape
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant leaf; receives a gradient but is never updated.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Input)
    }

    /// Leaf bound to a stored parameter; its gradient is collected by
    /// [`Graph::accumulate_param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    /// `x · w + b` over the last axis of `x`; `w` is `in × out`, `b` is `out`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.value(x);
        let ws = self.value(w);
        if ws.shape.len() != 2 || xs.shape.is_empty() || xs.cols() != ws.shape[0] {
            return Err(Error::shape(
                "affine",
                format!("input {:?} with weights {:?}", xs.shape, ws.shape),
            ));
        }
        let (rows, k, out) = (xs.rows(), ws.shape[0], ws.shape[1]);
        let mut y = vec![0.0; rows * out];
        if let Some(b) = b {
            let bs = self.value(b);
            if bs.len() != out {
                return Err(Error::shape(
                    "affine",
                    format!("bias {:?} for {out} outputs", bs.shape),
                ));
            }
            for r in 0..rows {
                y[r * out..(r + 1) * out].copy_from_slice(&bs.data);
            }
        }
        let (xd, wd) = (&xs.data, &ws.data);
        for r in 0..rows {
            let yr = &mut y[r * out..(r + 1) * out];
            for (t, &xv) in xd[r * k..(r + 1) * k].iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                for (yv, wv) in yr.iter_mut().zip(&wd[t * out..(t + 1) * out]) {
                    *yv += xv * wv;
                }
            }
        }
        let mut shape = xs.shape.clone();
        *shape.last_mut().unwrap() = out;
        Ok(self.push(Tensor { shape, data: y }, Op::Affine { x, w, b }))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let data = v.data.iter().map(|&a| a.max(0.0)).collect();
        let shape = v.shape.clone();
        self.push(Tensor { shape, data }, Op::Relu(x))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape.clone();
        self.push(Tensor { shape, data }, op)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let v = self.value(x);
        let data = v.data.iter().map(|&a| a * s).collect();
        let shape = v.shape.clone();
        self.push(Tensor { shape, data }, Op::Scale(x, s))
    }

    /// Multiplies row `i` (last axis) by the constant `weights[i]`.
    pub fn row_scale(&mut self, x: NodeId, weights: Arc<[f64]>) -> Result<NodeId> {
        let v = self.value(x);
        if weights.len() != v.rows() {
            return Err(Error::shape(
                "row_scale",
                format!("{} weights for {} rows", weights.len(), v.rows()),
            ));
        }
        let c = v.cols();
        let mut data = v.data.clone();
        for (r, w) in weights.iter().enumerate() {
            for a in &mut data[r * c..(r + 1) * c] {
                *a *= w;
            }
        }
        let shape = v.shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::RowScale(x, weights)))
    }

    /// Concatenation along the last axis.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat", "no inputs"));
        };
        let lead = &self.shape(first)[..self.shape(first).len().saturating_sub(1)];
        let rows = self.value(first).rows();
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.is_empty() || &s[..s.len() - 1] != lead {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} does not match leading axes {lead:?}", s),
                ));
            }
            cols += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead.to_vec();
        shape.push(cols);
        Ok(self.push(Tensor { shape, data }, Op::Concat(parts.to_vec())))
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(x);
        if axis >= v.shape.len() {
            return Err(Error::shape(
                "softmax",
                format!("axis {axis} for shape {:?}", v.shape),
            ));
        }
        let (outer, len, inner) = outer_len_inner(&v.shape, axis);
        let mut data = v.data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let at = |a: usize| (o * len + a) * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for a in 0..len {
                    mx = mx.max(data[at(a)]);
                }
                let mut sum = 0.0;
                for a in 0..len {
                    let e = (data[at(a)] - mx).exp();
                    data[at(a)] = e;
                    sum += e;
                }
                for a in 0..len {
                    data[at(a)] /= sum;
                }
            }
        }
        let shape = v.shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::Softmax { x, axis }))
    }

    /// Rows of `x` (last axis) selected by `index`; output is `len(index) × c`.
    pub fn gather(&mut self, x: NodeId, index: Arc<[usize]>) -> Result<NodeId> {
        let v = self.value(x);
        let (rows, c) = (v.rows(), v.cols());
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            if i >= rows {
                return Err(Error::shape(
                    "gather",
                    format!("row {i} out of {rows}"),
                ));
            }
            data.extend_from_slice(v.row(i));
        }
        let shape = vec![index.len(), c];
        Ok(self.push(Tensor { shape, data }, Op::Gather { x, index }))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} to {shape:?}", v.shape),
            ));
        }
        let t = Tensor {
            shape: shape.to_vec(),
            data: v.data.clone(),
        };
        Ok(self.push(t, Op::Reshape(x)))
    }

    fn check_segments(
        &self,
        op: &'static str,
        x: NodeId,
        segment: &[usize],
        count: usize,
    ) -> Result<Vec<usize>> {
        let rows = self.value(x).rows();
        if segment.len() != rows {
            return Err(Error::shape(
                op,
                format!("{} segment ids for {rows} rows", segment.len()),
            ));
        }
        let mut counts = vec![0usize; count];
        for &s in segment {
            if s >= count {
                return Err(Error::shape(op, format!("segment {s} out of {count}")));
            }
            counts[s] += 1;
        }
        if counts.contains(&0) {
            return Err(Error::Internal(format!("{op}: empty segment")));
        }
        Ok(counts)
    }

    /// Columnwise max over rows sharing a segment id. Ties go to the lowest row.
    pub fn segment_max(&mut self, x: NodeId, segment: &[usize], count: usize) -> Result<NodeId> {
        self.check_segments("segment_max", x, segment, count)?;
        let v = self.value(x);
        let c = v.cols();
        let mut data = vec![f64::NEG_INFINITY; count * c];
        let mut argmax = vec![usize::MAX; count * c];
        for (r, &s) in segment.iter().enumerate() {
            for (j, &a) in v.row(r).iter().enumerate() {
                let k = s * c + j;
                if argmax[k] == usize::MAX || a > data[k] {
                    data[k] = a;
                    argmax[k] = r;
                }
            }
        }
        let shape = vec![count, c];
        Ok(self.push(Tensor { shape, data }, Op::SegmentMax { x, argmax }))
    }

    pub fn segment_mean(
        &mut self,
        x: NodeId,
        segment: Arc<[usize]>,
        count: usize,
    ) -> Result<NodeId> {
        let counts = self.check_segments("segment_mean", x, &segment, count)?;
        let v = self.value(x);
        let c = v.cols();
        let mut data = vec![0.0; count * c];
        for (r, &s) in segment.iter().enumerate() {
            for (d, a) in data[s * c..(s + 1) * c].iter_mut().zip(v.row(r)) {
                *d += a;
            }
        }
        for (s, &n) in counts.iter().enumerate() {
            for d in &mut data[s * c..(s + 1) * c] {
                *d /= n as f64;
            }
        }
        let shape = vec![count, c];
        Ok(self.push(Tensor { shape, data }, Op::SegmentMean { x, segment, counts }))
    }

    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let v = self.value(x);
        if axis >= v.shape.len() {
            return Err(Error::shape(
                "sum_axis",
                format!("axis {axis} for shape {:?}", v.shape),
            ));
        }
        let (outer, len, inner) = outer_len_inner(&v.shape, axis);
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &v.data[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut shape = v.shape.clone();
        shape.remove(axis);
        Ok(self.push(Tensor { shape, data }, Op::SumAxis { x, axis }))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x);
        let s = v.data.iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(x))
    }

    /// Normalises the last axis to zero mean and unit variance, then applies
    /// the per-channel `gamma` and `beta`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let c = v.cols();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "gamma {:?} / beta {:?} for {c} channels",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            ));
        }
        let rows = v.rows();
        let mut xhat = vec![0.0; rows * c];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = v.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for (h, a) in xhat[r * c..(r + 1) * c].iter_mut().zip(row) {
                *h = (a - mean) * is;
            }
        }
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let mut data = xhat.clone();
        for r in 0..rows {
            for j in 0..c {
                data[r * c + j] = data[r * c + j] * g[j] + b[j];
            }
        }
        let shape = v.shape.clone();
        Ok(self.push(
            Tensor { shape, data },
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
        ))
    }

    /// Mean over rows of `−Σ_l t_l log softmax(z)_l`; `target` is a row-major
    /// `rows × classes` distribution.
    pub fn cross_entropy(&mut self, logits: NodeId, target: Arc<[f64]>) -> Result<NodeId> {
        let v = self.value(logits);
        if v.shape.len() != 2 || target.len() != v.len() {
            return Err(Error::shape(
                "cross_entropy",
                format!("logits {:?} with {} target values", v.shape, target.len()),
            ));
        }
        let (rows, c) = (v.rows(), v.cols());
        let mut probs = vec![0.0; rows * c];
        let mut loss = 0.0;
        for r in 0..rows {
            let z = v.row(r);
            let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + z.iter().map(|a| (a - mx).exp()).sum::<f64>().ln();
            for j in 0..c {
                probs[r * c + j] = (z[j] - lse).exp();
                let t = target[r * c + j];
                if t != 0.0 {
                    loss -= t * (z[j] - lse);
                }
            }
        }
        let loss = if rows > 0 { loss / rows as f64 } else { 0.0 };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, target, probs },
        ))
    }
}

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[u32], classes: usize) -> Vec<f64> {
    let mut t = vec![0.0; labels.len() * classes];
    for (r, &l) in labels.iter().enumerate() {
        t[r * classes + l as usize] = 1.0;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn identity_affine() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let w = g.input(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let b = g.input(t(&[2], &[0.0, 0.0]));
        let y = g.affine(x, w, Some(b)).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn affine_shape_error_names_op() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2, 3]));
        let w = g.input(Tensor::zeros(&[2, 2]));
        let err = g.affine(x, w, None).unwrap_err();
        assert!(err.to_string().contains("affine"));
    }

    #[test]
    fn softmax_singleton_axis() {
        let mut g = Graph::new();
        let x = g.input(t(&[3, 1, 2], &[5.0, -1.0, 0.3, 2.0, 7.0, 7.0]));
        let y = g.softmax(x, 1).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 3], &[1.0, 2.0, 3.0, -4.0, 0.0, 900.0]));
        let y = g.softmax(x, 1).unwrap();
        for r in 0..2 {
            assert!((g.value(y).row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_mean_example() {
        let mut g = Graph::new();
        let x = g.input(t(&[3, 1], &[2.0, 4.0, 10.0]));
        let y = g.segment_mean(x, vec![0, 0, 1].into(), 2).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 10.0]);
    }

    #[test]
    fn segment_max_routes_to_argmax() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 1], &[5.0, 2.0]));
        let y = g.segment_max(x, &[0, 0], 1).unwrap();
        let l = g.sum_all(y);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0]);
    }

    #[test]
    fn segment_max_tie_goes_to_lowest_row() {
        let mut g = Graph::new();
        let x = g.input(t(&[3, 1], &[1.0, 4.0, 4.0]));
        let y = g.segment_max(x, &[0, 0, 0], 1).unwrap();
        let l = g.sum_all(y);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn hadamard_gradient() {
        let mut g = Graph::new();
        let x = g.input(t(&[3], &[1.0, 2.0, 3.0]));
        let y = g.input(t(&[3], &[4.0, 5.0, 6.0]));
        let p = g.mul(x, y).unwrap();
        let l = g.sum_all(p);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2]));
        assert!(matches!(g.backward(x), Err(Error::Argument(_))));
    }

    #[test]
    fn cross_entropy_uniform_two_classes() {
        let mut g = Graph::new();
        let z = g.input(Tensor::zeros(&[1, 2]));
        let l = g.cross_entropy(z, vec![1.0, 0.0].into()).unwrap();
        assert!((g.value(l).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gather_scatters_back() {
        let mut g = Graph::new();
        let x = g.input(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let y = g.gather(x, vec![1, 1, 0].into()).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        let l = g.sum_all(y);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn concat_last_axis() {
        let mut g = Graph::new();
        let a = g.input(t(&[2, 1], &[1.0, 2.0]));
        let b = g.input(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
        let y = g.concat(&[a, b]).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let bad = g.input(Tensor::zeros(&[3, 1]));
        assert!(g.concat(&[a, bad]).is_err());
    }
}
