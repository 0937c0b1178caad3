use super::{outer_len_inner, Graph, NodeId, Op, ParamStore};
use crate::error::{Error, Result};

impl Graph {
    /// Gradient of a scalar `loss` with respect to every recorded node.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::arg(format!(
                "loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(gy) = grads[id].take() else { continue };
            self.propagate(id, &gy, &mut grads);
            grads[id] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last backward pass, if `id` influenced the loss.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradients of all parameter leaves into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for (node, g) in self.nodes.iter().zip(&self.grads) {
            if let (Op::Param(p), Some(g)) = (&node.op, g) {
                for (a, b) in store.grad_mut(*p).iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
    }

    fn propagate(&self, id: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let len_of = |n: NodeId| self.nodes[n.0].value.len();
        let mut acc = |n: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            let g = grads[n.0].get_or_insert_with(|| vec![0.0; len_of(n)]);
            f(g);
        };
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Affine { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (rows, k, out) = (xv.rows(), wv.shape[0], wv.shape[1]);
                acc(*x, &mut |gx| {
                    for r in 0..rows {
                        let gr = &gy[r * out..(r + 1) * out];
                        for t in 0..k {
                            let wr = &wv.data[t * out..(t + 1) * out];
                            gx[r * k + t] += gr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                });
                acc(*w, &mut |gw| {
                    for r in 0..rows {
                        let gr = &gy[r * out..(r + 1) * out];
                        for t in 0..k {
                            let xv = xv.data[r * k + t];
                            if xv == 0.0 {
                                continue;
                            }
                            for (a, g) in gw[t * out..(t + 1) * out].iter_mut().zip(gr) {
                                *a += xv * g;
                            }
                        }
                    }
                });
                if let Some(b) = b {
                    acc(*b, &mut |gb| {
                        for r in 0..rows {
                            for (a, g) in gb.iter_mut().zip(&gy[r * out..(r + 1) * out]) {
                                *a += g;
                            }
                        }
                    });
                }
            }
            Op::Relu(x) => {
                let xv = &self.value(*x).data;
                acc(*x, &mut |gx| {
                    for ((a, g), v) in gx.iter_mut().zip(gy).zip(xv) {
                        if *v > 0.0 {
                            *a += g;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                for n in [*a, *b] {
                    acc(n, &mut |g| g.iter_mut().zip(gy).for_each(|(s, d)| *s += d));
                }
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |g| g.iter_mut().zip(gy).for_each(|(s, d)| *s += d));
                acc(*b, &mut |g| g.iter_mut().zip(gy).for_each(|(s, d)| *s -= d));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.value(*a).data, &self.value(*b).data);
                acc(*a, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * vb[i];
                    }
                });
                acc(*b, &mut |g| {
                    for i in 0..g.len() {
                        g[i] += gy[i] * va[i];
                    }
                });
            }
            Op::Scale(x, s) => {
                acc(*x, &mut |g| g.iter_mut().zip(gy).for_each(|(a, d)| *a += s * d));
            }
            Op::RowScale(x, w) => {
                let c = self.value(*x).cols();
                acc(*x, &mut |g| {
                    for (r, wr) in w.iter().enumerate() {
                        for j in r * c..(r + 1) * c {
                            g[j] += wr * gy[j];
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let rows = node.value.rows();
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    acc(p, &mut |g| {
                        for r in 0..rows {
                            for j in 0..c {
                                g[r * c + j] += gy[r * total + offset + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::Softmax { x, axis } => {
                let y = &node.value.data;
                let (outer, len, inner) = outer_len_inner(&node.value.shape, *axis);
                acc(*x, &mut |g| {
                    for o in 0..outer {
                        for i in 0..inner {
                            let at = |a: usize| (o * len + a) * inner + i;
                            let dot: f64 = (0..len).map(|a| y[at(a)] * gy[at(a)]).sum();
                            for a in 0..len {
                                g[at(a)] += y[at(a)] * (gy[at(a)] - dot);
                            }
                        }
                    }
                });
            }
            Op::Gather { x, index } => {
                let c = self.value(*x).cols();
                acc(*x, &mut |g| {
                    for (r, &src) in index.iter().enumerate() {
                        for (a, d) in g[src * c..(src + 1) * c].iter_mut().zip(&gy[r * c..(r + 1) * c]) {
                            *a += d;
                        }
                    }
                });
            }
            Op::Reshape(x) => {
                acc(*x, &mut |g| g.iter_mut().zip(gy).for_each(|(a, d)| *a += d));
            }
            Op::SegmentMax { x, argmax } => {
                let c = self.value(*x).cols();
                acc(*x, &mut |g| {
                    for (k, &r) in argmax.iter().enumerate() {
                        g[r * c + k % c] += gy[k];
                    }
                });
            }
            Op::SegmentMean { x, segment, counts } => {
                let c = self.value(*x).cols();
                acc(*x, &mut |g| {
                    for (r, &s) in segment.iter().enumerate() {
                        let n = counts[s] as f64;
                        for j in 0..c {
                            g[r * c + j] += gy[s * c + j] / n;
                        }
                    }
                });
            }
            Op::SumAxis { x, axis } => {
                let (outer, len, inner) = outer_len_inner(&self.value(*x).shape, *axis);
                acc(*x, &mut |g| {
                    for o in 0..outer {
                        for a in 0..len {
                            let base = (o * len + a) * inner;
                            for i in 0..inner {
                                g[base + i] += gy[o * inner + i];
                            }
                        }
                    }
                });
            }
            Op::SumAll(x) => {
                acc(*x, &mut |g| g.iter_mut().for_each(|a| *a += gy[0]));
            }
            Op::MeanAll(x) => {
                let n = len_of(*x).max(1) as f64;
                acc(*x, &mut |g| g.iter_mut().for_each(|a| *a += gy[0] / n));
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let c = self.value(*x).cols();
                let rows = inv_std.len();
                let gam = &self.value(*gamma).data;
                acc(*gamma, &mut |g| {
                    for r in 0..rows {
                        for j in 0..c {
                            g[j] += gy[r * c + j] * xhat[r * c + j];
                        }
                    }
                });
                acc(*beta, &mut |g| {
                    for r in 0..rows {
                        for j in 0..c {
                            g[j] += gy[r * c + j];
                        }
                    }
                });
                acc(*x, &mut |g| {
                    for r in 0..rows {
                        let row = r * c..(r + 1) * c;
                        let dxhat: Vec<f64> = gy[row.clone()].iter().zip(gam).map(|(d, g)| d * g).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / c as f64;
                        let mean_dx = dxhat.iter().zip(&xhat[row.clone()]).map(|(d, h)| d * h).sum::<f64>() / c as f64;
                        for j in 0..c {
                            g[r * c + j] += inv_std[r] * (dxhat[j] - mean_d - xhat[r * c + j] * mean_dx);
                        }
                    }
                });
            }
            Op::CrossEntropy { logits, target, probs } => {
                let c = self.value(*logits).cols();
                let rows = self.value(*logits).rows();
                let scale = gy[0] / rows.max(1) as f64;
                acc(*logits, &mut |g| {
                    for r in 0..rows {
                        let t = &target[r * c..(r + 1) * c];
                        let mass: f64 = t.iter().sum();
                        for j in 0..c {
                            g[r * c + j] += scale * (probs[r * c + j] * mass - t[j]);
                        }
                    }
                });
            }
        }
    }
}
