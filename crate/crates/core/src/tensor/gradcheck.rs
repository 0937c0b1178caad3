//! Central finite-difference checks of recorded gradients.

use super::{Graph, NodeId, ParamStore, Tensor};
use crate::error::Result;

/// Magnitude below which gradients are compared absolutely, per unit of
/// output magnitude: central-difference roundoff grows with `|f|`.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(tensor, entry, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    /// Absolute scale below which differences count as relative to it.
    pub floor: f64,
}

impl GradReport {
    fn new(output: f64) -> Self {
        GradReport {
            floor: REL_FLOOR * output.abs().max(1.0),
            max_rel_error: 0.0,
            checked: 0,
            worst: None,
        }
    }

    fn record(&mut self, tensor: usize, entry: usize, analytic: f64, numeric: f64) {
        let e = relative_error(analytic, numeric, self.floor);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(e);
            self.worst = Some((tensor, entry, analytic, numeric));
        }
    }
}

/// Checks the gradient of the scalar `f(inputs)` with respect to every entry
/// of every input.
pub fn check_inputs<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        Ok(g.value(out).item())
    };
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &ids)?;
    g.backward(out)?;
    let mut report = GradReport::new(g.value(out).item());
    let mut work = inputs.to_vec();
    for (t, id) in ids.iter().enumerate() {
        let analytic = g.grad(*id).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[t].len()]);
        for e in 0..inputs[t].len() {
            let x = inputs[t].data()[e];
            work[t].data_mut()[e] = x + eps;
            let up = eval(&work)?;
            work[t].data_mut()[e] = x - eps;
            let down = eval(&work)?;
            work[t].data_mut()[e] = x;
            report.record(t, e, analytic[e], (up - down) / (2.0 * eps));
        }
    }
    Ok(report)
}

/// Checks the gradient of the scalar `f(params)` with respect to up to
/// `per_tensor` evenly spaced entries of every parameter tensor.
pub fn check_params<F>(store: &ParamStore, eps: f64, per_tensor: usize, f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    g.backward(out)?;
    let mut analytic = store.clone();
    analytic.zero_grads();
    g.accumulate_param_grads(&mut analytic);

    let mut work = store.clone();
    let mut report = GradReport::new(g.value(out).item());
    for id in store.ids() {
        let len = store.value(id).len();
        let picks = per_tensor.min(len);
        for p in 0..picks {
            let e = p * len / picks;
            let x = store.value(id).data()[e];
            work.value_mut(id).data_mut()[e] = x + eps;
            let mut gu = Graph::new();
            let up = f(&mut gu, &work)?;
            let up = gu.value(up).item();
            work.value_mut(id).data_mut()[e] = x - eps;
            let mut gd = Graph::new();
            let down = f(&mut gd, &work)?;
            let down = gd.value(down).item();
            work.value_mut(id).data_mut()[e] = x;
            report.record(id.0, e, analytic.grad(id)[e], (up - down) / (2.0 * eps));
        }
    }
    Ok(report)
}
