//! Segmentation scores from a confusion matrix.

use crate::error::{Error, Result};

/// `counts[truth][pred]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Confusion {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn add(&mut self, pred: &[u32], truth: &[u32]) -> Result<()> {
        if pred.len() != truth.len() {
            return Err(Error::arg(format!(
                "{} predictions for {} labels",
                pred.len(),
                truth.len()
            )));
        }
        let l = self.classes;
        if let Some(bad) = pred.iter().chain(truth).find(|&&c| c as usize >= l) {
            return Err(Error::invalid(format!("class {bad} is not below {l}")));
        }
        for (&p, &t) in pred.iter().zip(truth) {
            self.counts[t as usize][p as usize] += 1;
        }
        Ok(())
    }

    pub fn scores(&self) -> SegMetrics {
        let l = self.classes;
        let mut iou = vec![None; l];
        let mut recall = vec![None; l];
        let mut correct = 0u64;
        let mut total = 0u64;
        for c in 0..l {
            let tp = self.counts[c][c];
            let fn_: u64 = self.counts[c].iter().sum::<u64>() - tp;
            let fp: u64 = (0..l).map(|t| self.counts[t][c]).sum::<u64>() - tp;
            if tp + fp + fn_ > 0 {
                iou[c] = Some(tp as f64 / (tp + fp + fn_) as f64);
            }
            if tp + fn_ > 0 {
                recall[c] = Some(tp as f64 / (tp + fn_) as f64);
            }
            correct += tp;
            total += tp + fn_;
        }
        let mean = |v: &[Option<f64>]| {
            let present: Vec<f64> = v.iter().flatten().copied().collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        };
        SegMetrics {
            miou: mean(&iou),
            macc: mean(&recall),
            oa: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            iou,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegMetrics {
    pub miou: f64,
    /// Mean recall over classes present in the labels.
    pub macc: f64,
    pub oa: f64,
    /// `None` for classes absent from both predictions and labels.
    pub iou: Vec<Option<f64>>,
}

pub fn evaluate_metrics(pred: &[u32], truth: &[u32], classes: usize) -> Result<SegMetrics> {
    let mut c = Confusion::new(classes);
    c.add(pred, truth)?;
    Ok(c.scores())
}
