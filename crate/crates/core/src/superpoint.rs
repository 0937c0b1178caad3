//! One superpoint per geometric partition: mean coordinate, max-pooled
//! embedded feature and a global descriptor.

use std::sync::Arc;

use rand::Rng;

use crate::cloud::{Aabb, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::nn::Linear;
use crate::partition::{members_of, PartitionResult};
use crate::tensor::{Graph, NodeId, ParamStore, Tensor};

/// Width of the global descriptor: diameter and member fraction.
pub const GLOBAL_DESC_DIM: usize = 2;

/// Bounding-box diagonal of every group in a dense labelling.
pub fn group_diameters(coords: &[Point3], group: &[usize], m: usize) -> Vec<f64> {
    let mut boxes = vec![Aabb::empty(); m];
    for (p, &s) in coords.iter().zip(group) {
        boxes[s].grow(p);
    }
    boxes.iter().map(Aabb::diagonal).collect()
}

/// Bounding-box diagonal of every partition.
pub fn partition_diameter(partition: &PartitionResult, cloud: &PointCloud) -> Result<Vec<f64>> {
    if partition.component.len() != cloud.len() {
        return Err(Error::arg("cloud and partition sizes differ"));
    }
    Ok(group_diameters(cloud.coords(), &partition.component, partition.num_components()))
}

/// Per-partition label distribution, `m × classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelSet {
    pub w: Mat,
}

pub fn soft_pseudo_labels(labels: &[u32], component: &[usize], m: usize, classes: usize) -> Result<SoftLabelSet> {
    if labels.len() != component.len() {
        return Err(Error::arg(format!(
            "{} labels for {} points",
            labels.len(),
            component.len()
        )));
    }
    let mut w = Mat::zeros(m, classes);
    let mut sizes = vec![0usize; m];
    for (&l, &s) in labels.iter().zip(component) {
        if l as usize >= classes {
            return Err(Error::invalid(format!("label {l} is not below the class count {classes}")));
        }
        if s >= m {
            return Err(Error::arg(format!("component id {s} out of range")));
        }
        w.row_mut(s)[l as usize] += 1.0;
        sizes[s] += 1;
    }
    for (s, &n) in sizes.iter().enumerate() {
        if n == 0 {
            return Err(Error::Internal(format!("partition {s} is empty")));
        }
        w.row_mut(s).iter_mut().for_each(|x| *x /= n as f64);
    }
    Ok(SoftLabelSet { w })
}

/// Parameter-free part of a superpoint set: membership, mean coordinates and
/// global descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpointGeometry {
    /// Superpoint of every point.
    pub source: Arc<[usize]>,
    pub coords: Vec<Point3>,
    /// `m × GLOBAL_DESC_DIM`.
    pub global_desc: Mat,
}

impl SuperpointGeometry {
    pub fn new(coords: &[Point3], component: &[usize], m: usize) -> Result<Self> {
        if coords.len() != component.len() {
            return Err(Error::arg("cloud and partition sizes differ"));
        }
        let mut sums = vec![[0.0; 3]; m];
        let mut counts = vec![0usize; m];
        for (p, &s) in coords.iter().zip(component) {
            if s >= m {
                return Err(Error::arg(format!("component id {s} out of range")));
            }
            for a in 0..3 {
                sums[s][a] += p[a];
            }
            counts[s] += 1;
        }
        if let Some(s) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Internal(format!("partition {s} is empty")));
        }
        let centers = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| [s[0] / c as f64, s[1] / c as f64, s[2] / c as f64])
            .collect();
        let dia = group_diameters(coords, component, m);
        let n = coords.len() as f64;
        let mut global_desc = Mat::zeros(m, GLOBAL_DESC_DIM);
        for s in 0..m {
            global_desc.row_mut(s).copy_from_slice(&[dia[s], counts[s] as f64 / n]);
        }
        Ok(SuperpointGeometry {
            source: component.into(),
            coords: centers,
            global_desc,
        })
    }

    pub fn from_partition(partition: &PartitionResult, cloud: &PointCloud) -> Result<Self> {
        Self::new(cloud.coords(), &partition.component, partition.num_components())
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Point indices of every superpoint.
    pub fn members(&self) -> Vec<Vec<usize>> {
        members_of(&self.source, self.len())
    }
}

/// `F̂ = T2(maxpool(relu(T1 f)) ⊕ desc)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpointEmbedder {
    pub t1: Linear,
    pub t2: Linear,
}

impl SuperpointEmbedder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_hidden: usize,
        c_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        SuperpointEmbedder {
            t1: Linear::new(store, &format!("{name}.t1"), c_in, c_hidden, rng),
            t2: Linear::new(store, &format!("{name}.t2"), c_hidden + GLOBAL_DESC_DIM, c_out, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, feats: NodeId, geom: &SuperpointGeometry) -> Result<NodeId> {
        let h = self.t1.forward(g, store, feats)?;
        let h = g.relu(h);
        let pooled = g.segment_max(h, &geom.source, geom.len())?;
        let desc = g.input(Tensor::from_vec(
            &[geom.len(), GLOBAL_DESC_DIM],
            geom.global_desc.as_slice().to_vec(),
        )?);
        let joined = g.concat(&[pooled, desc])?;
        self.t2.forward(g, store, joined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpointSet {
    pub coords: Vec<Point3>,
    /// `m × c_out`.
    pub features: Mat,
    pub global_desc: Mat,
    /// Superpoint of every point.
    pub source: Vec<usize>,
}

/// Evaluates the embedding outside any training graph.
pub fn embed_superpoints(
    features: &Mat,
    partition: &PartitionResult,
    cloud: &PointCloud,
    store: &ParamStore,
    embedder: &SuperpointEmbedder,
) -> Result<SuperpointSet> {
    if features.rows() != cloud.len() {
        return Err(Error::arg("feature rows and cloud size differ"));
    }
    let geom = SuperpointGeometry::from_partition(partition, cloud)?;
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(&[features.rows(), features.cols()], features.as_slice().to_vec())?);
    let out = embedder.forward(&mut g, store, x, &geom)?;
    let t = g.value(out);
    Ok(SuperpointSet {
        coords: geom.coords,
        features: Mat::from_vec(t.rows(), t.cols(), t.data().to_vec())?,
        global_desc: geom.global_desc,
        source: geom.source.to_vec(),
    })
}
