//! Coarsening maps: partition-guided (GD), scene voxel grid and farthest
//! point sampling, plus the max/mean fuse shared by all three.

use std::sync::Arc;

use crate::cloud::{Aabb, Point3};
use crate::error::{Error, Result};
use crate::knn::KnnIndex;
use crate::mat::Mat;
use crate::nn::Linear;
use crate::partition::{canonical_labels, members_of};
use crate::sampling::{dense_keys, fps_sample, split_oversized, voxel_keys};
use crate::tensor::{Graph, NodeId, ParamStore, Tensor};

/// Assignment of every input point to exactly one output point.
#[derive(Debug, Clone, PartialEq)]
pub struct DownsampleMap {
    /// Output point of every input point.
    pub group: Arc<[usize]>,
    /// Coarse coordinates, one per output point.
    pub coords: Vec<Point3>,
    /// Partition inherited by every output point, when the map knows one.
    pub partition: Option<Vec<usize>>,
}

impl DownsampleMap {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Source indices of every output point.
    pub fn parents(&self) -> Vec<Vec<usize>> {
        members_of(&self.group, self.len())
    }
}

fn group_means(coords: &[Point3], group: &[usize], m: usize) -> Vec<Point3> {
    let mut sums = vec![[0.0; 3]; m];
    let mut counts = vec![0usize; m];
    for (p, &s) in coords.iter().zip(group) {
        for a in 0..3 {
            sums[s][a] += p[a];
        }
        counts[s] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| {
            let c = c as f64;
            [s[0] / c, s[1] / c, s[2] / c]
        })
        .collect()
}

/// Partitions with box diagonal ≤ `a` become one point; larger ones are
/// split on a grid of cell `a / √3` anchored at their box minimum. Output
/// coordinates are member means; output partition ids are inherited.
pub fn geometric_downsample_map(coords: &[Point3], partition: &[usize], a: f64) -> Result<DownsampleMap> {
    let m = partition.iter().max().map_or(0, |&x| x + 1);
    let (group, origin) = split_oversized(coords, partition, m, a)?;
    let mut seen = vec![false; m];
    partition.iter().for_each(|&s| seen[s] = true);
    if seen.iter().any(|s| !s) {
        return Err(Error::arg("partition ids must be dense"));
    }
    Ok(DownsampleMap {
        coords: group_means(coords, &group, origin.len()),
        group: group.into(),
        partition: Some(origin),
    })
}

/// Scene-wide grid of cell `cell` anchored at the scene box minimum.
pub fn voxel_downsample_map(coords: &[Point3], cell: f64) -> Result<DownsampleMap> {
    if coords.is_empty() {
        return Err(Error::arg("cannot downsample an empty cloud"));
    }
    let origin = Aabb::from_points(coords).min;
    let (group, m) = dense_keys(&voxel_keys(coords, cell, &origin)?);
    Ok(DownsampleMap {
        coords: group_means(coords, &group, m),
        group: group.into(),
        partition: None,
    })
}

/// `count` farthest-point samples starting from point 0; every point joins
/// its nearest sample and each sample keeps its own coordinate.
pub fn fps_downsample_map(coords: &[Point3], count: usize, partition: Option<&[usize]>) -> Result<DownsampleMap> {
    let samples = fps_sample(coords, count, 0)?;
    let sample_coords: Vec<Point3> = samples.iter().map(|&i| coords[i]).collect();
    let mut group = KnnIndex::build(&sample_coords)?.knn_batch(coords, 1)?;
    for (s, &i) in samples.iter().enumerate() {
        group[i] = s;
    }
    Ok(DownsampleMap {
        coords: sample_coords,
        group: group.into(),
        partition: partition.map(|p| samples.iter().map(|&i| p[i]).collect()),
    })
}

/// Number of output points FPS at `ratio` produces from `n` points.
pub fn fps_count(n: usize, ratio: f64) -> usize {
    ((n as f64 * ratio).ceil() as usize).clamp(1, n.max(1))
}

/// Columnwise max of `D(f)` over every output point's parents.
pub fn fuse_features(g: &mut Graph, store: &ParamStore, d: &Linear, feats: NodeId, map: &DownsampleMap) -> Result<NodeId> {
    if g.value(feats).rows() != map.group.len() {
        return Err(Error::arg("feature rows do not match the downsample map"));
    }
    let h = d.forward(g, store, feats)?;
    g.segment_max(h, &map.group, map.len())
}

fn fuse_eval(feats: &Mat, store: &ParamStore, d: &Linear, map: &DownsampleMap) -> Result<Mat> {
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(&[feats.rows(), feats.cols()], feats.as_slice().to_vec())?);
    let y = fuse_features(&mut g, store, d, x, map)?;
    let t = g.value(y);
    Mat::from_vec(t.rows(), t.cols(), t.data().to_vec())
}

/// Partition-guided downsampling with the fuse evaluated directly.
pub fn geometric_downsample(
    feats: &Mat,
    coords: &[Point3],
    partition: &[usize],
    a: f64,
    store: &ParamStore,
    d: &Linear,
) -> Result<(Mat, DownsampleMap)> {
    let (partition, _) = canonical_labels(partition);
    let map = geometric_downsample_map(coords, &partition, a)?;
    Ok((fuse_eval(feats, store, d, &map)?, map))
}

/// Scene-grid downsampling with the fuse evaluated directly.
pub fn voxel_downsample(
    feats: &Mat,
    coords: &[Point3],
    cell: f64,
    store: &ParamStore,
    d: &Linear,
) -> Result<(Mat, DownsampleMap)> {
    let map = voxel_downsample_map(coords, cell)?;
    Ok((fuse_eval(feats, store, d, &map)?, map))
}
