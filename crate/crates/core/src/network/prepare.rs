//! Everything about a scene that does not depend on parameters: partition,
//! per-stage point sets, neighbourhoods and interpolation weights.

use std::sync::Arc;

use super::config::{NetworkConfig, Sampling};
use crate::cloud::{Aabb, Point3, PointCloud};
use crate::downsample::{fps_count, fps_downsample_map, geometric_downsample_map, voxel_downsample_map, DownsampleMap};
use crate::error::{Error, Result};
use crate::features::{compute_geometric_features, NUM_GEOM_FEATURES};
use crate::gia::NeighborContext;
use crate::graph::build_adjacency;
use crate::knn::KnnIndex;
use crate::mat::Mat;
use crate::partition::{canonical_labels, cut_pursuit, enforce_diameter_cap, PartitionProblem, PartitionResult};
use crate::sampling::fps_sample;
use crate::superpoint::{soft_pseudo_labels, SuperpointGeometry};
use crate::tensor::Tensor;

/// Centered xy, height above the scene floor, then the geometric features.
pub const INPUT_DIM: usize = 3 + NUM_GEOM_FEATURES;

/// Inverse-distance weights from a coarse set onto a fine set.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolation {
    pub k: usize,
    /// `n_fine × k` coarse indices.
    pub index: Arc<[usize]>,
    /// `n_fine × k`, each row sums to 1.
    pub weights: Arc<[f64]>,
}

/// Up to three nearest coarse points weighted by inverse distance; a
/// coincident coarse point takes the whole weight.
pub fn interpolation(fine: &[Point3], coarse: &[Point3]) -> Result<Interpolation> {
    let k = coarse.len().min(3);
    if k == 0 {
        return Err(Error::arg("cannot interpolate from an empty set"));
    }
    let index = KnnIndex::build(coarse)?;
    let mut idx = Vec::with_capacity(fine.len() * k);
    let mut weights = Vec::with_capacity(fine.len() * k);
    for p in fine {
        let (nb, d) = index.knn(p, k)?;
        if d[0] == 0.0 {
            weights.push(1.0);
            weights.extend(std::iter::repeat_n(0.0, k - 1));
        } else {
            let inv: Vec<f64> = d.iter().map(|x| 1.0 / x).collect();
            let s: f64 = inv.iter().sum();
            weights.extend(inv.iter().map(|w| w / s));
        }
        idx.extend(nb);
    }
    Ok(Interpolation {
        k,
        index: idx.into(),
        weights: weights.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointStage {
    pub coords: Vec<Point3>,
    /// Inherited partition of every point.
    pub partition: Vec<usize>,
    pub ctx: NeighborContext,
    /// Map onto the next stage's points.
    pub down: Option<DownsampleMap>,
    /// Weights bringing the next stage's features back onto these points.
    pub up: Option<Interpolation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperpointStage {
    pub coords: Vec<Point3>,
    /// Self-attention neighbourhood among this stage's superpoints.
    pub ctx: NeighborContext,
    /// Rows kept for the next stage.
    pub keep: Option<Arc<[usize]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedScene {
    /// `n × INPUT_DIM`.
    pub input: Tensor,
    pub labels: Option<Vec<u32>>,
    pub superpoints: SuperpointGeometry,
    /// `m × classes` label distribution of every partition.
    pub soft_labels: Option<Arc<[f64]>>,
    pub stages: Vec<PointStage>,
    pub global: Vec<SuperpointStage>,
}

impl PreparedScene {
    pub fn num_points(&self) -> usize {
        self.input.rows()
    }

    /// Point count per encoder stage.
    pub fn stage_sizes(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.coords.len()).collect()
    }

    /// Superpoint count per stage.
    pub fn superpoint_sizes(&self) -> Vec<usize> {
        self.global.iter().map(|s| s.coords.len()).collect()
    }
}

/// Geometric features, adjacency, cut pursuit and the diameter cap.
pub fn partition_cloud(cloud: &PointCloud, cfg: &NetworkConfig) -> Result<(PartitionResult, Mat)> {
    let feats = compute_geometric_features(cloud, cfg.k_geo.min(cloud.len()).max(3))?;
    let feats = Mat::from_vec(cloud.len(), NUM_GEOM_FEATURES, feats.flat())?;
    let graph = build_adjacency(cloud, cfg.k_adj.min(cloud.len().saturating_sub(1)).max(1))?;
    let problem = PartitionProblem::new(&graph, &feats, cfg.lambda)?;
    let result = cut_pursuit(&problem);
    let capped = enforce_diameter_cap(&result, cloud, &problem, cfg.sp_dia_cap)?;
    Ok((capped, feats))
}

pub fn prepare_scene(cloud: &PointCloud, cfg: &NetworkConfig) -> Result<PreparedScene> {
    let (partition, feats) = partition_cloud(cloud, cfg)?;
    prepare_with_partition(cloud, &feats, &partition.component, cfg)
}

/// Builds the stage geometry around a given partition and per-point
/// geometric features.
pub fn prepare_with_partition(
    cloud: &PointCloud,
    geom_feats: &Mat,
    partition: &[usize],
    cfg: &NetworkConfig,
) -> Result<PreparedScene> {
    cfg.validate()?;
    let n = cloud.len();
    if n < 4 {
        return Err(Error::arg("a scene needs at least 4 points"));
    }
    if geom_feats.rows() != n || geom_feats.cols() != NUM_GEOM_FEATURES || partition.len() != n {
        return Err(Error::arg("features and partition must have one row per point"));
    }
    let (partition, m) = canonical_labels(partition);
    let coords = cloud.coords().to_vec();
    let bbox = Aabb::from_points(&coords);
    let cx = 0.5 * (bbox.min[0] + bbox.max[0]);
    let cy = 0.5 * (bbox.min[1] + bbox.max[1]);
    let mut input = Vec::with_capacity(n * INPUT_DIM);
    for (p, f) in coords.iter().zip(0..n) {
        input.extend_from_slice(&[p[0] - cx, p[1] - cy, p[2] - bbox.min[2]]);
        input.extend_from_slice(geom_feats.row(f));
    }
    let input = Tensor::from_vec(&[n, INPUT_DIM], input)?;

    let labels = cloud.labels().map(<[u32]>::to_vec);
    if labels.is_some() {
        cloud.validate_labels(cfg.classes)?;
    }
    let superpoints = SuperpointGeometry::new(&coords, &partition, m)?;
    let soft_labels = labels
        .as_ref()
        .map(|l| soft_pseudo_labels(l, &partition, m, cfg.classes).map(|s| Arc::from(s.w.into_vec())))
        .transpose()?;

    // superpoint hierarchy, halved each stage
    let mut sp_coords = superpoints.coords.clone();
    let mut global = Vec::with_capacity(cfg.num_stages());
    for s in 0..cfg.num_stages() {
        let ctx = NeighborContext::build(&sp_coords, &[], cfg.k_superpoint, 0)?;
        let last = s + 1 == cfg.num_stages();
        let keep = if last {
            None
        } else {
            Some(Arc::<[usize]>::from(fps_sample(&sp_coords, fps_count(sp_coords.len(), 0.5), 0)?))
        };
        let next: Vec<Point3> = keep.as_ref().map_or_else(Vec::new, |k| k.iter().map(|&i| sp_coords[i]).collect());
        global.push(SuperpointStage {
            coords: std::mem::replace(&mut sp_coords, next),
            ctx,
            keep,
        });
    }

    let mut stages: Vec<PointStage> = Vec::with_capacity(cfg.num_stages());
    let mut pts = coords;
    let mut part = partition;
    for s in 0..cfg.num_stages() {
        let ctx = NeighborContext::build(&pts, &global[s].coords, cfg.k_local, cfg.k_global)?;
        let down = if s + 1 < cfg.num_stages() {
            let cap = cfg.gd_caps[s];
            let map = match cfg.sampling {
                Sampling::Geometric => geometric_downsample_map(&pts, &part, cap)?,
                Sampling::Fps => fps_downsample_map(&pts, fps_count(pts.len(), cfg.fps_ratio), Some(&part))?,
                Sampling::Voxel => {
                    let mut map = voxel_downsample_map(&pts, cap / 3f64.sqrt())?;
                    let parent = map.parents().iter().map(|p| part[p[0]]).collect();
                    map.partition = Some(parent);
                    map
                }
            };
            Some(map)
        } else {
            None
        };
        let next = down.as_ref().map(|d| {
            (
                d.coords.clone(),
                d.partition.clone().expect("stage maps carry partitions"),
            )
        });
        let up = match &next {
            Some((c, _)) => Some(interpolation(&pts, c)?),
            None => None,
        };
        stages.push(PointStage {
            coords: std::mem::take(&mut pts),
            partition: std::mem::take(&mut part),
            ctx,
            down,
            up,
        });
        if let Some((c, p)) = next {
            pts = c;
            part = p;
        }
    }

    Ok(PreparedScene {
        input,
        labels,
        superpoints,
        soft_labels,
        stages,
        global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_point_takes_full_weight() {
        let coarse = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let w = interpolation(&[[1.0, 0.0, 0.0]], &coarse).unwrap();
        assert_eq!(w.index[0], 1);
        assert_eq!(&w.weights[..], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn weights_sum_to_one() {
        let coarse = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 2.0, 2.0]];
        let fine = [[0.3, 0.2, 0.1], [5.0, 5.0, 5.0]];
        let w = interpolation(&fine, &coarse).unwrap();
        for r in w.weights.chunks(3) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
