//! Handcrafted per-point shape descriptors from local covariance.

use rayon::prelude::*;

use crate::cloud::{Point3, PointCloud};
use crate::eigen::{sym3_eigen, Mat3};
use crate::error::{Error, Result};
use crate::knn::KnnIndex;

pub const NUM_GEOM_FEATURES: usize = 4;

/// Columns: linearity, planarity, scattering, verticality. All in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomFeatureSet {
    pub features: Vec<[f64; NUM_GEOM_FEATURES]>,
    pub k_geo: usize,
}

impl GeomFeatureSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Row-major `n × 4` copy.
    pub fn flat(&self) -> Vec<f64> {
        self.features.iter().flatten().copied().collect()
    }
}

pub fn compute_geometric_features(cloud: &PointCloud, k_geo: usize) -> Result<GeomFeatureSet> {
    if k_geo < 3 {
        return Err(Error::arg(format!("k_geo must be at least 3, got {k_geo}")));
    }
    if cloud.len() < k_geo {
        return Err(Error::arg(format!(
            "k_geo = {k_geo} exceeds the point count {}",
            cloud.len()
        )));
    }
    let index = KnnIndex::build(cloud.coords())?;
    let pts = cloud.coords();
    let features = pts
        .par_iter()
        .map(|p| {
            let (nbrs, _) = index.knn(p, k_geo)?;
            Ok(neighborhood_features(nbrs.iter().map(|&j| &pts[j])))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GeomFeatureSet { features, k_geo })
}

pub fn covariance<'a>(points: impl Iterator<Item = &'a Point3> + Clone) -> Mat3 {
    let mut mean = [0.0; 3];
    let mut n = 0usize;
    for p in points.clone() {
        for d in 0..3 {
            mean[d] += p[d];
        }
        n += 1;
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut c = [[0.0; 3]; 3];
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for s in r..3 {
                c[r][s] += d[r] * d[s];
            }
        }
    }
    for r in 0..3 {
        for s in r..3 {
            c[r][s] /= n as f64;
            c[s][r] = c[r][s];
        }
    }
    c
}

/// Features of one neighbourhood. A zero covariance yields all zeros.
pub fn neighborhood_features<'a>(
    points: impl Iterator<Item = &'a Point3> + Clone,
) -> [f64; NUM_GEOM_FEATURES] {
    let cov = covariance(points);
    let eig = sym3_eigen(&cov);
    let l = eig.values.map(|v| v.max(0.0));
    if l[0] <= 0.0 {
        return [0.0; NUM_GEOM_FEATURES];
    }
    let linearity = (l[0] - l[1]) / l[0];
    let planarity = (l[1] - l[2]) / l[0];
    let scattering = l[2] / l[0];
    [
        linearity.clamp(0.0, 1.0),
        planarity.clamp(0.0, 1.0),
        scattering.clamp(0.0, 1.0),
        verticality(&l, &eig.vectors),
    ]
}

/// Eigenvalue-weighted sum of the per-eigenvector (horizontal, vertical)
/// magnitudes; verticality is the vertical share of that unit vector.
pub fn verticality(values: &[f64; 3], vectors: &[[f64; 3]; 3]) -> f64 {
    let mut h = 0.0;
    let mut v = 0.0;
    for k in 0..3 {
        let u = vectors[k];
        h += values[k] * u[0].hypot(u[1]);
        v += values[k] * u[2].abs();
    }
    let norm = h.hypot(v);
    if norm == 0.0 {
        0.0
    } else {
        (v / norm).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points() {
        let pts: Vec<Point3> = (0..10)
            .map(|i| [i as f64 * 0.3, i as f64 * 0.1, 0.0])
            .collect();
        let f = compute_geometric_features(&PointCloud::from_coords(pts).unwrap(), 5).unwrap();
        for r in &f.features {
            assert!((r[0] - 1.0).abs() < 1e-9, "{r:?}");
            assert!(r[1].abs() < 1e-9 && r[2].abs() < 1e-9);
        }
    }

    #[test]
    fn vertical_line_is_vertical() {
        let pts: Vec<Point3> = (0..50).map(|i| [1.0, 2.0, i as f64 * 0.02]).collect();
        let f = compute_geometric_features(&PointCloud::from_coords(pts).unwrap(), 10).unwrap();
        assert!(f.features.iter().all(|r| r[3] >= 0.9));
    }

    #[test]
    fn duplicated_point_is_all_zero() {
        let pts = vec![[0.5, 0.5, 0.5]; 6];
        let f = compute_geometric_features(&PointCloud::from_coords(pts).unwrap(), 6).unwrap();
        assert!(f.features.iter().all(|r| *r == [0.0; 4]));
    }

    #[test]
    fn k_geo_bounds() {
        let c = PointCloud::from_coords(vec![[0.0; 3]; 4]).unwrap();
        assert!(compute_geometric_features(&c, 2).is_err());
        assert!(compute_geometric_features(&c, 5).is_err());
    }

    #[test]
    fn horizontal_plane_has_zero_verticality() {
        let l = [1.0, 1.0, 0.0];
        let v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(verticality(&l, &v), 0.0);
    }
}
