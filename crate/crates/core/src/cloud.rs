//! Point cloud container and axis-aligned bounding boxes.

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &Point3, b: &Point3) -> f64 {
    dist2(a, b).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point3) {
        for d in 0..3 {
            self.min[d] = self.min[d].min(p[d]);
            self.max[d] = self.max[d].max(p[d]);
        }
    }

    /// Length of the box diagonal; 0 for a single point.
    pub fn diagonal(&self) -> f64 {
        if self.min[0] > self.max[0] {
            return 0.0;
        }
        dist(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point3, tol: f64) -> bool {
        (0..3).all(|d| p[d] >= self.min[d] - tol && p[d] <= self.max[d] + tol)
    }
}

/// Coordinates in meters, optional colors in `[0, 1]`, optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    coords: Vec<Point3>,
    colors: Option<Vec<Point3>>,
    labels: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(
        coords: Vec<Point3>,
        colors: Option<Vec<Point3>>,
        labels: Option<Vec<u32>>,
    ) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid(
                "point cloud must contain at least one point",
            ));
        }
        if let Some(i) = coords.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid(format!(
                "non-finite coordinate at point {i}"
            )));
        }
        if let Some(c) = &colors {
            if c.len() != coords.len() {
                return Err(Error::invalid(format!(
                    "{} colors for {} points",
                    c.len(),
                    coords.len()
                )));
            }
            if let Some(i) = c
                .iter()
                .position(|p| p.iter().any(|v| !(0.0..=1.0).contains(v)))
            {
                return Err(Error::invalid(format!("color of point {i} outside [0, 1]")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != coords.len() {
                return Err(Error::invalid(format!(
                    "{} labels for {} points",
                    l.len(),
                    coords.len()
                )));
            }
        }
        Ok(PointCloud {
            coords,
            colors,
            labels,
        })
    }

    pub fn from_coords(coords: Vec<Point3>) -> Result<Self> {
        Self::new(coords, None, None)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point3] {
        &self.coords
    }

    pub fn colors(&self) -> Option<&[Point3]> {
        self.colors.as_deref()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.coords.len() {
            return Err(Error::invalid("label count does not match point count"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_colors(self, colors: Vec<Point3>) -> Result<Self> {
        Self::new(self.coords, Some(colors), self.labels)
    }

    /// Checks that every label lies in `[0, num_classes)`.
    pub fn validate_labels(&self, num_classes: usize) -> Result<()> {
        if let Some(labels) = &self.labels {
            if let Some(i) = labels.iter().position(|&l| l as usize >= num_classes) {
                return Err(Error::invalid(format!(
                    "label {} of point {i} outside [0, {num_classes})",
                    labels[i]
                )));
            }
        }
        Ok(())
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.coords)
    }

    /// New cloud holding the given points, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let pick = |v: &[Point3]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        PointCloud::new(
            pick(&self.coords),
            self.colors.as_deref().map(pick),
            self.labels
                .as_deref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(PointCloud::from_coords(vec![]).is_err());
        assert!(PointCloud::from_coords(vec![[0.0, f64::NAN, 0.0]]).is_err());
        assert!(PointCloud::from_coords(vec![[0.0, 0.0, f64::INFINITY]]).is_err());
    }

    #[test]
    fn label_range_is_checked() {
        let c = PointCloud::new(vec![[0.0; 3], [1.0; 3]], None, Some(vec![0, 3])).unwrap();
        assert!(c.validate_labels(4).is_ok());
        assert!(c.validate_labels(3).is_err());
    }

    #[test]
    fn bbox_diagonal() {
        let b = Aabb::from_points(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]);
        assert_eq!(b.diagonal(), 5.0);
        assert_eq!(Aabb::from_points(&[[1.0, 2.0, 3.0]]).diagonal(), 0.0);
    }
}
