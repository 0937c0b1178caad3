//! Farthest point sampling and voxel keys.

use std::collections::{BTreeMap, HashMap};

use crate::cloud::{dist2, Aabb, Point3};
use crate::error::{Error, Result};

pub type VoxelKey = [i64; 3];

/// Greedy farthest-point selection starting at `seed_index`.
/// Ties go to the lowest index.
pub fn fps_sample(coords: &[Point3], count: usize, seed_index: usize) -> Result<Vec<usize>> {
    let n = coords.len();
    if count == 0 || count > n {
        return Err(Error::arg(format!(
            "sample count must lie in [1, {n}], got {count}"
        )));
    }
    if seed_index >= n {
        return Err(Error::arg(format!("seed index {seed_index} out of range")));
    }
    let mut selected = Vec::with_capacity(count);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut current = seed_index;
    selected.push(current);
    min_d2[current] = f64::NEG_INFINITY;
    while selected.len() < count {
        let c = coords[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, p) in coords.iter().enumerate() {
            let m = &mut min_d2[i];
            if *m == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(&c, p);
            if d < *m {
                *m = d;
            }
            if *m > best_d2 {
                best_d2 = *m;
                best = i;
            }
        }
        current = best;
        min_d2[current] = f64::NEG_INFINITY;
        selected.push(current);
    }
    Ok(selected)
}

/// Integer cell of each point: `floor((p - origin) / cell)` per axis.
pub fn voxel_keys(coords: &[Point3], cell: f64, origin: &Point3) -> Result<Vec<VoxelKey>> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::arg(format!(
            "voxel cell must be positive, got {cell}"
        )));
    }
    Ok(coords.iter().map(|p| voxel_key(p, cell, origin)).collect())
}

#[inline]
pub fn voxel_key(p: &Point3, cell: f64, origin: &Point3) -> VoxelKey {
    [
        ((p[0] - origin[0]) / cell).floor() as i64,
        ((p[1] - origin[1]) / cell).floor() as i64,
        ((p[2] - origin[2]) / cell).floor() as i64,
    ]
}

/// Dense ids for a key vector, numbered by sorted key order.
pub fn dense_keys(keys: &[VoxelKey]) -> (Vec<usize>, usize) {
    let mut distinct: Vec<VoxelKey> = keys.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let lookup: HashMap<VoxelKey, usize> =
        distinct.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    (keys.iter().map(|k| lookup[k]).collect(), distinct.len())
}

/// Cell of `p` in a grid of `cell` spanning `bbox` from its minimum. The
/// far face belongs to the last cell, so an extent of exactly `j·cell`
/// yields `j` cells.
pub fn box_cell_key(p: &Point3, cell: f64, bbox: &Aabb) -> VoxelKey {
    let mut key = voxel_key(p, cell, &bbox.min);
    for a in 0..3 {
        let cells = (((bbox.max[a] - bbox.min[a]) / cell - 1e-9).ceil() as i64).max(1);
        key[a] = key[a].min(cells - 1);
    }
    key
}

/// Groups of a dense labelling with every group wider than `cap` (box
/// diagonal) split on a grid of cell `cap / √3` anchored at the group's box
/// minimum (see [`box_cell_key`]). Returns the new id per point and the source group of every new
/// id, numbered by source group then cell key.
pub fn split_oversized(coords: &[Point3], group: &[usize], m: usize, cap: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::arg(format!("size cap must be positive, got {cap}")));
    }
    if coords.len() != group.len() {
        return Err(Error::arg("coordinate and group counts differ"));
    }
    let mut members = vec![Vec::new(); m];
    for (i, &s) in group.iter().enumerate() {
        if s >= m {
            return Err(Error::arg(format!("group id {s} out of range")));
        }
        members[s].push(i);
    }
    let cell = cap / 3f64.sqrt();
    let mut next = vec![0usize; coords.len()];
    let mut origin_of = Vec::new();
    for (s, nodes) in members.iter().enumerate() {
        let bbox = Aabb::from_points(nodes.iter().map(|&i| &coords[i]));
        if bbox.diagonal() <= cap {
            for &i in nodes {
                next[i] = origin_of.len();
            }
            origin_of.push(s);
            continue;
        }
        let mut cells: BTreeMap<VoxelKey, Vec<usize>> = BTreeMap::new();
        for &i in nodes {
            cells.entry(box_cell_key(&coords[i], cell, &bbox)).or_default().push(i);
        }
        for cell_members in cells.values() {
            for &i in cell_members {
                next[i] = origin_of.len();
            }
            origin_of.push(s);
        }
    }
    Ok((next, origin_of))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_picks_the_diagonal() {
        let sq = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 1.0, 0.0],
        ];
        assert_eq!(fps_sample(&sq, 2, 0).unwrap(), vec![0, 3]);
    }

    #[test]
    fn count_n_returns_everything() {
        let pts: Vec<Point3> = (0..7).map(|i| [i as f64, 0.0, 0.0]).collect();
        let mut s = fps_sample(&pts, 7, 3).unwrap();
        s.sort();
        assert_eq!(s, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn count_above_n_is_rejected() {
        assert!(fps_sample(&[[0.0; 3]], 2, 0).is_err());
        assert!(fps_sample(&[[0.0; 3]], 0, 0).is_err());
    }

    #[test]
    fn voxel_floor_convention() {
        let k = voxel_keys(
            &[[0.1, 0.0, 0.0], [0.3, 0.0, 0.0], [0.25, 0.0, 0.0]],
            0.25,
            &[0.0; 3],
        )
        .unwrap();
        assert_eq!(k[0][0], 0);
        assert_eq!(k[1][0], 1);
        assert_eq!(k[2][0], 1);
        assert!(voxel_keys(&[[0.0; 3]], 0.0, &[0.0; 3]).is_err());
    }

    #[test]
    fn one_cell() {
        let pts = [[0.01, 0.02, 0.03], [0.04, 0.05, 0.06]];
        let (_, m) = dense_keys(&voxel_keys(&pts, 1.0, &[0.0; 3]).unwrap());
        assert_eq!(m, 1);
    }
}
