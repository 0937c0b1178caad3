//! Seeded synthetic indoor rooms built from planar primitives.
//!
//! Known classes: `floor`, `wall`, `table`, `chair`, `board`, `clutter`.
//! Each class has a count range and a size range (metres):
//!
//! * floor: one plane over the room, size unused;
//! * wall: up to four room walls, size unused;
//! * table: a slab on four legs, size = top side length;
//! * chair: seat, backrest and legs, size = seat side length;
//! * board: a thin panel 3 cm in front of a wall, size = width;
//! * clutter: a small box on a table (or on the floor), size = side length.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cloud::{Aabb, Point3, PointCloud};
use crate::config::{format_list, KvConfig};
use crate::error::{Error, Result};

pub const DEFAULT_CLASSES: [&str; 6] = ["floor", "wall", "table", "chair", "board", "clutter"];

/// Objects holding fewer than this share of a scene's points count as small.
pub const SMALL_OBJECT_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    /// Inclusive count range.
    pub count: (usize, usize),
    /// Size range in metres.
    pub size: (f64, f64),
}

impl ClassSpec {
    pub fn new(name: &str, count: (usize, usize), size: (f64, f64)) -> Self {
        ClassSpec {
            name: name.to_string(),
            count,
            size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Room extents along x, y, z.
    pub extent: [f64; 3],
    pub classes: Vec<ClassSpec>,
    /// Points per square metre of surface.
    pub density: f64,
    /// Standard deviation of the isotropic jitter.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            extent: [6.0, 5.0, 3.0],
            classes: vec![
                ClassSpec::new("floor", (1, 1), (0.0, 0.0)),
                ClassSpec::new("wall", (4, 4), (0.0, 0.0)),
                ClassSpec::new("table", (1, 3), (0.9, 1.6)),
                ClassSpec::new("chair", (2, 6), (0.4, 0.55)),
                ClassSpec::new("board", (1, 2), (1.0, 2.0)),
                ClassSpec::new("clutter", (3, 8), (0.08, 0.25)),
            ],
            density: 50.0,
            noise: 0.005,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Small room for training runs.
    pub fn toy(seed: u64) -> Self {
        SceneSpec {
            extent: [4.0, 3.5, 2.0],
            classes: vec![
                ClassSpec::new("floor", (1, 1), (0.0, 0.0)),
                ClassSpec::new("wall", (4, 4), (0.0, 0.0)),
                ClassSpec::new("table", (1, 2), (0.9, 1.3)),
                ClassSpec::new("chair", (1, 3), (0.45, 0.55)),
                ClassSpec::new("board", (1, 1), (1.0, 1.6)),
                ClassSpec::new("clutter", (2, 4), (0.15, 0.3)),
            ],
            density: 12.0,
            noise: 0.005,
            seed,
        }
    }

    pub fn class_names(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::arg(format!("room extents must be positive, got {:?}", self.extent)));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::arg(format!("density must be positive, got {}", self.density)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::arg(format!("noise must be non-negative, got {}", self.noise)));
        }
        for c in &self.classes {
            if !DEFAULT_CLASSES.contains(&c.name.as_str()) {
                return Err(Error::arg(format!("unknown class `{}`", c.name)));
            }
            if c.count.0 > c.count.1 || c.size.0 > c.size.1 || c.size.0 < 0.0 {
                return Err(Error::arg(format!("bad ranges for class `{}`", c.name)));
            }
        }
        let mut names = self.class_names();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::arg("duplicate class names"));
        }
        Ok(())
    }

    /// Reads `extent`, `density`, `noise`, `seed`, `classes` and per-class
    /// `<name>.count` / `<name>.size` pairs on top of the defaults.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let mut spec = SceneSpec::default();
        if let Some(names) = cfg.parse_list::<String>("classes")? {
            let defaults = spec.classes.clone();
            spec.classes = names
                .iter()
                .map(|n| {
                    defaults
                        .iter()
                        .find(|c| &c.name == n)
                        .cloned()
                        .ok_or_else(|| Error::invalid(format!("unknown class `{n}`")))
                })
                .collect::<Result<_>>()?;
        }
        let class_key = |k: &str| {
            k.split_once('.')
                .is_some_and(|(c, f)| spec.classes.iter().any(|s| s.name == c) && (f == "count" || f == "size"))
        };
        cfg.reject_unknown(|k| matches!(k, "extent" | "density" | "noise" | "seed" | "classes") || class_key(k))?;
        if let Some(e) = cfg.parse_list::<f64>("extent")? {
            spec.extent = e
                .try_into()
                .map_err(|_| Error::invalid("extent needs three values"))?;
        }
        if let Some(d) = cfg.parse_value("density")? {
            spec.density = d;
        }
        if let Some(s) = cfg.parse_value("noise")? {
            spec.noise = s;
        }
        if let Some(s) = cfg.parse_value("seed")? {
            spec.seed = s;
        }
        for c in &mut spec.classes {
            if let Some(v) = cfg.parse_list::<usize>(&format!("{}.count", c.name))? {
                c.count = pair(&v, &c.name)?;
            }
            if let Some(v) = cfg.parse_list::<f64>(&format!("{}.size", c.name))? {
                c.size = pair(&v, &c.name)?;
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config(&self) -> KvConfig {
        let mut cfg = KvConfig::default();
        cfg.insert("extent", format_list(&self.extent));
        cfg.insert("density", self.density);
        cfg.insert("noise", self.noise);
        cfg.insert("seed", self.seed);
        cfg.insert("classes", self.class_names().join(", "));
        for c in &self.classes {
            cfg.insert(format!("{}.count", c.name), format!("{}, {}", c.count.0, c.count.1));
            cfg.insert(format!("{}.size", c.name), format!("{}, {}", c.size.0, c.size.1));
        }
        cfg
    }
}

fn pair<T: Copy>(v: &[T], name: &str) -> Result<(T, T)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::invalid(format!("`{name}` ranges need two values"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecord {
    /// Class index into the spec's class list.
    pub class: u32,
    pub bbox: Aabb,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Labelled cloud; labels index the spec's class list.
    pub cloud: PointCloud,
    /// Inventory index of the object behind every point.
    pub instance: Vec<usize>,
    pub inventory: Vec<ObjectRecord>,
}

impl Scene {
    /// Inventory indices of objects holding fewer than `share` of the points.
    pub fn small_objects(&self, share: f64) -> Vec<usize> {
        let limit = share * self.cloud.len() as f64;
        (0..self.inventory.len())
            .filter(|&o| self.inventory[o].points > 0 && (self.inventory[o].points as f64) < limit)
            .collect()
    }

    /// Inventory as CSV: `object,class,points,min_x,min_y,min_z,max_x,max_y,max_z`.
    pub fn inventory_csv(&self, class_names: &[&str]) -> String {
        let mut s = String::from("object,class,points,min_x,min_y,min_z,max_x,max_y,max_z\n");
        for (i, o) in self.inventory.iter().enumerate() {
            let b = &o.bbox;
            s.push_str(&format!(
                "{i},{},{},{},{},{},{},{},{}\n",
                class_names[o.class as usize], o.points, b.min[0], b.min[1], b.min[2], b.max[0], b.max[1], b.max[2]
            ));
        }
        s
    }
}

struct Builder {
    /// Layout decisions.
    rng: ChaCha8Rng,
    /// Surface samples, kept apart so the layout does not depend on density.
    sampler: ChaCha8Rng,
    jitter: Option<Normal<f64>>,
    density: f64,
    coords: Vec<Point3>,
    labels: Vec<u32>,
    instance: Vec<usize>,
    inventory: Vec<ObjectRecord>,
}

impl Builder {
    /// Uniform samples on the parallelogram `o + s·u + t·v`, stratified: the
    /// surface is cut into cells of about one sample each and every sample
    /// lands uniformly inside a distinct random cell.
    fn rect(&mut self, o: Point3, u: Point3, v: Point3) {
        let area = norm(cross(u, v));
        let count = (area * self.density).round() as usize;
        let object = self.inventory.len() - 1;
        let h = self.density.sqrt();
        let nu = ((norm(u) * h).round() as usize).max(1);
        let nv = ((norm(v) * h).round() as usize).max(1);
        let mut cells: Vec<usize> = (0..nu * nv).collect();
        for k in 0..count {
            if k % cells.len() == 0 {
                cells.shuffle(&mut self.sampler);
            }
            let c = cells[k % cells.len()];
            let s = ((c % nu) as f64 + self.sampler.random::<f64>()) / nu as f64;
            let t = ((c / nu) as f64 + self.sampler.random::<f64>()) / nv as f64;
            let mut p = [0.0; 3];
            for a in 0..3 {
                p[a] = o[a] + s * u[a] + t * v[a];
                if let Some(n) = &self.jitter {
                    p[a] += n.sample(&mut self.sampler);
                }
            }
            self.coords.push(p);
            self.labels.push(self.inventory[object].class);
            self.instance.push(object);
        }
    }

    /// The five faces of an axis-aligned box other than the bottom.
    fn open_box(&mut self, min: Point3, max: Point3) {
        let [dx, dy, dz] = [max[0] - min[0], max[1] - min[1], max[2] - min[2]];
        self.rect([min[0], min[1], max[2]], [dx, 0.0, 0.0], [0.0, dy, 0.0]);
        self.rect(min, [dx, 0.0, 0.0], [0.0, 0.0, dz]);
        self.rect([min[0], max[1], min[2]], [dx, 0.0, 0.0], [0.0, 0.0, dz]);
        self.rect(min, [0.0, dy, 0.0], [0.0, 0.0, dz]);
        self.rect([max[0], min[1], min[2]], [0.0, dy, 0.0], [0.0, 0.0, dz]);
    }

    fn begin(&mut self, class: u32) {
        self.inventory.push(ObjectRecord {
            class,
            bbox: Aabb::empty(),
            points: 0,
        });
    }

    fn finish(&mut self, start: usize) {
        let o = self.inventory.last_mut().expect("begun");
        o.points = self.coords.len() - start;
        o.bbox = Aabb::from_points(&self.coords[start..]);
    }

    fn legs(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, height: f64, w: f64) {
        for (x, y) in [(x0, y0), (x1 - w, y0), (x0, y1 - w), (x1 - w, y1 - w)] {
            self.open_box([x, y, 0.0], [x + w, y + w, height]);
        }
    }
}

fn cross(u: Point3, v: Point3) -> Point3 {
    [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
}

fn norm(u: Point3) -> f64 {
    (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt()
}

/// Axis-aligned footprint `[x0, y0, x1, y1]`.
type Footprint = [f64; 4];

fn overlaps(a: &Footprint, b: &Footprint, gap: f64) -> bool {
    a[0] < b[2] + gap && b[0] < a[2] + gap && a[1] < b[3] + gap && b[1] < a[3] + gap
}

const PLACEMENT_TRIES: usize = 500;
const WALL_MARGIN: f64 = 0.15;
const TABLE_HEIGHT: f64 = 0.75;
const SEAT_HEIGHT: f64 = 0.45;

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        sampler: {
            let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
            r.set_stream(1);
            r
        },
        jitter: (spec.noise > 0.0).then(|| Normal::new(0.0, spec.noise).expect("σ > 0")),
        density: spec.density,
        coords: Vec::new(),
        labels: Vec::new(),
        instance: Vec::new(),
        inventory: Vec::new(),
    };
    let [ex, ey, ez] = spec.extent;
    let class_of = |name: &str| spec.classes.iter().position(|c| c.name == name);
    let mut counts = vec![0usize; spec.classes.len()];
    for (k, c) in spec.classes.iter().enumerate() {
        counts[k] = b.rng.random_range(c.count.0..=c.count.1);
    }
    let count_of = |name: &str| class_of(name).map_or(0, |k| counts[k]);

    if let Some(k) = class_of("floor") {
        for _ in 0..counts[k] {
            let start = b.coords.len();
            b.begin(k as u32);
            b.rect([0.0; 3], [ex, 0.0, 0.0], [0.0, ey, 0.0]);
            b.finish(start);
        }
    }
    let mut walls: Vec<usize> = (0..4).collect();
    walls.shuffle(&mut b.rng);
    let walls_built = &walls[..count_of("wall").min(4)];
    if let Some(k) = class_of("wall") {
        if counts[k] > 4 {
            return Err(Error::arg("a room has at most four walls"));
        }
        for &w in walls_built {
            let start = b.coords.len();
            b.begin(k as u32);
            let (o, u) = wall_base(w, ex, ey);
            b.rect(o, u, [0.0, 0.0, ez]);
            b.finish(start);
        }
    }

    let mut footprints: Vec<Footprint> = Vec::new();
    let mut tables: Vec<Footprint> = Vec::new();
    let place = |b: &mut Builder, w: f64, d: f64, footprints: &mut Vec<Footprint>| -> Result<Footprint> {
        for _ in 0..PLACEMENT_TRIES {
            let (w, d) = if b.rng.random_bool(0.5) { (w, d) } else { (d, w) };
            let x_hi = ex - WALL_MARGIN - w;
            let y_hi = ey - WALL_MARGIN - d;
            if x_hi <= WALL_MARGIN || y_hi <= WALL_MARGIN {
                break;
            }
            let x = b.rng.random_range(WALL_MARGIN..x_hi);
            let y = b.rng.random_range(WALL_MARGIN..y_hi);
            let f = [x, y, x + w, y + d];
            if footprints.iter().all(|g| !overlaps(g, &f, 0.1)) {
                footprints.push(f);
                return Ok(f);
            }
        }
        Err(Error::arg("room too small for the requested furniture"))
    };

    if let Some(k) = class_of("table") {
        let (lo, hi) = spec.classes[k].size;
        for _ in 0..counts[k] {
            let w = b.rng.random_range(lo..=hi);
            let d = w * b.rng.random_range(0.5..=0.8);
            let f = place(&mut b, w, d, &mut footprints)?;
            let start = b.coords.len();
            b.begin(k as u32);
            b.open_box([f[0], f[1], TABLE_HEIGHT - 0.04], [f[2], f[3], TABLE_HEIGHT]);
            b.legs(f[0], f[1], f[2], f[3], TABLE_HEIGHT - 0.04, 0.05);
            b.finish(start);
            tables.push(f);
        }
    }
    if let Some(k) = class_of("chair") {
        let (lo, hi) = spec.classes[k].size;
        for _ in 0..counts[k] {
            let s = b.rng.random_range(lo..=hi);
            let f = place(&mut b, s, s, &mut footprints)?;
            let start = b.coords.len();
            b.begin(k as u32);
            b.open_box([f[0], f[1], SEAT_HEIGHT - 0.05], [f[2], f[3], SEAT_HEIGHT]);
            b.legs(f[0], f[1], f[2], f[3], SEAT_HEIGHT - 0.05, 0.04);
            // backrest along the footprint's y-min edge
            b.open_box([f[0], f[1], SEAT_HEIGHT], [f[2], f[1] + 0.05, SEAT_HEIGHT + 0.45]);
            b.finish(start);
        }
    }
    if let Some(k) = class_of("board") {
        if walls_built.is_empty() && counts[k] > 0 {
            return Err(Error::arg("boards need at least one wall"));
        }
        if counts[k] > walls_built.len() {
            return Err(Error::arg("at most one board per wall"));
        }
        let (lo, hi) = spec.classes[k].size;
        for &w in walls_built.iter().take(counts[k]) {
            let (o, u) = wall_base(w, ex, ey);
            let len = norm(u);
            let width = b.rng.random_range(lo..=hi).min(len - 0.2);
            let height = (0.6f64).min(ez * 0.5);
            let along = b.rng.random_range(0.1..=(len - width - 0.1).max(0.1));
            let z0 = (ez * 0.5 - height * 0.5).max(0.05);
            let dir = [u[0] / len, u[1] / len, 0.0];
            let inward = inward_normal(w);
            let o2 = [
                o[0] + dir[0] * along + inward[0] * 0.03,
                o[1] + dir[1] * along + inward[1] * 0.03,
                z0,
            ];
            let start = b.coords.len();
            b.begin(k as u32);
            b.rect(o2, [dir[0] * width, dir[1] * width, 0.0], [0.0, 0.0, height]);
            b.finish(start);
        }
    }
    if let Some(k) = class_of("clutter") {
        let (lo, hi) = spec.classes[k].size;
        let mut on_floor: Vec<Footprint> = footprints.clone();
        let mut on_table: Vec<Vec<Footprint>> = vec![Vec::new(); tables.len()];
        for _ in 0..counts[k] {
            let s = b.rng.random_range(lo..=hi);
            let h = s * b.rng.random_range(0.6..=1.2);
            let mut placed = None;
            for _ in 0..PLACEMENT_TRIES {
                if !tables.is_empty() && b.rng.random_bool(0.8) {
                    let t = b.rng.random_range(0..tables.len());
                    let f = tables[t];
                    if f[2] - f[0] > s + 0.1 && f[3] - f[1] > s + 0.1 {
                        let x = b.rng.random_range(f[0] + 0.05..f[2] - 0.05 - s);
                        let y = b.rng.random_range(f[1] + 0.05..f[3] - 0.05 - s);
                        let g = [x, y, x + s, y + s];
                        if on_table[t].iter().all(|o| !overlaps(o, &g, 0.05)) {
                            on_table[t].push(g);
                            placed = Some((g, TABLE_HEIGHT));
                            break;
                        }
                    }
                } else if ex - WALL_MARGIN - s > WALL_MARGIN && ey - WALL_MARGIN - s > WALL_MARGIN {
                    let x = b.rng.random_range(WALL_MARGIN..ex - WALL_MARGIN - s);
                    let y = b.rng.random_range(WALL_MARGIN..ey - WALL_MARGIN - s);
                    let g = [x, y, x + s, y + s];
                    if on_floor.iter().all(|o| !overlaps(o, &g, 0.05)) {
                        on_floor.push(g);
                        placed = Some((g, 0.0));
                        break;
                    }
                }
            }
            let (g, z) = placed.ok_or_else(|| Error::arg("no room left for clutter"))?;
            let start = b.coords.len();
            b.begin(k as u32);
            b.open_box([g[0], g[1], z], [g[2], g[3], z + h]);
            b.finish(start);
        }
    }

    let Builder {
        coords,
        labels,
        instance,
        inventory,
        ..
    } = b;
    if coords.is_empty() {
        return Err(Error::arg("the spec produces no points"));
    }
    let cloud = PointCloud::from_coords(coords)?.with_labels(labels)?;
    Ok(Scene {
        cloud,
        instance,
        inventory,
    })
}

/// Origin and along-wall vector of wall `w` (y=0, x=X, y=Y, x=0).
fn wall_base(w: usize, ex: f64, ey: f64) -> (Point3, Point3) {
    match w {
        0 => ([0.0, 0.0, 0.0], [ex, 0.0, 0.0]),
        1 => ([ex, 0.0, 0.0], [0.0, ey, 0.0]),
        2 => ([0.0, ey, 0.0], [ex, 0.0, 0.0]),
        _ => ([0.0, 0.0, 0.0], [0.0, ey, 0.0]),
    }
}

fn inward_normal(w: usize) -> Point3 {
    match w {
        0 => [0.0, 1.0, 0.0],
        1 => [-1.0, 0.0, 0.0],
        2 => [0.0, -1.0, 0.0],
        _ => [1.0, 0.0, 0.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_cloud() {
        let a = generate_scene(&SceneSpec::default()).unwrap();
        let b = generate_scene(&SceneSpec::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec { seed: 1, ..SceneSpec::default() }).unwrap();
        assert_ne!(a.cloud, c.cloud);
    }

    #[test]
    fn degenerate_extent_is_rejected() {
        let spec = SceneSpec {
            extent: [0.0, 1.0, 1.0],
            ..SceneSpec::default()
        };
        assert!(matches!(generate_scene(&spec), Err(Error::Argument(_))));
    }

    #[test]
    fn config_round_trip() {
        let spec = SceneSpec::toy(9);
        assert_eq!(SceneSpec::from_config(&spec.to_config()).unwrap(), spec);
        let bad = KvConfig::parse("colour = red").unwrap();
        assert!(SceneSpec::from_config(&bad).is_err());
    }
}
