//! Fixtures shared by the benchmarks.

use geospark::network::{prepare_scene, NetworkConfig, PreparedScene};
use geospark::synthetic::{generate_scene, SceneSpec};
use geospark::PointCloud;

/// Default-layout room at the given surface density.
pub fn room(density: f64, seed: u64) -> PointCloud {
    generate_scene(&SceneSpec {
        density,
        seed,
        ..SceneSpec::default()
    })
    .expect("default spec is valid")
    .cloud
}

/// Training-sized scenes prepared for the toy network.
pub fn toy_batch(cfg: &NetworkConfig, count: u64) -> Vec<PreparedScene> {
    (0..count)
        .map(|s| {
            let scene = generate_scene(&SceneSpec::toy(s)).expect("toy spec is valid");
            prepare_scene(&scene.cloud, cfg).expect("toy scene prepares")
        })
        .collect()
}
