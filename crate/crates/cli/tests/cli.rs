use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geospark::io::{load_point_cloud, save_point_cloud, Format};
use geospark::PointCloud;

fn geospark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_geospark")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = geospark(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL_SPEC: &str = "\
extent = 4, 3.5, 2
density = 12
table.count = 1, 2
table.size = 0.9, 1.3
chair.count = 1, 3
board.count = 1, 1
clutter.count = 2, 4
clutter.size = 0.15, 0.3
";

/// Two small labelled scenes in `dir`.
fn generate(dir: &Path) {
    let spec = dir.join("spec.cfg");
    fs::write(&spec, SMALL_SPEC).unwrap();
    ok(&["gen", "--spec", p(&spec), "--out", p(&dir.join("scenes")), "--scenes", "2", "--seed", "4"]);
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().skip(1).count()
}

#[test]
fn partition_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let scene = dir.path().join("scenes/scene_000.txt");
    let n = load_point_cloud(&scene, Format::from_path(&scene)).unwrap().len();
    let csv = dir.path().join("part.csv");
    let sp = dir.path().join("sp.csv");
    let stdout = ok(&["partition", p(&scene), "--out", p(&csv), "--emit-superpoints", p(&sp)]);
    assert_eq!(data_rows(&csv), n);
    let m: usize = stdout.lines().next().unwrap().strip_prefix("m ").unwrap().parse().unwrap();
    assert_eq!(data_rows(&sp), m);
    assert!(stdout.contains("energy ") && stdout.contains("wall_time_s "));
}

#[test]
fn export_round_trips_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    // single-precision values so the float PLY fields hold them exactly
    let coords = (0..60)
        .map(|i| {
            let t = i as f32;
            [(t * 0.173).sin() as f64, (t * 0.31).cos() as f64, (t * 0.05) as f64]
        })
        .collect();
    let cloud = PointCloud::from_coords(coords).unwrap();
    let input = dir.path().join("in.ply");
    save_point_cloud(&cloud, &input, Format::Ply).unwrap();
    let out = dir.path().join("out.ply");
    ok(&["export", p(&input), "--out", p(&out), "--set", "k_geo=8", "--set", "k_adj=6"]);
    let back = load_point_cloud(&out, Format::Ply).unwrap();
    assert_eq!(back.coords(), cloud.coords());
    assert!(back.colors().is_some() && back.labels().is_some());
}

#[test]
fn downsample_methods_write_cloud_and_parent_map() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let scene = dir.path().join("scenes/scene_001.txt");
    let n = load_point_cloud(&scene, Format::from_path(&scene)).unwrap().len();
    for method in ["gd", "fps", "voxel"] {
        let out = dir.path().join(format!("{method}.ply"));
        let parents = dir.path().join(format!("{method}.csv"));
        ok(&["downsample", p(&scene), "--method", method, "--out", p(&out), "--parents", p(&parents)]);
        let coarse = load_point_cloud(&out, Format::Ply).unwrap().len();
        assert!(coarse < n);
        assert_eq!(data_rows(&parents), n);
        let max = fs::read_to_string(&parents)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
            .max()
            .unwrap();
        assert_eq!(max + 1, coarse);
    }
}

#[test]
fn gen_partition_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    generate(dir.path());
    let scenes = dir.path().join("scenes");
    assert!(scenes.join("scene_001_inventory.csv").exists());
    ok(&["partition", p(&scenes.join("scene_000.txt")), "--out", p(&dir.path().join("part.csv"))]);
    let run = dir.path().join("run");
    ok(&["train", "--data", p(&scenes), "--out", p(&run), "--set", "epochs=5", "--set", "batch=2"]);
    assert_eq!(data_rows(&run.join("metrics.csv")), 5);
    let ck = run.join("last.ckpt");
    let stdout = ok(&["eval", "--checkpoint", p(&ck), "--data", p(&scenes)]);
    let miou: f64 = stdout.lines().next().unwrap().strip_prefix("mIoU ").unwrap().parse().unwrap();
    assert!(miou.is_finite() && (0.0..=1.0).contains(&miou));

    let painted = dir.path().join("pred.ply");
    ok(&["export", p(&scenes.join("scene_000.txt")), "--out", p(&painted), "--color", "prediction", "--checkpoint", p(&ck)]);
    let labels = load_point_cloud(&painted, Format::Ply).unwrap().labels().unwrap().to_vec();
    assert!(labels.iter().all(|&l| l < 6));
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate(a.path());
    generate(b.path());
    for f in ["scene_000.txt", "scene_001_inventory.csv", "spec.txt"] {
        assert_eq!(fs::read(a.path().join("scenes").join(f)).unwrap(), fs::read(b.path().join("scenes").join(f)).unwrap());
    }
    let scene = a.path().join("scenes/scene_000.txt");
    let out = |d: &Path| {
        let csv = d.join("part.csv");
        ok(&["partition", p(&scene), "--out", p(&csv)]);
        fs::read(csv).unwrap()
    };
    assert_eq!(out(a.path()), out(b.path()));
}

#[test]
fn user_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let code = |args: &[&str]| geospark(args).status.code().unwrap();
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["partition", p(&missing), "--out", "x.csv", "--bogus"]), 2);
    assert_eq!(code(&["partition", p(&missing), "--out", p(&dir.path().join("x.csv"))]), 2);

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "0 0 0\n1 1\n").unwrap();
    assert_eq!(code(&["features", p(&bad), "--out", p(&dir.path().join("f.csv"))]), 2);

    let ok_cloud = dir.path().join("ok.txt");
    fs::write(&ok_cloud, "0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\n").unwrap();
    let f = dir.path().join("f.csv");
    assert_eq!(code(&["features", p(&ok_cloud), "--out", p(&f), "--set", "no_such_key=1"]), 2);
    assert_eq!(code(&["features", p(&ok_cloud), "--out", p(&f), "--seed", "1", "--set", "seed=2"]), 2);
    assert_eq!(code(&["export", p(&ok_cloud), "--out", p(&f), "--color", "prediction"]), 2);
    assert_eq!(code(&["features", p(&ok_cloud), "--out", p(&f), "--set", "k_geo=4"]), 0);
    assert_eq!(data_rows(&f), 5);
}
