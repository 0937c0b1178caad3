use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use geospark::config::KvConfig;
use geospark::downsample::{fps_count, fps_downsample_map, geometric_downsample_map, voxel_downsample_map};
use geospark::io::{load_point_cloud, palette_color, save_point_cloud, Format};
use geospark::network::{
    evaluate, load_model, partition_cloud, predict, prepare_scene, train, NetworkConfig, PreparedScene, TrainOptions,
};
use geospark::superpoint::SuperpointGeometry;
use geospark::synthetic::{generate_scene, SceneSpec};
use geospark::tensor::load_checkpoint;
use geospark::{compute_geometric_features, PointCloud};

use crate::{Cli, ColorBy, Command, Common, Method};

/// Bad input from the command line rather than a failure inside the pipeline.
#[derive(Debug)]
pub struct UserError(pub String);

impl std::fmt::Display for UserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UserError {}

fn user(msg: impl Into<String>) -> anyhow::Error {
    UserError(msg.into()).into()
}

/// 2 for validation and user errors, 1 for everything else.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UserError>() {
            return 2;
        }
        if let Some(g) = cause.downcast_ref::<geospark::Error>() {
            return if g.is_user_error() { 2 } else { 1 };
        }
    }
    1
}

pub fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::Features { input, out } => features(common, &input, &out),
        Command::Partition {
            input,
            out,
            emit_superpoints,
            ply,
        } => partition(common, &input, &out, emit_superpoints.as_deref(), ply.as_deref()),
        Command::Downsample {
            input,
            method,
            cap,
            out,
            parents,
        } => downsample(common, &input, method, cap, &out, &parents),
        Command::Gen { spec, out, scenes } => gen(common, spec.as_deref(), &out, scenes),
        Command::Train { data, val, out, resume } => train_cmd(common, &data, val.as_deref(), &out, resume),
        Command::Eval {
            checkpoint,
            data,
            predictions,
        } => eval(common, &checkpoint, &data, predictions.as_deref()),
        Command::Export {
            input,
            out,
            color,
            checkpoint,
        } => export(common, &input, &out, color, checkpoint.as_deref()),
    }
}

/// Config file, then `--set` overrides, then `--seed`.
fn layered(common: &Common, base: Option<&Path>) -> Result<KvConfig> {
    if base.is_some() && common.config.is_some() {
        bail!(user("--config cannot be combined with --spec"));
    }
    let mut cfg = match base.or(common.config.as_deref()) {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            KvConfig::parse(&text)?
        }
        None => KvConfig::default(),
    };
    for s in &common.overrides {
        cfg.set(s)?;
    }
    if let Some(seed) = common.seed {
        let set_twice = common.overrides.iter().any(|s| s.split_once('=').is_some_and(|(k, _)| k.trim() == "seed"));
        if set_twice {
            bail!(user("--seed conflicts with --set seed=..."));
        }
        cfg.insert("seed", seed);
    }
    Ok(cfg)
}

fn network_config(common: &Common) -> Result<NetworkConfig> {
    Ok(NetworkConfig::from_config(&layered(common, None)?)?)
}

/// Commands driven by a checkpoint take their configuration from it.
fn reject_config(common: &Common, what: &str) -> Result<()> {
    if common.config.is_some() || !common.overrides.is_empty() {
        bail!(user(format!("{what} uses the checkpoint configuration; drop --config/--set")));
    }
    Ok(())
}

fn load(path: &Path) -> Result<PointCloud> {
    load_point_cloud(path, Format::from_path(path)).with_context(|| format!("loading {}", path.display()))
}

fn save(cloud: &PointCloud, path: &Path) -> Result<()> {
    save_point_cloud(cloud, path, Format::from_path(path)).with_context(|| format!("writing {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn features(common: &Common, input: &Path, out: &Path) -> Result<()> {
    let cfg = network_config(common)?;
    let cloud = load(input)?;
    let feats = compute_geometric_features(&cloud, cfg.k_geo)?;
    let mut s = String::from("linearity,planarity,scattering,verticality\n");
    for f in &feats.features {
        writeln!(s, "{},{},{},{}", f[0], f[1], f[2], f[3])?;
    }
    write(out, &s)
}

fn partition(common: &Common, input: &Path, out: &Path, superpoints: Option<&Path>, ply: Option<&Path>) -> Result<()> {
    let cfg = network_config(common)?;
    let cloud = load(input)?;
    let start = Instant::now();
    let (result, _) = partition_cloud(&cloud, &cfg)?;
    let elapsed = start.elapsed();

    let mut s = String::from("point_index,component_id\n");
    for (i, c) in result.component.iter().enumerate() {
        writeln!(s, "{i},{c}")?;
    }
    write(out, &s)?;
    if let Some(path) = superpoints {
        let geom = SuperpointGeometry::from_partition(&result, &cloud)?;
        let members = geom.members();
        let mut s = String::from("component_id,x,y,z,points,diameter\n");
        for (k, p) in geom.coords.iter().enumerate() {
            let dia = geom.global_desc.row(k)[0];
            writeln!(s, "{k},{},{},{},{},{dia}", p[0], p[1], p[2], members[k].len())?;
        }
        write(path, &s)?;
    }
    if let Some(path) = ply {
        save(&painted(&cloud, &result.component)?, path)?;
    }
    println!("m {}", result.num_components());
    println!("energy {}", result.energy);
    println!("wall_time_s {:.3}", elapsed.as_secs_f64());
    Ok(())
}

/// Coordinates colored and labelled by `ids`.
fn painted(cloud: &PointCloud, ids: &[usize]) -> Result<PointCloud> {
    let colors = ids.iter().map(|&c| palette_color(c)).collect();
    let labels = ids.iter().map(|&c| c as u32).collect();
    Ok(PointCloud::new(cloud.coords().to_vec(), Some(colors), Some(labels))?)
}

fn downsample(common: &Common, input: &Path, method: Method, cap: Option<f64>, out: &Path, parents: &Path) -> Result<()> {
    let cfg = network_config(common)?;
    let cloud = load(input)?;
    let cap = cap.unwrap_or_else(|| cfg.gd_caps.first().copied().unwrap_or(cfg.sp_dia_cap));
    if !(cap > 0.0 && cap.is_finite()) {
        bail!(user("--cap must be positive"));
    }
    let coords = cloud.coords();
    let map = match method {
        Method::Gd => {
            let (part, _) = partition_cloud(&cloud, &cfg)?;
            geometric_downsample_map(coords, &part.component, cap)?
        }
        Method::Voxel => voxel_downsample_map(coords, cap)?,
        Method::Fps => fps_downsample_map(coords, fps_count(coords.len(), cfg.fps_ratio), None)?,
    };
    save(&PointCloud::from_coords(map.coords.clone())?, out)?;
    let mut s = String::from("point_index,coarse_index\n");
    for (i, g) in map.group.iter().enumerate() {
        writeln!(s, "{i},{g}")?;
    }
    write(parents, &s)?;
    println!("points {} -> {}", coords.len(), map.len());
    Ok(())
}

fn gen(common: &Common, spec: Option<&Path>, out: &Path, scenes: usize) -> Result<()> {
    if scenes == 0 {
        bail!(user("--scenes must be at least 1"));
    }
    let kv = layered(common, spec)?;
    let spec = if spec.is_none() && kv.keys().next().is_none() {
        SceneSpec::default()
    } else {
        SceneSpec::from_config(&kv)?
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("spec.txt"), &spec.to_config().render())?;
    let names = spec.class_names();
    for k in 0..scenes {
        let scene = generate_scene(&SceneSpec {
            seed: spec.seed.wrapping_add(k as u64),
            ..spec.clone()
        })?;
        save(&scene.cloud, &out.join(format!("scene_{k:03}.txt")))?;
        write(&out.join(format!("scene_{k:03}_inventory.csv")), &scene.inventory_csv(&names))?;
        println!("scene_{k:03} points {} objects {}", scene.cloud.len(), scene.inventory.len());
    }
    Ok(())
}

/// Point cloud files in `dir`, sorted by name; CSV and config files are
/// skipped.
fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("txt" | "xyz" | "pts" | "ply")
                )
                && p.file_name().and_then(|n| n.to_str()) != Some("spec.txt")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!(user(format!("no point clouds in {}", dir.display())));
    }
    Ok(files)
}

fn prepare_dir(dir: &Path, cfg: &NetworkConfig) -> Result<(Vec<PathBuf>, Vec<PreparedScene>)> {
    let files = cloud_files(dir)?;
    let scenes = files
        .iter()
        .map(|f| {
            let cloud = load(f)?;
            if cloud.labels().is_none() {
                bail!(user(format!("{} has no labels", f.display())));
            }
            prepare_scene(&cloud, cfg).with_context(|| format!("preparing {}", f.display()))
        })
        .collect::<Result<_>>()?;
    Ok((files, scenes))
}

fn train_cmd(common: &Common, data: &Path, val: Option<&Path>, out: &Path, resume: bool) -> Result<()> {
    let cfg = network_config(common)?;
    let (_, train_set) = prepare_dir(data, &cfg)?;
    let val_set = match val {
        Some(dir) => prepare_dir(dir, &cfg)?.1,
        None => Vec::new(),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let resume = if resume {
        let path = out.join("last.ckpt");
        Some(load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))?)
    } else {
        None
    };
    write(&out.join("config.txt"), &cfg.to_config().render())?;
    let opts = TrainOptions {
        out_dir: Some(out.to_path_buf()),
        resume,
        stop_after: None,
        verbose: true,
    };
    let outcome = train(&train_set, &val_set, &cfg, &opts)?;
    if let Some(last) = outcome.log.last() {
        println!("epochs {} loss {} mIoU {} best {}", last.epoch, last.loss, last.miou, outcome.last.best_metric);
    }
    Ok(())
}

fn eval(common: &Common, checkpoint: &Path, data: &Path, predictions: Option<&Path>) -> Result<()> {
    reject_config(common, "eval")?;
    let (model, store) = load_model(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let (files, scenes) = prepare_dir(data, model.config())?;
    let m = evaluate(&model, &store, &scenes)?;
    if let Some(dir) = predictions {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (f, s) in files.iter().zip(&scenes) {
            let pred = predict(&model, &store, s)?;
            let mut text = String::with_capacity(pred.len() * 2);
            for p in pred {
                writeln!(text, "{p}")?;
            }
            let name = f.file_stem().and_then(|n| n.to_str()).unwrap_or("scene");
            write(&dir.join(format!("{name}_pred.txt")), &text)?;
        }
    }
    println!("mIoU {}", m.miou);
    println!("mAcc {}", m.macc);
    println!("OA {}", m.oa);
    for (c, iou) in m.iou.iter().enumerate() {
        match iou {
            Some(v) => println!("class {c} IoU {v}"),
            None => println!("class {c} IoU absent"),
        }
    }
    Ok(())
}

fn export(common: &Common, input: &Path, out: &Path, color: ColorBy, checkpoint: Option<&Path>) -> Result<()> {
    if Format::from_path(out) != Format::Ply {
        bail!(user("export writes PLY; use a .ply output path"));
    }
    let cloud = load(input)?;
    let ids: Vec<usize> = match (color, checkpoint) {
        (ColorBy::Component, None) => partition_cloud(&cloud, &network_config(common)?)?.0.component,
        (ColorBy::Component, Some(_)) => bail!(user("--checkpoint is only used with --color prediction")),
        (ColorBy::Prediction, None) => bail!(user("--color prediction needs --checkpoint")),
        (ColorBy::Prediction, Some(ck)) => {
            reject_config(common, "export --color prediction")?;
            let (model, store) = load_model(ck).with_context(|| format!("loading {}", ck.display()))?;
            let unlabelled = PointCloud::new(cloud.coords().to_vec(), cloud.colors().map(<[_]>::to_vec), None)?;
            let scene = prepare_scene(&unlabelled, model.config())?;
            predict(&model, &store, &scene)?.into_iter().map(|p| p as usize).collect()
        }
    };
    save(&painted(&cloud, &ids)?, out)
}
