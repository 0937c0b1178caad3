use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use super::model::{predict, scene_loss, Model};
use super::prepare::PreparedScene;
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::metrics::{Confusion, SegMetrics};
use crate::tensor::{load_checkpoint, save_checkpoint, AdamW, Checkpoint, Graph, ParamStore, RngState};

pub const METRICS_HEADER: &str = "epoch,loss,mIoU,mAcc,OA";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: u64,
    pub loss: f64,
    pub miou: f64,
    pub macc: f64,
    pub oa: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.epoch, self.loss, self.miou, self.macc, self.oa)
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Writes `best.ckpt`, `last.ckpt` and `metrics.csv` here when set.
    pub out_dir: Option<PathBuf>,
    /// Continues from this state instead of a fresh initialisation.
    pub resume: Option<Checkpoint>,
    /// Stops after this many completed epochs (counted from zero).
    pub stop_after: Option<u64>,
    /// Prints one line per epoch to stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    /// State after the final epoch.
    pub last: Checkpoint,
    /// Best validation mIoU seen in this call, if any epoch improved on the
    /// resumed best.
    pub best: Option<Checkpoint>,
    pub log: Vec<EpochLog>,
}

/// Builds a model and its freshly initialised parameters from the seed.
pub fn init_model(cfg: &NetworkConfig) -> Result<(Model, ParamStore, ChaCha8Rng)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut store = ParamStore::new();
    let model = Model::new(cfg, &mut store, &mut rng)?;
    Ok((model, store, rng))
}

/// Rebuilds the model recorded in a checkpoint.
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<(Model, ParamStore)> {
    let cfg = NetworkConfig::from_config(&KvConfig::parse(&ck.config)?)?;
    let (model, fresh, _) = init_model(&cfg)?;
    check_layout(&fresh, &ck.params)?;
    Ok((model, ck.params.clone()))
}

fn check_layout(expected: &ParamStore, got: &ParamStore) -> Result<()> {
    let same = expected.len() == got.len()
        && expected
            .ids()
            .zip(got.ids())
            .all(|(a, b)| expected.name(a) == got.name(b) && expected.value(a).shape() == got.value(b).shape());
    if same {
        Ok(())
    } else {
        Err(Error::invalid("checkpoint parameters do not match the configured model"))
    }
}

/// One optimiser step on the mean loss of `batch`; returns that loss.
pub fn train_step(model: &Model, store: &mut ParamStore, batch: &[&PreparedScene], opt: &AdamW) -> Result<f64> {
    store.zero_grads();
    let mut total = 0.0;
    for scene in batch {
        let mut g = Graph::new();
        let loss = scene_loss(model, &mut g, store, scene)?;
        let v = g.value(loss).item();
        if !v.is_finite() {
            return Err(Error::Internal(format!("non-finite loss {v}")));
        }
        total += v;
        g.backward(loss)?;
        g.accumulate_param_grads(store);
    }
    store.scale_grads(1.0 / batch.len() as f64);
    opt.step(store)?;
    Ok(total / batch.len() as f64)
}

/// Pooled confusion over all scenes.
pub fn evaluate(model: &Model, store: &ParamStore, scenes: &[PreparedScene]) -> Result<SegMetrics> {
    let mut c = Confusion::new(model.config().classes);
    for s in scenes {
        let labels = s.labels.as_ref().ok_or_else(|| Error::arg("evaluation scene has no labels"))?;
        c.add(&predict(model, store, s)?, labels)?;
    }
    Ok(c.scores())
}

/// Step schedule: the base rate, divided by 10 after 60% of the epochs and
/// again after 80%.
pub fn learning_rate(cfg: &NetworkConfig, epoch: u64) -> f64 {
    let done = (epoch - 1) as f64 / cfg.epochs as f64;
    let drops = [0.6, 0.8].iter().filter(|&&at| done >= at).count();
    cfg.lr * 0.1f64.powi(drops as i32)
}

fn optimiser(cfg: &NetworkConfig, epoch: u64) -> AdamW {
    AdamW {
        lr: learning_rate(cfg, epoch),
        weight_decay: cfg.weight_decay,
        ..AdamW::default()
    }
}

/// Trains for `cfg.epochs` epochs, shuffling the training scenes each epoch
/// and validating after it. Validation falls back to the training scenes
/// when `val` is empty.
pub fn train(train: &[PreparedScene], val: &[PreparedScene], cfg: &NetworkConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::arg("training needs at least one scene"));
    }
    cfg.validate()?;
    let config_text = cfg.to_config().render();
    let (model, mut store, mut rng, start, mut best_metric) = match &opts.resume {
        Some(ck) => {
            let (model, store) = model_from_checkpoint(ck)?;
            if model.config() != cfg {
                return Err(Error::invalid("checkpoint was trained with a different configuration"));
            }
            (model, store, ck.rng.restore(), ck.epoch, ck.best_metric)
        }
        None => {
            let (model, store, rng) = init_model(cfg)?;
            (model, store, rng, 0, f64::NEG_INFINITY)
        }
    };
    let val = if val.is_empty() { train } else { val };
    let mut log = Vec::new();
    let mut best = None;
    let mut csv = match &opts.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("metrics.csv");
            let fresh = opts.resume.is_none() || !path.exists();
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(path)?;
            if fresh {
                writeln!(f, "{METRICS_HEADER}")?;
            }
            Some(f)
        }
        None => None,
    };
    let end = opts.stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let snapshot = |store: &ParamStore, rng: &ChaCha8Rng, epoch: u64, best_metric: f64| Checkpoint {
        config: config_text.clone(),
        epoch,
        best_metric,
        rng: RngState::capture(rng),
        params: store.clone(),
    };
    for epoch in start + 1..=end {
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        let opt = optimiser(cfg, epoch);
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&PreparedScene> = chunk.iter().map(|&i| &train[i]).collect();
            loss_sum += train_step(&model, &mut store, &batch, &opt)?;
            steps += 1;
        }
        let m = evaluate(&model, &store, val)?;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / steps as f64,
            miou: m.miou,
            macc: m.macc,
            oa: m.oa,
        };
        if opts.verbose {
            eprintln!(
                "epoch {epoch}: loss {:.4} mIoU {:.4} mAcc {:.4} OA {:.4}",
                entry.loss, entry.miou, entry.macc, entry.oa
            );
        }
        if let Some(f) = &mut csv {
            writeln!(f, "{}", entry.csv_row())?;
        }
        if m.miou > best_metric {
            best_metric = m.miou;
            let ck = snapshot(&store, &rng, epoch, best_metric);
            if let Some(dir) = &opts.out_dir {
                save_checkpoint(&dir.join("best.ckpt"), &ck)?;
            }
            best = Some(ck);
        }
        log.push(entry);
        if let Some(dir) = &opts.out_dir {
            save_checkpoint(&dir.join("last.ckpt"), &snapshot(&store, &rng, epoch, best_metric))?;
        }
    }
    let last = snapshot(&store, &rng, end.max(start), best_metric);
    Ok(TrainOutcome { model, last, best, log })
}

/// Loads a checkpoint and rebuilds its model.
pub fn load_model(path: &Path) -> Result<(Model, ParamStore)> {
    model_from_checkpoint(&load_checkpoint(path)?)
}
