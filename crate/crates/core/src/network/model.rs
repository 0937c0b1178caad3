use std::sync::Arc;

use rand::Rng;

use super::config::NetworkConfig;
use super::prepare::{PreparedScene, INPUT_DIM};
use crate::downsample::fuse_features;
use crate::error::{Error, Result};
use crate::gia::{geometry_informed_aggregation, local_vector_attention, AttentionParams, GiaParams};
use crate::nn::{LayerNorm, Linear};
use crate::superpoint::SuperpointEmbedder;
use crate::tensor::{Graph, NodeId, ParamStore};

#[derive(Debug, Clone, PartialEq)]
struct GlobalStageParams {
    /// Projection from the previous stage's width (absent at stage 0).
    proj: Option<(Linear, LayerNorm)>,
    attn: AttentionParams,
    norm: LayerNorm,
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderStageParams {
    blocks: Vec<(GiaParams, LayerNorm)>,
    /// Fuse map and normalization onto the next stage.
    down: Option<(Linear, LayerNorm)>,
}

#[derive(Debug, Clone, PartialEq)]
struct DecoderStageParams {
    /// Next stage width to this stage's width.
    up: Linear,
    mix: Linear,
    norm: LayerNorm,
}

/// Parameter layout of the two-branch network. Parameters live in a
/// [`ParamStore`]; the model only records their ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    cfg: NetworkConfig,
    stem: Linear,
    stem_norm: LayerNorm,
    embed: SuperpointEmbedder,
    global: Vec<GlobalStageParams>,
    encoder: Vec<EncoderStageParams>,
    decoder: Vec<DecoderStageParams>,
    head: Linear,
    sp_head: Linear,
}

/// Nodes produced by one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `n × classes`.
    pub logits: NodeId,
    /// `m × classes`, present when the superpoint branch ran.
    pub sp_logits: Option<NodeId>,
    /// Encoder output per stage.
    pub stage_features: Vec<NodeId>,
    /// Global-branch output per stage, when it ran.
    pub sp_features: Vec<NodeId>,
}

impl Model {
    /// Registers all parameters in a fixed order.
    pub fn new(cfg: &NetworkConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let dims = &cfg.stage_dims;
        let s = dims.len();
        let stem = Linear::new(store, "stem", INPUT_DIM, dims[0], rng);
        let stem_norm = LayerNorm::new(store, "stem.norm", dims[0]);
        let embed = SuperpointEmbedder::new(store, "sp.embed", INPUT_DIM, dims[0], dims[0], rng);
        let global = (0..s)
            .map(|k| GlobalStageParams {
                proj: (k > 0).then(|| {
                    (
                        Linear::new(store, &format!("sp{k}.proj"), dims[k - 1], dims[k], rng),
                        LayerNorm::new(store, &format!("sp{k}.proj.norm"), dims[k]),
                    )
                }),
                attn: AttentionParams::new(store, &format!("sp{k}.attn"), dims[k], rng),
                norm: LayerNorm::new(store, &format!("sp{k}.norm"), dims[k]),
            })
            .collect();
        let encoder = (0..s)
            .map(|k| EncoderStageParams {
                blocks: (0..cfg.depths[k])
                    .map(|b| {
                        (
                            GiaParams::new(store, &format!("enc{k}.{b}.gia"), dims[k], rng),
                            LayerNorm::new(store, &format!("enc{k}.{b}.norm"), dims[k]),
                        )
                    })
                    .collect(),
                down: (k + 1 < s).then(|| {
                    (
                        Linear::new(store, &format!("enc{k}.down"), dims[k], dims[k + 1], rng),
                        LayerNorm::new(store, &format!("enc{k}.down.norm"), dims[k + 1]),
                    )
                }),
            })
            .collect();
        let decoder = (0..s - 1)
            .map(|k| DecoderStageParams {
                up: Linear::new(store, &format!("dec{k}.up"), dims[k + 1], dims[k], rng),
                mix: Linear::new(store, &format!("dec{k}.mix"), dims[k], dims[k], rng),
                norm: LayerNorm::new(store, &format!("dec{k}.norm"), dims[k]),
            })
            .collect();
        let head = Linear::new(store, "head", dims[0], cfg.classes, rng);
        let sp_head = Linear::new(store, "sp.head", dims[0], cfg.classes, rng);
        Ok(Model {
            cfg: cfg.clone(),
            stem,
            stem_norm,
            embed,
            global,
            encoder,
            decoder,
            head,
            sp_head,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    /// Whether a forward pass needs the superpoint branch.
    pub fn uses_superpoints(&self) -> bool {
        self.cfg.k_global > 0 || self.cfg.beta > 0.0
    }

    /// Superpoint self-attention per stage with halving in between.
    pub fn global_branch_forward(&self, g: &mut Graph, store: &ParamStore, scene: &PreparedScene, input: NodeId) -> Result<Vec<NodeId>> {
        let mut out = Vec::with_capacity(self.global.len());
        let mut x = self.embed.forward(g, store, input, &scene.superpoints)?;
        for (k, (p, stage)) in self.global.iter().zip(&scene.global).enumerate() {
            if let Some((proj, norm)) = &p.proj {
                let keep = scene.global[k - 1]
                    .keep
                    .clone()
                    .ok_or_else(|| Error::Internal("missing superpoint halving".into()))?;
                let kept = g.gather(x, keep)?;
                let h = proj.forward(g, store, kept)?;
                let h = norm.forward(g, store, h)?;
                x = g.relu(h);
            }
            let a = local_vector_attention(g, store, &p.attn, x, &stage.ctx)?;
            let sum = g.add(x, a.out)?;
            x = p.norm.forward(g, store, sum)?;
            out.push(x);
        }
        Ok(out)
    }

    /// GIA blocks per stage with downsampling in between; returns the stage
    /// outputs used as skips.
    pub fn encoder_forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        scene: &PreparedScene,
        input: NodeId,
        sp_features: &[NodeId],
    ) -> Result<Vec<NodeId>> {
        let h = self.stem.forward(g, store, input)?;
        let h = self.stem_norm.forward(g, store, h)?;
        let mut x = g.relu(h);
        let mut skips = Vec::with_capacity(self.encoder.len());
        for (k, (p, stage)) in self.encoder.iter().zip(&scene.stages).enumerate() {
            let sp = sp_features.get(k).copied();
            for (gia, norm) in &p.blocks {
                let y = geometry_informed_aggregation(g, store, gia, x, sp, &stage.ctx)?;
                let sum = g.add(x, y)?;
                x = norm.forward(g, store, sum)?;
            }
            skips.push(x);
            if let (Some((d, norm)), Some(map)) = (&p.down, &stage.down) {
                let h = fuse_features(g, store, d, x, map)?;
                let h = norm.forward(g, store, h)?;
                x = g.relu(h);
            }
        }
        Ok(skips)
    }

    /// Coarse-to-fine interpolation with skips, then the point head.
    pub fn decoder_forward(&self, g: &mut Graph, store: &ParamStore, scene: &PreparedScene, skips: &[NodeId]) -> Result<NodeId> {
        let mut x = *skips.last().ok_or_else(|| Error::Internal("no encoder stages".into()))?;
        for k in (0..self.decoder.len()).rev() {
            let p = &self.decoder[k];
            let interp = scene.stages[k]
                .up
                .as_ref()
                .ok_or_else(|| Error::Internal("missing interpolation weights".into()))?;
            let up = p.up.forward(g, store, x)?;
            let c = g.value(up).cols();
            let n = scene.stages[k].coords.len();
            let gathered = g.gather(up, interp.index.clone())?;
            let weighted = g.row_scale(gathered, interp.weights.clone())?;
            let weighted = g.reshape(weighted, &[n, interp.k, c])?;
            let interpolated = g.sum_axis(weighted, 1)?;
            let joined = g.add(interpolated, skips[k])?;
            let h = p.mix.forward(g, store, joined)?;
            let h = p.norm.forward(g, store, h)?;
            x = g.relu(h);
        }
        self.head.forward(g, store, x)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, scene: &PreparedScene) -> Result<ForwardOutput> {
        if scene.stages.len() != self.encoder.len() {
            return Err(Error::arg("scene was prepared for a different stage count"));
        }
        let input = g.input(scene.input.clone());
        let sp_features = if self.uses_superpoints() {
            self.global_branch_forward(g, store, scene, input)?
        } else {
            Vec::new()
        };
        let stage_features = self.encoder_forward(g, store, scene, input, &sp_features)?;
        let logits = self.decoder_forward(g, store, scene, &stage_features)?;
        let sp_logits = match sp_features.first() {
            Some(&f) => Some(self.sp_head.forward(g, store, f)?),
            None => None,
        };
        Ok(ForwardOutput {
            logits,
            sp_logits,
            stage_features,
            sp_features,
        })
    }
}

/// Mean point cross-entropy plus `beta` times the mean superpoint
/// cross-entropy against the soft labels. The superpoint term is left out
/// entirely when `beta = 0`.
pub fn total_loss(
    g: &mut Graph,
    logits: NodeId,
    labels: &[u32],
    sp_logits: Option<NodeId>,
    soft_labels: Option<&Arc<[f64]>>,
    beta: f64,
) -> Result<NodeId> {
    if !(beta >= 0.0) {
        return Err(Error::arg(format!("beta must be non-negative, got {beta}")));
    }
    let classes = g.value(logits).cols();
    let target: Arc<[f64]> = crate::tensor::one_hot(labels, classes).into();
    let point = g.cross_entropy(logits, target)?;
    if beta == 0.0 {
        return Ok(point);
    }
    let (Some(u), Some(w)) = (sp_logits, soft_labels) else {
        return Err(Error::arg("superpoint logits and soft labels are required when beta > 0"));
    };
    let sp = g.cross_entropy(u, w.clone())?;
    let sp = g.scale(sp, beta);
    g.add(point, sp)
}

/// Loss of one labelled scene.
pub fn scene_loss(model: &Model, g: &mut Graph, store: &ParamStore, scene: &PreparedScene) -> Result<NodeId> {
    let labels = scene.labels.as_ref().ok_or_else(|| Error::arg("scene has no labels"))?;
    let out = model.forward(g, store, scene)?;
    total_loss(g, out.logits, labels, out.sp_logits, scene.soft_labels.as_ref(), model.cfg.beta)
}

/// Argmax class per point (ties to the lowest class).
pub fn predict(model: &Model, store: &ParamStore, scene: &PreparedScene) -> Result<Vec<u32>> {
    let mut g = Graph::new();
    let out = model.forward(&mut g, store, scene)?;
    let logits = g.value(out.logits);
    let c = logits.cols();
    Ok(logits
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for j in 1..c {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect())
}
