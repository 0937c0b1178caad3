//! Two-branch segmentation network.
//!
//! The local branch runs geometry-informed aggregation at every stage and
//! coarsens between stages (partition-guided by default). The global branch
//! embeds one superpoint per partition, runs self-attention among
//! superpoints and halves their number per stage; each local stage attends
//! to the superpoints of the same stage. A 3-NN interpolating decoder with
//! skips produces point logits, and a linear head on the first global stage
//! produces superpoint logits for the soft-label loss.

mod config;
mod model;
mod prepare;
mod train;

pub use config::{NetworkConfig, Sampling};
pub use model::{predict, scene_loss, total_loss, ForwardOutput, Model};
pub use prepare::{
    interpolation, partition_cloud, prepare_scene, prepare_with_partition, Interpolation, PointStage, PreparedScene,
    SuperpointStage, INPUT_DIM,
};
pub use train::{
    evaluate, init_model, load_model, model_from_checkpoint, train, train_step, EpochLog, TrainOptions, TrainOutcome,
    METRICS_HEADER,
};
