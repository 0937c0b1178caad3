//! Geometry-guided point cloud segmentation.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! * [`cloud`], [`io`], [`knn`], [`graph`], [`sampling`]: containers, files,
//!   spatial queries and the neighbourhood graph.
//! * [`features`]: linearity / planarity / scattering / verticality.
//! * [`partition`]: Potts-penalised piecewise-constant partition solved by
//!   cut pursuit, with an exhaustive reference solver.
//! * [`superpoint`]: one pooled point per partition plus soft labels.
//! * [`tensor`]: a small reverse-mode engine with exactly the ops the
//!   network needs, AdamW and checkpoints.
//! * [`gia`]: local vector attention merged with attention over superpoints.
//! * [`downsample`]: partition-guided fusion, voxel and FPS baselines.
//! * [`network`]: the two-branch encoder/decoder, loss, training, metrics.
//! * [`synthetic`]: labelled indoor scenes for training and studies.

pub mod cloud;
pub mod config;
pub mod downsample;
pub mod eigen;
pub mod error;
pub mod features;
pub mod flow;
pub mod gia;
pub mod graph;
pub mod io;
pub mod knn;
pub mod mat;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod partition;
pub mod sampling;
pub mod superpoint;
pub mod synthetic;
pub mod tensor;

pub use cloud::{Aabb, Point3, PointCloud};
pub use error::{Error, Result};
pub use features::{compute_geometric_features, GeomFeatureSet};
pub use graph::{build_adjacency, AdjacencyGraph, Edge};
pub use knn::KnnIndex;
pub use mat::Mat;
pub use partition::{
    brute_force_partition, cut_pursuit, enforce_diameter_cap, partition_energy, PartitionProblem,
    PartitionResult,
};
