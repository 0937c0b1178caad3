//! `geospark` command line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "geospark", version, about = "Geometry-guided point cloud segmentation")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override applied after the config file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Random seed; same as `--set seed=N`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-point linearity, planarity, scattering and verticality as CSV.
    Features {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Geometric partition; writes `point_index,component_id`.
    Partition {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Superpoint coordinates CSV.
        #[arg(long, value_name = "CSV")]
        emit_superpoints: Option<PathBuf>,
        /// Color-by-component PLY.
        #[arg(long, value_name = "PLY")]
        ply: Option<PathBuf>,
    },
    /// Coarse cloud plus `point_index,coarse_index` parent map.
    Downsample {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Gd)]
        method: Method,
        /// Size cap for gd, cell edge for voxel; defaults to the first stage cap.
        #[arg(long)]
        cap: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        parents: PathBuf,
    },
    /// Synthetic labelled scenes plus object inventories.
    Gen {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        scenes: usize,
    },
    /// Trains on every cloud in a directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Validation clouds; the training clouds are used when absent.
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from `<out>/last.ckpt`.
        #[arg(long)]
        resume: bool,
    },
    /// Scores a checkpoint on labelled clouds.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Writes predicted labels per cloud here.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Color-by-component or color-by-prediction PLY.
    Export {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ColorBy::Component)]
        color: ColorBy,
        /// Required for `--color prediction`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Gd,
    Fps,
    Voxel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ColorBy {
    Component,
    Prediction,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
