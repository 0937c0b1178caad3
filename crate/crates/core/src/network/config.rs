use std::fmt;
use std::str::FromStr;

use crate::config::{format_list, KvConfig};
use crate::error::{Error, Result};

/// Transition between encoder stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Partition-guided fusion with the stage size caps.
    Geometric,
    /// Farthest point sampling at `fps_ratio` with nearest-sample pooling.
    Fps,
    /// Scene grid with cell `cap / √3`.
    Voxel,
}

impl FromStr for Sampling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" => Ok(Sampling::Geometric),
            "fps" => Ok(Sampling::Fps),
            "voxel" => Ok(Sampling::Voxel),
            _ => Err(Error::invalid(format!("sampling must be gd, fps or voxel, got `{s}`"))),
        }
    }
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sampling::Geometric => "gd",
            Sampling::Fps => "fps",
            Sampling::Voxel => "voxel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub classes: usize,
    pub stage_dims: Vec<usize>,
    pub depths: Vec<usize>,
    pub k_local: usize,
    pub k_global: usize,
    /// Neighbours in the superpoint self-attention (clipped to the count).
    pub k_superpoint: usize,
    /// GD size cap after each stage but the last (m).
    pub gd_caps: Vec<f64>,
    pub sampling: Sampling,
    pub fps_ratio: f64,
    /// Largest partition diameter before re-splitting (m).
    pub sp_dia_cap: f64,
    /// Partition regularization strength.
    pub lambda: f64,
    pub k_geo: usize,
    pub k_adj: usize,
    /// Superpoint loss weight.
    pub beta: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: u64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::toy()
    }
}

const KEYS: &[&str] = &[
    "preset",
    "classes",
    "stage_dims",
    "depths",
    "k_local",
    "k_global",
    "k_superpoint",
    "gd_caps",
    "sampling",
    "fps_ratio",
    "sp_dia_cap",
    "lambda",
    "k_geo",
    "k_adj",
    "beta",
    "lr",
    "weight_decay",
    "epochs",
    "batch",
    "seed",
];

impl NetworkConfig {
    /// Desk-scale default.
    pub fn toy() -> Self {
        NetworkConfig {
            classes: 6,
            stage_dims: vec![16, 32, 64],
            depths: vec![1, 1, 1],
            k_local: 8,
            k_global: 1,
            k_superpoint: 8,
            gd_caps: vec![1.0, 2.0],
            sampling: Sampling::Geometric,
            fps_ratio: 0.25,
            sp_dia_cap: 2.0,
            lambda: 0.05,
            k_geo: 10,
            k_adj: 10,
            beta: 0.1,
            lr: 0.004,
            weight_decay: 0.02,
            epochs: 100,
            batch: 8,
            seed: 0,
        }
    }

    /// Full-size indoor configuration with the S3DIS-style caps.
    pub fn s3dis() -> Self {
        NetworkConfig {
            classes: 13,
            stage_dims: vec![32, 64, 128, 256, 512],
            depths: vec![1, 2, 2, 6, 2],
            k_local: 16,
            k_global: 8,
            gd_caps: vec![0.10, 0.20, 0.40, 0.80],
            sp_dia_cap: 1.0,
            lambda: 3.0,
            k_geo: 20,
            batch: 2,
            epochs: 200,
            ..NetworkConfig::toy()
        }
    }

    /// Full-size configuration with the ScanNet-style caps.
    pub fn scannet() -> Self {
        NetworkConfig {
            classes: 20,
            gd_caps: vec![0.25, 0.50, 0.75, 1.00],
            lambda: 2.0,
            ..NetworkConfig::s3dis()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "s3dis" => Ok(Self::s3dis()),
            "scannet" => Ok(Self::scannet()),
            _ => Err(Error::invalid(format!("unknown preset `{name}`"))),
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stage_dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.stage_dims.len();
        if s == 0 || self.depths.len() != s || self.gd_caps.len() + 1 != s {
            return Err(Error::invalid(
                "stage_dims and depths need one entry per stage and gd_caps one fewer",
            ));
        }
        if self.stage_dims.contains(&0) || self.classes < 2 {
            return Err(Error::invalid("dims must be positive and classes at least 2"));
        }
        if self.k_local == 0 || self.k_superpoint == 0 || self.k_geo < 3 || self.k_adj == 0 {
            return Err(Error::invalid("k_local, k_superpoint, k_adj ≥ 1 and k_geo ≥ 3 are required"));
        }
        if self.gd_caps.iter().any(|&a| !(a > 0.0 && a.is_finite())) || !(self.sp_dia_cap > 0.0) {
            return Err(Error::invalid("size caps must be positive"));
        }
        if !(self.fps_ratio > 0.0 && self.fps_ratio <= 1.0) {
            return Err(Error::invalid("fps_ratio must lie in (0, 1]"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be non-negative"));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::arg(format!("beta must be non-negative, got {}", self.beta)));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) || self.batch == 0 {
            return Err(Error::invalid("lr must be positive, weight_decay non-negative, batch ≥ 1"));
        }
        Ok(())
    }

    /// Starts from `preset` (default toy) and applies every other key.
    /// Unknown keys are rejected.
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        cfg.reject_unknown(|k| KEYS.contains(&k))?;
        let mut c = match cfg.get("preset") {
            Some(p) => Self::preset(p)?,
            None => Self::toy(),
        };
        macro_rules! scalar {
            ($($field:ident),*) => {$(
                if let Some(v) = cfg.parse_value(stringify!($field))? {
                    c.$field = v;
                }
            )*};
        }
        macro_rules! list {
            ($($field:ident),*) => {$(
                if let Some(v) = cfg.parse_list(stringify!($field))? {
                    c.$field = v;
                }
            )*};
        }
        scalar!(
            classes, k_local, k_global, k_superpoint, sampling, fps_ratio, sp_dia_cap, lambda, k_geo, k_adj, beta,
            lr, weight_decay, epochs, batch, seed
        );
        list!(stage_dims, depths, gd_caps);
        c.validate()?;
        Ok(c)
    }

    pub fn to_config(&self) -> KvConfig {
        let mut k = KvConfig::default();
        k.insert("classes", self.classes);
        k.insert("stage_dims", format_list(&self.stage_dims));
        k.insert("depths", format_list(&self.depths));
        k.insert("k_local", self.k_local);
        k.insert("k_global", self.k_global);
        k.insert("k_superpoint", self.k_superpoint);
        k.insert("gd_caps", format_list(&self.gd_caps));
        k.insert("sampling", self.sampling);
        k.insert("fps_ratio", self.fps_ratio);
        k.insert("sp_dia_cap", self.sp_dia_cap);
        k.insert("lambda", self.lambda);
        k.insert("k_geo", self.k_geo);
        k.insert("k_adj", self.k_adj);
        k.insert("beta", self.beta);
        k.insert("lr", self.lr);
        k.insert("weight_decay", self.weight_decay);
        k.insert("epochs", self.epochs);
        k.insert("batch", self.batch);
        k.insert("seed", self.seed);
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in ["toy", "s3dis", "scannet"] {
            let c = NetworkConfig::preset(p).unwrap();
            c.validate().unwrap();
            assert_eq!(NetworkConfig::from_config(&c.to_config()).unwrap(), c);
        }
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let cfg = KvConfig::parse("preset = s3dis\nk_global = 0\nsampling = fps\n").unwrap();
        let c = NetworkConfig::from_config(&cfg).unwrap();
        assert_eq!((c.k_global, c.sampling, c.stage_dims.len()), (0, Sampling::Fps, 5));
        assert!(NetworkConfig::from_config(&KvConfig::parse("dropout = 0.5").unwrap()).is_err());
        assert!(NetworkConfig::from_config(&KvConfig::parse("depths = 1, 1").unwrap()).is_err());
    }
}
