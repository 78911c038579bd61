//! `key=value` configuration text.
//!
//! Lines are `section.key = value`; `#` starts a comment. A bare `seed` key
//! sets every seed at once. Lists are comma separated; the level widths are
//! three comma-separated widths per level, levels separated by `;`.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::network::NetworkConfig;
use crate::patching::PatchConfig;
use crate::pipeline::{ConsolidateConfig, TrainConfig};
use crate::refine::RefineConfig;
use crate::scanner::ScanConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub bins: usize,
    pub range: (f64, f64),
    pub n_q: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bins: 50,
            range: (0.0, 0.05),
            n_q: vec![120, 80, 50],
        }
    }
}

/// Every tunable constant of the pipeline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Settings {
    pub scan: ScanConfig,
    pub patch: PatchConfig,
    /// Also carries the network, loss, optimizer and augmentation settings.
    pub train: TrainConfig,
    pub infer: ConsolidateConfig,
    pub refine: RefineConfig,
    pub eval: EvalConfig,
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    v.split(',').map(|s| value(key, s)).collect()
}

fn array<T: FromStr + Copy, const N: usize>(key: &str, v: &str) -> Result<[T; N]>
where
    T::Err: Display,
{
    let items = list::<T>(key, v)?;
    items
        .try_into()
        .map_err(|got: Vec<T>| Error::Config(format!("{key}: expected {N} values, got {}", got.len())))
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Non-empty, comment-stripped `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn set_network(cfg: &mut NetworkConfig, key: &str, v: &str) -> Result<bool> {
    match key {
        "n_hat" => cfg.n_hat = value(key, v)?,
        "r" => cfg.r = value(key, v)?,
        "radii" => cfg.radii = array(key, v)?,
        "group_cap" => cfg.group_cap = value(key, v)?,
        "level_widths" => {
            let levels: Vec<[usize; 3]> = v.split(';').map(|l| array(key, l)).collect::<Result<_>>()?;
            cfg.level_widths = levels
                .try_into()
                .map_err(|_| Error::Config(format!("{key}: expected 4 levels")))?;
        }
        "restore_width" => cfg.restore_width = value(key, v)?,
        "expand_widths" => cfg.expand_widths = array(key, v)?,
        "dist_hidden" => cfg.dist_hidden = value(key, v)?,
        "coord_hidden" => cfg.coord_hidden = value(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn network_to_text(cfg: &NetworkConfig) -> String {
    let levels: Vec<String> = cfg.level_widths.iter().map(|l| join(l)).collect();
    format!(
        "n_hat={}\nr={}\nradii={}\ngroup_cap={}\nlevel_widths={}\nrestore_width={}\nexpand_widths={}\ndist_hidden={}\ncoord_hidden={}\n",
        cfg.n_hat,
        cfg.r,
        join(&cfg.radii),
        cfg.group_cap,
        levels.join(";"),
        cfg.restore_width,
        join(&cfg.expand_widths),
        cfg.dist_hidden,
        cfg.coord_hidden,
    )
}

/// Inverse of [`network_to_text`]; absent keys keep their defaults.
pub fn network_from_text(text: &str) -> Result<NetworkConfig> {
    let mut cfg = NetworkConfig::default();
    for (k, v) in parse_pairs(text)? {
        if !set_network(&mut cfg, &k, &v)? {
            return Err(Error::Config(format!("unknown network key {k:?}")));
        }
    }
    Ok(cfg)
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self> {
        let mut s = Self::default();
        s.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(s)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.scan.seed = seed;
        self.train.seed = seed;
        self.infer.seed = seed;
        self.refine.seed = seed;
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let unknown = || Err(Error::Config(format!("unknown key {key:?}")));
        if key == "seed" {
            self.set_seed(value(key, v)?);
            return Ok(());
        }
        let Some((section, name)) = key.split_once('.') else { return unknown() };
        match section {
            "scan" => {
                let c = &mut self.scan;
                match name {
                    "num_cameras" => c.num_cameras = value(key, v)?,
                    "fov" => c.fov = value(key, v)?,
                    "ring_radius" => c.ring_radius = value(key, v)?,
                    "perturbation" => c.perturbation = value(key, v)?,
                    "width" => c.width = value(key, v)?,
                    "height" => c.height = value(key, v)?,
                    "n_q" => c.n_q = value(key, v)?,
                    "jitter" => c.jitter = value(key, v)?,
                    "seed" => c.seed = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "patch" => {
                let c = &mut self.patch;
                match name {
                    "k" => c.k = value(key, v)?,
                    "dijkstra_size" => c.dijkstra_size = value(key, v)?,
                    "sample_size" => c.sample_size = value(key, v)?,
                    "margin" => c.margin = value(key, v)?,
                    "centroids_per_cloud" => c.centroids_per_cloud = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "network" => {
                if !set_network(&mut self.train.network, name, v)? {
                    return unknown();
                }
            }
            "loss" => {
                let c: &mut LossConfig = &mut self.train.loss;
                match name {
                    "alpha" => c.alpha = value(key, v)?,
                    "beta" => c.beta = value(key, v)?,
                    "h" => c.h = value(key, v)?,
                    "k" => c.k = value(key, v)?,
                    "b" => c.b = value(key, v)?,
                    "delta_d" => c.delta_d = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "train" => {
                let c = &mut self.train;
                match name {
                    "epochs" => c.epochs = value(key, v)?,
                    "batch_size" => c.batch_size = value(key, v)?,
                    "learning_rate" => c.learning_rate = value(key, v)?,
                    "seed" => c.seed = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "adam" => {
                let c = &mut self.train.adam;
                match name {
                    "beta1" => c.beta1 = value(key, v)?,
                    "beta2" => c.beta2 = value(key, v)?,
                    "eps" => c.eps = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "augment" => {
                let c = &mut self.train.augment;
                match name {
                    "rotate" => c.rotate = value(key, v)?,
                    "translate" => c.translate = value(key, v)?,
                    "scale" => c.scale = value(key, v)?,
                    "noise" => c.noise = value(key, v)?,
                    "permute" => c.permute = value(key, v)?,
                    "max_translation" => c.max_translation = value(key, v)?,
                    "scale_range" => {
                        let [lo, hi] = array(key, v)?;
                        c.scale_range = (lo, hi);
                    }
                    "noise_fraction" => c.noise_fraction = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "infer" => {
                let c = &mut self.infer;
                match name {
                    "delta_d" => c.delta_d = value(key, v)?,
                    "coverage" => c.coverage = value(key, v)?,
                    "k" => c.k = value(key, v)?,
                    "seed" => c.seed = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "refine" => {
                let c = &mut self.refine;
                match name {
                    "inlier_tol" => c.inlier_tol = value(key, v)?,
                    "min_inliers" => c.min_inliers = value(key, v)?,
                    "iterations" => c.iterations = value(key, v)?,
                    "k" => c.k = value(key, v)?,
                    "group_size" => c.group_size = value(key, v)?,
                    "rounds" => c.rounds = value(key, v)?,
                    "min_dist" => c.min_dist = value(key, v)?,
                    "seed" => c.seed = value(key, v)?,
                    _ => return unknown(),
                }
            }
            "eval" => {
                let c = &mut self.eval;
                match name {
                    "bins" => c.bins = value(key, v)?,
                    "range" => {
                        let [lo, hi] = array(key, v)?;
                        c.range = (lo, hi);
                    }
                    "n_q" => c.n_q = list(key, v)?,
                    _ => return unknown(),
                }
            }
            _ => return unknown(),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_text_round_trip() {
        let mut cfg = NetworkConfig::default();
        cfg.n_hat = 64;
        cfg.radii = [0.15, 0.25, 0.35, 0.45];
        cfg.level_widths[2] = [1, 2, 3];
        assert_eq!(network_from_text(&network_to_text(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn settings_keys() {
        let mut s = Settings::default();
        s.apply_text("# comment\nscan.n_q = 50\nseed=9 # trailing\neval.range=0,0.1\nnetwork.r=2\n")
            .unwrap();
        assert_eq!(s.scan.n_q, 50);
        assert_eq!((s.train.seed, s.refine.seed, s.scan.seed), (9, 9, 9));
        assert_eq!(s.eval.range, (0.0, 0.1));
        assert_eq!(s.train.network.r, 2);
        assert!(s.apply_text("scan.bogus=1").is_err());
        assert!(s.apply_text("scan.n_q=abc").is_err());
        assert!(s.apply_text("no equals sign").is_err());
    }
}
