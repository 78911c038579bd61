//! On-the-fly patch augmentation.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::geom::{bounds, Point3};
use crate::patching::Patch;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub rotate: bool,
    pub translate: bool,
    pub scale: bool,
    pub noise: bool,
    pub permute: bool,
    /// Per-component translation bound.
    pub max_translation: f64,
    pub scale_range: (f64, f64),
    /// Noise sigma as a fraction of the bounding-box diagonal.
    pub noise_fraction: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            rotate: true,
            translate: true,
            scale: true,
            noise: true,
            permute: true,
            max_translation: 0.2,
            scale_range: (0.8, 1.2),
            noise_fraction: 0.005,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            rotate: false,
            translate: false,
            scale: false,
            noise: false,
            permute: false,
            ..Self::default()
        }
    }
}

/// Uniform random rotation as a row-major 3x3 matrix (Shoemake's
/// quaternion method).
pub fn random_rotation(rng: &mut Rng) -> [[f64; 3]; 3] {
    use std::f64::consts::TAU;
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (TAU * u2).sin(), a * (TAU * u2).cos(), b * (TAU * u3).sin(), b * (TAU * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn rotate(m: &[[f64; 3]; 3], p: Point3) -> Point3 {
    let v = p.to_array();
    let row = |r: &[f64; 3]| r[0] * v[0] + r[1] * v[1] + r[2] * v[2];
    Point3::new(row(&m[0]), row(&m[1]), row(&m[2]))
}

/// Rotation, translation and scale hit points and ground truth alike; noise
/// and permutation touch points only.
pub fn augment_patch(patch: &Patch, cfg: &AugmentConfig, rng: &mut Rng) -> Patch {
    let mut out = patch.clone();
    let rot = cfg.rotate.then(|| random_rotation(rng));
    let shift = if cfg.translate {
        let t = cfg.max_translation;
        Point3::new(rng.random_range(-t..=t), rng.random_range(-t..=t), rng.random_range(-t..=t))
    } else {
        Point3::ZERO
    };
    let s = if cfg.scale {
        rng.random_range(cfg.scale_range.0..=cfg.scale_range.1)
    } else {
        1.0
    };
    let apply = |p: Point3| {
        let p = rot.as_ref().map_or(p, |m| rotate(m, p));
        (p + shift) * s
    };
    out.points = out.points.iter().map(|&p| apply(p)).collect();
    out.gt_triangles = out.gt_triangles.iter().map(|t| t.map(apply)).collect();
    out.gt_segments = out.gt_segments.iter().map(|g| g.map(apply)).collect();
    if cfg.noise {
        if let Some((lo, hi)) = bounds(&out.points) {
            let sigma = cfg.noise_fraction * lo.dist(hi);
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("positive sigma");
                for p in &mut out.points {
                    *p += Point3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
                }
            }
        }
    }
    if cfg.permute {
        let mut order: Vec<usize> = (0..out.points.len()).collect();
        order.shuffle(rng);
        out.points = order.iter().map(|&i| out.points[i]).collect();
        if out.source_indices.len() == order.len() {
            out.source_indices = order.iter().map(|&i| out.source_indices[i]).collect();
        }
    }
    out
}
