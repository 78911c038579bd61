//! Virtual depth scanning.
//!
//! A ring of cameras looks at a normalized mesh, each renders a range image,
//! the ranges are quantized to `n_q` levels per image, and every foreground
//! pixel is backprojected along a jittered ray. The quantization step and
//! the pixel jitter are the two noise sources of a synthetic scan.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geom::{Point3, Triangle, Vec3};
use crate::mesh::{PointCloud, TriMesh};
use crate::par;
use crate::rng::{child_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub position: Point3,
    pub look_at: Point3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub vertical_fov: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy)]
struct Basis {
    forward: Vec3,
    right: Vec3,
    up: Vec3,
}

impl Camera {
    fn basis(&self) -> Basis {
        let forward = (self.look_at - self.position)
            .normalized()
            .expect("camera position differs from look_at");
        let mut right = forward.cross(self.up);
        if right.norm_sq() < 1e-12 {
            right = forward.cross(Point3::new(1.0, 0.0, 0.0));
        }
        let right = right.normalized().expect("non-degenerate right vector");
        let up = right.cross(forward);
        Basis { forward, right, up }
    }

    /// Unit ray direction through continuous pixel coordinates `(px, py)`,
    /// with `(0, 0)` the top-left corner of the image.
    pub fn ray_dir(&self, px: f64, py: f64) -> Vec3 {
        let b = self.basis();
        self.ray_dir_with(&b, px, py)
    }

    fn ray_dir_with(&self, b: &Basis, px: f64, py: f64) -> Vec3 {
        let tan_half = (self.vertical_fov.to_radians() * 0.5).tan();
        let aspect = self.width as f64 / self.height as f64;
        let ndc_x = px / self.width as f64 * 2.0 - 1.0;
        let ndc_y = 1.0 - py / self.height as f64 * 2.0;
        let d = b.forward + b.right * (ndc_x * tan_half * aspect) + b.up * (ndc_y * tan_half);
        d.normalized().expect("finite ray")
    }

    /// Largest displacement, at range `depth`, between the ray through the
    /// center of pixel `(x, y)` and any ray through that pixel's footprint
    /// scaled by `jitter`.
    pub fn pixel_footprint(&self, x: usize, y: usize, depth: f64, jitter: f64) -> f64 {
        let b = self.basis();
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        let center = self.ray_dir_with(&b, cx, cy);
        let h = 0.5 * jitter;
        [(-h, -h), (-h, h), (h, -h), (h, h)]
            .iter()
            .map(|&(dx, dy)| (self.ray_dir_with(&b, cx + dx, cy + dy) - center).norm() * depth)
            .fold(0.0, f64::max)
    }
}

/// Per-pixel range along the primary ray; `None` marks background.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<Option<f64>>,
}

impl DepthImage {
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.depth[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_some()).count()
    }

    pub fn foreground_range(&self) -> Option<(f64, f64)> {
        self.depth.iter().flatten().fold(None, |acc, &d| match acc {
            None => Some((d, d)),
            Some((lo, hi)) => Some((f64::min(lo, d), f64::max(hi, d))),
        })
    }

    pub fn distinct_foreground_values(&self) -> usize {
        let mut v: Vec<u64> = self.depth.iter().flatten().map(|d| d.to_bits()).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub num_cameras: usize,
    /// Vertical field of view in degrees.
    pub fov: f64,
    pub ring_radius: f64,
    /// Maximum camera offset orthogonal to its view direction.
    pub perturbation: f64,
    pub width: usize,
    pub height: usize,
    /// Number of depth quantization levels per image.
    pub n_q: usize,
    /// Pixel-location jitter as a fraction of the pixel footprint (0 disables).
    pub jitter: f64,
    pub seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            num_cameras: 30,
            fov: 50.0,
            ring_radius: 2.0,
            perturbation: 0.15,
            width: 160,
            height: 120,
            n_q: 80,
            jitter: 1.0,
            seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_cameras == 0 {
            return bad("num_cameras must be positive");
        }
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return bad("fov must lie in (0, 180) degrees");
        }
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be positive");
        }
        if self.n_q == 0 {
            return bad("n_q must be at least 1");
        }
        if !(self.ring_radius > 0.0) || self.perturbation < 0.0 || self.jitter < 0.0 {
            return bad("ring_radius must be positive, perturbation and jitter non-negative");
        }
        Ok(())
    }
}

const CAMERA_STREAM: u64 = 0x100;
const BACKPROJECT_STREAM: u64 = 0x10_0000;

/// Cameras evenly spaced on a horizontal circle (y up) around the origin,
/// each offset by at most `perturbation` within its image plane and aimed at
/// the origin.
pub fn place_cameras(cfg: &ScanConfig) -> Vec<Camera> {
    let world_up = Point3::new(0.0, 1.0, 0.0);
    (0..cfg.num_cameras)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / cfg.num_cameras as f64;
            let base = Point3::new(cfg.ring_radius * theta.cos(), 0.0, cfg.ring_radius * theta.sin());
            let forward = -base / cfg.ring_radius;
            let right = forward.cross(world_up).normalized().expect("horizontal ring");
            let up = right.cross(forward);
            let mut rng = child_rng(cfg.seed, CAMERA_STREAM + i as u64);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let rho = cfg.perturbation * rng.random::<f64>().sqrt();
            let position = base + right * (rho * phi.cos()) + up * (rho * phi.sin());
            Camera {
                position,
                look_at: Point3::ZERO,
                up: world_up,
                vertical_fov: cfg.fov,
                width: cfg.width,
                height: cfg.height,
            }
        })
        .collect()
}

/// Möller–Trumbore without backface culling; returns the ray parameter.
fn ray_triangle(origin: Point3, dir: Vec3, tri: &Triangle) -> Option<f64> {
    const EPS: f64 = 1e-12;
    let e1 = tri.b - tri.a;
    let e2 = tri.c - tri.a;
    let pvec = dir.cross(e2);
    let det = e1.dot(pvec);
    if det.abs() < EPS {
        return None;
    }
    let inv = 1.0 / det;
    let tvec = origin - tri.a;
    let u = tvec.dot(pvec) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(e1);
    let v = dir.dot(qvec) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(qvec) * inv;
    (t > 1e-9).then_some(t)
}

/// Nearest-hit range image through pixel centers.
pub fn render_depth(mesh: &TriMesh, cam: &Camera) -> DepthImage {
    let tris = mesh.triangles();
    render_triangles(&tris, cam)
}

fn render_triangles(tris: &[Triangle], cam: &Camera) -> DepthImage {
    let b = cam.basis();
    let mut depth = Vec::with_capacity(cam.width * cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let dir = cam.ray_dir_with(&b, x as f64 + 0.5, y as f64 + 0.5);
            let hit = tris
                .iter()
                .filter_map(|t| ray_triangle(cam.position, dir, t))
                .min_by(f64::total_cmp);
            depth.push(hit);
        }
    }
    DepthImage {
        width: cam.width,
        height: cam.height,
        depth,
    }
}

/// Snaps foreground ranges to `n_q` evenly spaced levels spanning this
/// image's `[min, max]` foreground range. Exact midpoints go to the lower
/// level; with a single level every range maps to the minimum.
pub fn quantize_depth(img: &DepthImage, n_q: usize) -> DepthImage {
    assert!(n_q >= 1, "n_q must be at least 1");
    let Some((lo, hi)) = img.foreground_range() else {
        return img.clone();
    };
    let depth = if n_q == 1 || hi == lo {
        img.depth.iter().map(|d| d.map(|_| lo)).collect()
    } else {
        let step = (hi - lo) / (n_q - 1) as f64;
        img.depth
            .iter()
            .map(|d| {
                d.map(|d| {
                    let k = ((d - lo) / step - 0.5).ceil().clamp(0.0, (n_q - 1) as f64);
                    lo + k * step
                })
            })
            .collect()
    };
    DepthImage {
        width: img.width,
        height: img.height,
        depth,
    }
}

/// Half the spacing between quantization levels for an image's range.
pub fn half_level_spacing(img: &DepthImage, n_q: usize) -> f64 {
    match img.foreground_range() {
        Some((lo, hi)) if n_q > 1 => 0.5 * (hi - lo) / (n_q - 1) as f64,
        Some((lo, hi)) => hi - lo,
        None => 0.0,
    }
}

/// One point per foreground pixel, along a ray jittered uniformly within
/// `jitter` times the pixel footprint, at the stored range.
pub fn backproject(img: &DepthImage, cam: &Camera, jitter: f64, rng: &mut Rng) -> PointCloud {
    let b = cam.basis();
    let mut points = Vec::with_capacity(img.foreground_count());
    for y in 0..img.height {
        for x in 0..img.width {
            let Some(d) = img.get(x, y) else { continue };
            let jx = jitter * (rng.random::<f64>() - 0.5);
            let jy = jitter * (rng.random::<f64>() - 0.5);
            let dir = cam.ray_dir_with(&b, x as f64 + 0.5 + jx, y as f64 + 0.5 + jy);
            points.push(cam.position + dir * d);
        }
    }
    PointCloud::new(points)
}

/// Everything one camera contributes to a scan.
#[derive(Debug, Clone)]
pub struct CameraScan {
    pub camera: Camera,
    pub raw: DepthImage,
    pub quantized: DepthImage,
    pub cloud: PointCloud,
}

/// Scans a normalized mesh camera by camera. Each camera uses its own random
/// stream, so the result is independent of scheduling.
pub fn scan_cameras(mesh: &TriMesh, cfg: &ScanConfig) -> Result<Vec<CameraScan>> {
    cfg.validate()?;
    let radius = mesh.bounding_radius();
    if cfg.ring_radius <= radius {
        return Err(Error::Config(format!(
            "ring_radius {} must exceed the mesh bounding radius {radius}",
            cfg.ring_radius
        )));
    }
    let tris = mesh.triangles();
    let cams = place_cameras(cfg);
    Ok(par::map_range(cams.len(), |i| {
        let camera = cams[i];
        let raw = render_triangles(&tris, &camera);
        let quantized = quantize_depth(&raw, cfg.n_q);
        let mut rng = child_rng(cfg.seed, BACKPROJECT_STREAM + i as u64);
        let cloud = backproject(&quantized, &camera, cfg.jitter, &mut rng);
        CameraScan {
            camera,
            raw,
            quantized,
            cloud,
        }
    }))
}

/// Union of all per-camera backprojections, in camera order.
pub fn virtual_scan(mesh: &TriMesh, cfg: &ScanConfig) -> Result<PointCloud> {
    let scans = scan_cameras(mesh, cfg)?;
    Ok(PointCloud::concat(scans.into_iter().map(|s| s.cloud).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    fn img(values: &[Option<f64>]) -> DepthImage {
        DepthImage {
            width: values.len(),
            height: 1,
            depth: values.to_vec(),
        }
    }

    #[test]
    fn four_unperturbed_cameras_on_axes() {
        let cfg = ScanConfig {
            num_cameras: 4,
            perturbation: 0.0,
            ..Default::default()
        };
        let expected = [(2.0, 0.0, 0.0), (0.0, 0.0, 2.0), (-2.0, 0.0, 0.0), (0.0, 0.0, -2.0)];
        for (cam, (x, y, z)) in place_cameras(&cfg).iter().zip(expected) {
            assert!(cam.position.dist(Point3::new(x, y, z)) < 1e-12);
            assert_eq!(cam.look_at, Point3::ZERO);
        }
    }

    #[test]
    fn perturbed_cameras_stay_in_shell_and_repeat() {
        let cfg = ScanConfig {
            perturbation: 0.3,
            seed: 9,
            ..Default::default()
        };
        let cams = place_cameras(&cfg);
        for c in &cams {
            let r = c.position.norm();
            assert!(r >= cfg.ring_radius - cfg.perturbation && r <= cfg.ring_radius + cfg.perturbation);
        }
        assert_eq!(cams, place_cameras(&cfg));
        assert_ne!(cams, place_cameras(&ScanConfig { seed: 10, ..cfg }));
    }

    #[test]
    fn single_level_collapses_foreground() {
        let q = quantize_depth(&img(&[Some(1.0), None, Some(1.7), Some(3.0)]), 1);
        assert_eq!(q.depth, vec![Some(1.0), None, Some(1.0), Some(1.0)]);
    }

    #[test]
    fn midpoint_snaps_to_lower_level() {
        let q = quantize_depth(&img(&[Some(1.0), Some(1.5), Some(2.0)]), 2);
        assert_eq!(q.depth, vec![Some(1.0), Some(1.0), Some(2.0)]);
    }

    #[test]
    fn quantization_moves_at_most_half_a_level() {
        let values: Vec<Option<f64>> = (0..50).map(|i| Some(1.0 + (i as f64 * 0.37).sin().abs())).collect();
        let src = img(&values);
        for n_q in [2, 3, 10, 120] {
            let q = quantize_depth(&src, n_q);
            let half = half_level_spacing(&src, n_q);
            for (a, b) in src.depth.iter().zip(&q.depth) {
                assert!((a.unwrap() - b.unwrap()).abs() <= half + 1e-12);
            }
            assert!(q.distinct_foreground_values() <= n_q);
        }
    }

    #[test]
    fn empty_scene_and_looking_away_are_background() {
        let cam = place_cameras(&ScanConfig::default())[0];
        assert_eq!(render_depth(&TriMesh::default(), &cam).foreground_count(), 0);
        // Inside the cube's bounding sphere but outside the cube, facing away.
        let away = Camera {
            position: Point3::new(0.0, 0.0, 1.5),
            look_at: Point3::new(0.0, 0.0, 5.0),
            ..cam
        };
        assert!(away.position.norm() < primitives::cube().bounding_radius());
        let depth = render_depth(&primitives::cube(), &away);
        assert_eq!(depth.foreground_count(), 0);
        let mut rng = crate::rng::rng_from(0);
        assert!(backproject(&depth, &away, 1.0, &mut rng).is_empty());
    }

    #[test]
    fn ring_must_clear_mesh() {
        let cfg = ScanConfig {
            ring_radius: 1.5,
            ..Default::default()
        };
        assert!(matches!(virtual_scan(&primitives::cube(), &cfg), Err(Error::Config(_))));
    }
}
