//! Shared synthetic geometry.

use edgepc::geom::Point3;
use edgepc::mesh::TriMesh;
use edgepc::rng::rng_from;
use rand::Rng;

pub const PLANE_GAP: f64 = 0.05;
const SPACING: f64 = 0.01;
const NX: usize = 100;
const NY: usize = 40;

/// Two jittered 100x40 grids at 0.01 spacing, at z = 0 and z = 0.05.
/// Returns points and a plane label per point.
pub fn two_planes(seed: u64) -> (Vec<Point3>, Vec<u8>) {
    let mut rng = rng_from(seed);
    let mut pts = Vec::with_capacity(2 * NX * NY);
    let mut labels = Vec::with_capacity(2 * NX * NY);
    for (label, z) in [(0u8, 0.0), (1u8, PLANE_GAP)] {
        for i in 0..NX {
            for j in 0..NY {
                let jx = rng.random_range(-0.2..0.2) * SPACING;
                let jy = rng.random_range(-0.2..0.2) * SPACING;
                pts.push(Point3::new(i as f64 * SPACING + jx, j as f64 * SPACING + jy, z));
                labels.push(label);
            }
        }
    }
    (pts, labels)
}

/// The two planes as a mesh slightly larger than the sampled region.
pub fn two_planes_mesh() -> TriMesh {
    let (x1, y1) = (NX as f64 * SPACING, NY as f64 * SPACING);
    let mut v = Vec::new();
    let mut f = Vec::new();
    for z in [0.0, PLANE_GAP] {
        let b = v.len();
        v.extend([
            Point3::new(-0.05, -0.05, z),
            Point3::new(x1, -0.05, z),
            Point3::new(x1, y1, z),
            Point3::new(-0.05, y1, z),
        ]);
        f.push([b, b + 1, b + 2]);
        f.push([b, b + 2, b + 3]);
    }
    TriMesh::new(v, f, vec![])
}

pub const CREASE_GAP: f64 = 0.03;
const CREASE_LEN: usize = 41;

pub const PLANE_A: u8 = 0;
pub const PLANE_B: u8 = 1;
pub const EDGE: u8 = 2;

/// Two perpendicular 0.01 grids, `z = 0` (label 0) and `x = 0` (label 1),
/// each starting 0.03 from their shared crease along the y axis, plus a
/// flagged row of edge points (label 2) on the crease. Every coordinate is
/// jittered by up to `noise`.
pub fn crease(noise: f64, seed: u64) -> (Vec<Point3>, Vec<u8>) {
    let mut rng = rng_from(seed);
    let mut jitter = |p: Point3| {
        if noise > 0.0 {
            p + Point3::new(
                rng.random_range(-noise..noise),
                rng.random_range(-noise..noise),
                rng.random_range(-noise..noise),
            )
        } else {
            p
        }
    };
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    let steps = (0.4 - CREASE_GAP) / SPACING;
    for j in 0..CREASE_LEN {
        let y = j as f64 * SPACING;
        for i in 0..=steps.round() as usize {
            let u = CREASE_GAP + i as f64 * SPACING;
            pts.push(jitter(Point3::new(u, y, 0.0)));
            labels.push(PLANE_A);
            pts.push(jitter(Point3::new(0.0, y, u)));
            labels.push(PLANE_B);
        }
        pts.push(jitter(Point3::new(0.0, y, 0.0)));
        labels.push(EDGE);
    }
    (pts, labels)
}

/// Both crease planes as triangles, with the crease as an edge segment.
pub fn crease_mesh() -> TriMesh {
    let y1 = (CREASE_LEN - 1) as f64 * SPACING;
    let v = vec![
        Point3::new(0.0, 0.0, 0.0),
        Point3::new(0.5, 0.0, 0.0),
        Point3::new(0.5, y1, 0.0),
        Point3::new(0.0, y1, 0.0),
        Point3::new(0.0, 0.0, 0.5),
        Point3::new(0.0, y1, 0.5),
    ];
    let f = vec![[0, 1, 2], [0, 2, 3], [0, 3, 5], [0, 5, 4]];
    let edges = vec![edgepc::geom::Segment::new(v[0], v[3])];
    TriMesh::new(v, f, edges)
}

/// 100 points within 0.003 of the segment (0,0,0)-(1,0.5,0.25) and 5
/// outliers well away from it.
pub fn planted_line(seed: u64) -> (Vec<Point3>, Point3, Point3) {
    let mut rng = rng_from(seed);
    let (a, b) = (Point3::ZERO, Point3::new(1.0, 0.5, 0.25));
    let mut pts: Vec<Point3> = (0..100)
        .map(|i| {
            let t = i as f64 / 99.0;
            a.lerp(b, t)
                + Point3::new(
                    rng.random_range(-0.001..0.001),
                    rng.random_range(-0.001..0.001),
                    rng.random_range(-0.001..0.001),
                )
        })
        .collect();
    pts.extend([
        Point3::new(0.5, -0.5, 0.0),
        Point3::new(0.2, 0.6, 0.3),
        Point3::new(0.9, 0.1, -0.4),
        Point3::new(-0.3, 0.3, 0.5),
        Point3::new(0.6, 0.6, 0.9),
    ]);
    (pts, a, b)
}
