//! Independent brute-force references. Nothing here calls the library's
//! distance kernels.

use edgepc::geom::{Point3, Segment, Triangle};

const GRID: usize = 400;

/// Minimum distance over a 400x400 barycentric sample grid, then once more
/// over a 400x400 grid spanning the neighbouring cells of the best sample.
pub fn triangle_distance_by_sampling(p: Point3, tri: &Triangle) -> f64 {
    let ab = tri.b - tri.a;
    let ac = tri.c - tri.a;
    let eval = |u: f64, v: f64| (tri.a + ab * u + ac * v).dist_sq(p);
    let step = 1.0 / GRID as f64;
    let (mut best, mut bu, mut bv) = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=GRID {
        for j in 0..=(GRID - i) {
            let (u, v) = (i as f64 * step, j as f64 * step);
            let d = eval(u, v);
            if d < best {
                best = d;
                bu = u;
                bv = v;
            }
        }
    }
    let fine = 2.0 * step / GRID as f64;
    for i in 0..=GRID {
        for j in 0..=GRID {
            let u = bu - step + i as f64 * fine;
            let v = bv - step + j as f64 * fine;
            if u < 0.0 || v < 0.0 || u + v > 1.0 {
                continue;
            }
            best = best.min(eval(u, v));
        }
    }
    best.sqrt()
}

pub fn segment_distance_by_sampling(p: Point3, seg: &Segment) -> f64 {
    const N: usize = 100_000;
    (0..=N)
        .map(|i| seg.p0.lerp(seg.p1, i as f64 / N as f64).dist_sq(p))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let fp = f(&x);
            x[i] = orig - h;
            let fm = f(&x);
            x[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
