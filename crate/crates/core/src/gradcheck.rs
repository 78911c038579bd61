//! Central finite-difference checks of the loss terms and the network.

use rand::Rng as _;

use crate::autograd::{Tape, Tensor};
use crate::error::Result;
use crate::geom::{point_segment_distance, point_triangle_distance, Point3, Segment, Triangle};
use crate::losses::{edge_term, joint_loss, regression_term, repulsion_term, surface_term, LossConfig, Term};
use crate::network::{init_params, NetworkConfig, NetworkParams, ParamVars};
use crate::patching::normalize_patch;
use crate::pipeline::patch_objective;
use crate::rng::{child_rng, Rng};

pub const FD_STEP: f64 = 1e-5;
/// Fixtures closer than this to a kink or switch of any term are redrawn.
pub const BOUNDARY_MARGIN: f64 = 1e-4;
pub const LOSS_TOLERANCE: f64 = 1e-4;
pub const NETWORK_TOLERANCE: f64 = 1e-3;

/// `|a - n| / max(1e-6, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
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

fn max_relative(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Points and regressed distances with the geometry they are scored against.
#[derive(Debug, Clone)]
pub struct LossFixture {
    pub points: Vec<Point3>,
    pub d: Vec<f64>,
    pub tris: Vec<Triangle>,
    pub segs: Vec<Segment>,
}

impl LossFixture {
    fn flat(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.points.iter().flat_map(|p| p.to_array()).collect();
        x.extend_from_slice(&self.d);
        x
    }

    fn unflat(&self, x: &[f64]) -> (Vec<Point3>, Vec<f64>) {
        let n = self.points.len();
        let pts = x[..3 * n].chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect();
        (pts, x[3 * n..].to_vec())
    }
}

fn term_flat(t: &Term) -> Vec<f64> {
    let mut g: Vec<f64> = t.d_points.iter().flat_map(|p| p.to_array()).collect();
    g.extend_from_slice(&t.d_dist);
    g
}

fn random_point(rng: &mut Rng, half: f64) -> Point3 {
    Point3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

/// Smallest and second smallest of `values`.
fn two_smallest(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::INFINITY), |(a, b), v| {
        if v < a {
            (v, a)
        } else {
            (a, b.min(v))
        }
    })
}

/// True when no input lies within `margin` of a point where some term is
/// not differentiable.
pub fn in_general_position(f: &LossFixture, cfg: &LossConfig, margin: f64) -> bool {
    let near = |x: f64, at: f64| (x - at).abs() < margin;
    if f.d.iter().any(|&d| near(d, cfg.delta_d) || near(d, 0.0) || near(d, cfg.b)) {
        return false;
    }
    for (i, &p) in f.points.iter().enumerate() {
        let (s0, s1) = two_smallest(f.tris.iter().map(|t| point_triangle_distance(p, t).distance));
        if s1 - s0 < margin {
            return false;
        }
        let (e0, e1) = two_smallest(f.segs.iter().map(|s| point_segment_distance(p, s).distance));
        if e1 - e0 < margin || near(e0, cfg.b) || e0 < margin {
            return false;
        }
        let mut r: Vec<f64> = f
            .points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| q.dist(p))
            .collect();
        r.sort_by(f64::total_cmp);
        if r[..cfg.k].iter().any(|&x| near(x, cfg.h)) {
            return false;
        }
        if r.len() > cfg.k && r[cfg.k - 1] < cfg.h + margin && r[cfg.k] - r[cfg.k - 1] < margin {
            return false;
        }
    }
    true
}

/// 20 points, half clustered tightly enough for repulsion, against two
/// random triangles and two random segments.
pub fn random_loss_fixture(rng: &mut Rng) -> LossFixture {
    let center = random_point(rng, 0.3);
    let mut points: Vec<Point3> = (0..10).map(|_| random_point(rng, 0.5)).collect();
    points.extend((0..10).map(|_| center + random_point(rng, 0.025)));
    let d = (0..points.len()).map(|_| rng.random_range(-0.1..0.7)).collect();
    let tris = (0..2)
        .map(|_| Triangle::new(random_point(rng, 1.0), random_point(rng, 1.0), random_point(rng, 1.0)))
        .collect();
    let segs = (0..2).map(|_| Segment::new(random_point(rng, 1.0), random_point(rng, 1.0))).collect();
    LossFixture { points, d, tris, segs }
}

/// Worst relative error per term over a set of fixtures.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossErrors {
    pub surface: f64,
    pub edge: f64,
    pub repulsion: f64,
    pub regression: f64,
    pub joint: f64,
    pub fixtures: usize,
    /// Fixtures where the edge and repulsion terms were nonzero.
    pub edge_active: usize,
    pub repulsion_active: usize,
}

impl LossErrors {
    pub fn max(&self) -> f64 {
        [self.surface, self.edge, self.repulsion, self.regression, self.joint]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn tape_joint(pts: &[Point3], d: &[f64], f: &LossFixture, cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let pv = tape.param(Tensor {
        rows: pts.len(),
        cols: 3,
        data: pts.iter().flat_map(|p| p.to_array()).collect(),
    });
    let dv = tape.param(Tensor {
        rows: d.len(),
        cols: 1,
        data: d.to_vec(),
    });
    let (root, _) = joint_loss(&mut tape, pv, dv, &f.tris, &f.segs, cfg)?;
    let value = tape.value(root).item();
    let mut g = tape.backward(root)?;
    let mut flat = g.take(pv).expect("points reached").data;
    flat.extend(g.take(dv).expect("distances reached").data);
    Ok((value, flat))
}

/// Checks each loss term and the joint loss through the tape on `count`
/// fixtures in general position.
pub fn check_losses(seed: u64, count: usize, cfg: &LossConfig) -> Result<LossErrors> {
    let mut rng = child_rng(seed, 0);
    let mut out = LossErrors::default();
    while out.fixtures < count {
        let f = random_loss_fixture(&mut rng);
        if !in_general_position(&f, cfg, BOUNDARY_MARGIN) {
            continue;
        }
        let x = f.flat();
        let (pts, d) = (&f.points, &f.d);

        let analytic = term_flat(&surface_term(pts, &f.tris)?);
        let numeric = central_difference(
            &mut |x| {
                let (p, _) = f.unflat(x);
                surface_term(&p, &f.tris).expect("mesh").value
            },
            &x,
            FD_STEP,
        );
        out.surface = out.surface.max(max_relative(&analytic, &numeric));

        let edge = edge_term(pts, d, &f.segs, cfg.delta_d).0;
        out.edge_active += usize::from(edge.value > 0.0);
        let analytic = term_flat(&edge);
        let numeric = central_difference(
            &mut |x| {
                let (p, d) = f.unflat(x);
                edge_term(&p, &d, &f.segs, cfg.delta_d).0.value
            },
            &x,
            FD_STEP,
        );
        out.edge = out.edge.max(max_relative(&analytic, &numeric));

        let repulsion = repulsion_term(pts, cfg.k, cfg.h)?;
        out.repulsion_active += usize::from(repulsion.value > 0.0);
        let analytic = term_flat(&repulsion);
        let numeric = central_difference(
            &mut |x| {
                let (p, _) = f.unflat(x);
                repulsion_term(&p, cfg.k, cfg.h).expect("enough points").value
            },
            &x,
            FD_STEP,
        );
        out.repulsion = out.repulsion.max(max_relative(&analytic, &numeric));

        let analytic = term_flat(&regression_term(pts, d, &f.segs, cfg.b));
        let numeric = central_difference(
            &mut |x| {
                let (p, d) = f.unflat(x);
                regression_term(&p, &d, &f.segs, cfg.b).value
            },
            &x,
            FD_STEP,
        );
        out.regression = out.regression.max(max_relative(&analytic, &numeric));

        let (_, analytic) = tape_joint(pts, d, &f, cfg)?;
        let numeric = central_difference(
            &mut |x| {
                let (p, d) = f.unflat(x);
                tape_joint(&p, &d, &f, cfg).expect("joint loss").0
            },
            &x,
            FD_STEP,
        );
        out.joint = out.joint.max(max_relative(&analytic, &numeric));
        out.fixtures += 1;
    }
    Ok(out)
}

/// The small network used for parameter checks: 64 input points, r = 2.
pub fn tiny_network() -> NetworkConfig {
    NetworkConfig {
        n_hat: 64,
        r: 2,
        ..Default::default()
    }
}

/// A normalized roof: two planes meeting at a ridge, with its ground truth.
pub fn roof_patch(n: usize, rng: &mut Rng) -> (Vec<Point3>, Vec<Triangle>, Vec<Segment>) {
    let z = |x: f64| -0.6 * x.abs();
    let world: Vec<Point3> = (0..n)
        .map(|_| {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            Point3::new(x, y, z(x))
        })
        .collect();
    let norm = normalize_patch(&world);
    let t = norm.transform;
    let v = |x: f64, y: f64| t.apply_inverse(Point3::new(x, y, z(x)));
    let tris = vec![
        Triangle::new(v(-1.0, -1.0), v(0.0, -1.0), v(0.0, 1.0)),
        Triangle::new(v(-1.0, -1.0), v(0.0, 1.0), v(-1.0, 1.0)),
        Triangle::new(v(0.0, -1.0), v(1.0, -1.0), v(1.0, 1.0)),
        Triangle::new(v(0.0, -1.0), v(1.0, 1.0), v(0.0, 1.0)),
    ];
    let segs = vec![Segment::new(v(0.0, -1.0), v(0.0, 1.0))];
    (norm.points, tris, segs)
}

/// Parameters with small random biases so no pre-activation sits on a relu
/// kink.
pub fn general_position_params(config: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    let mut p = init_params(config, seed)?;
    let mut rng = child_rng(seed, 1);
    for t in p.tensors_mut() {
        if t.rows == 1 {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCheck {
    /// `(parameter name, flat index, analytic, numeric)`.
    pub samples: Vec<(String, usize, f64, f64)>,
    pub max_error: f64,
}

/// Compares backpropagated parameter gradients of the joint loss with
/// central differences on `samples` randomly chosen scalars.
pub fn check_network(seed: u64, samples: usize, loss: &LossConfig) -> Result<NetworkCheck> {
    let config = tiny_network();
    let params = general_position_params(&config, seed)?;
    let (points, tris, segs) = roof_patch(config.n_hat, &mut child_rng(seed, 2));
    let objective = |p: &NetworkParams, trainable: bool| -> Result<(Tape, ParamVars, crate::autograd::Var)> {
        let mut tape = Tape::new();
        let pv = ParamVars::record(&mut tape, p, trainable);
        let (root, _) = patch_objective(&mut tape, &pv, &points, &tris, &segs, &config, loss)?;
        Ok((tape, pv, root))
    };
    let (mut tape, pv, root) = objective(&params, true)?;
    let mut g = tape.backward(root)?;
    let grads = pv.gradients(&mut g);

    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut rng = child_rng(seed, 3);
    let mut out = NetworkCheck {
        samples: Vec::with_capacity(samples),
        max_error: 0.0,
    };
    for _ in 0..samples {
        let t = rng.random_range(0..names.len());
        let k = rng.random_range(0..grads[t].len());
        let eval = |delta: f64| -> Result<f64> {
            let mut p = params.clone();
            p.tensors_mut()[t].data[k] += delta;
            let (tape, _, root) = objective(&p, false)?;
            Ok(tape.value(root).item())
        };
        let numeric = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
        let analytic = grads[t].data[k];
        out.max_error = out.max_error.max(relative_error(analytic, numeric));
        out.samples.push((names[t].clone(), k, analytic, numeric));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub losses: LossErrors,
    pub network: NetworkCheck,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.losses.max() < LOSS_TOLERANCE && self.network.max_error < NETWORK_TOLERANCE
    }

    pub fn max_error(&self) -> f64 {
        self.losses.max().max(self.network.max_error)
    }
}

/// 100 loss fixtures and 20 network parameters.
pub fn run_gradcheck(seed: u64, loss: &LossConfig) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        losses: check_losses(seed, 100, loss)?,
        network: check_network(seed, 20, loss)?,
    })
}
