//! Training objective: surface, edge, repulsion and truncated regression
//! terms, recorded on the tape as custom nodes with analytic gradients.

use crate::autograd::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::geom::{closest_on_edges, closest_on_mesh, Point3, Segment, Triangle};
use crate::par;
use crate::spatial::KdTree;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Edge term weight.
    pub alpha: f64,
    /// Regression term weight.
    pub beta: f64,
    /// Repulsion radius.
    pub h: f64,
    /// Repulsion neighbors per point.
    pub k: usize,
    /// Regression clamp bound.
    pub b: f64,
    /// Edge selection threshold on the regressed distance.
    pub delta_d: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.01,
            h: 0.03,
            k: 4,
            b: 0.5,
            delta_d: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub surface: f64,
    pub edge: f64,
    pub repulsion: f64,
    pub regression: f64,
    pub joint: f64,
    pub edge_point_count: usize,
}

impl LossBreakdown {
    pub fn recombine(&self, cfg: &LossConfig) -> f64 {
        self.surface + self.repulsion + cfg.alpha * self.edge + cfg.beta * self.regression
    }
}

/// A loss value with its gradient w.r.t. every point and every regressed
/// distance (zero where the term does not depend on them).
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub value: f64,
    pub d_points: Vec<Point3>,
    pub d_dist: Vec<f64>,
}

impl Term {
    fn zero(n: usize) -> Self {
        Self {
            value: 0.0,
            d_points: vec![Point3::ZERO; n],
            d_dist: vec![0.0; n],
        }
    }
}

/// `max(0, min(x, b))`.
pub fn truncate(x: f64, b: f64) -> f64 {
    x.min(b).max(0.0)
}

/// `max(0, h^2 - r^2)`.
pub fn eta(r: f64, h: f64) -> f64 {
    (h * h - r * r).max(0.0)
}

/// Mean squared distance to the surface.
pub fn surface_term(points: &[Point3], tris: &[Triangle]) -> Result<Term> {
    if tris.is_empty() {
        return Err(Error::NoSurface);
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("surface loss points"));
    }
    let n = points.len() as f64;
    let hits = par::map(points, |&p| closest_on_mesh(p, tris).expect("non-empty mesh").0);
    Ok(Term {
        value: hits.iter().map(|c| c.distance_sq).sum::<f64>() / n,
        d_points: hits.iter().zip(points).map(|(c, &p)| c.grad_sq(p) / n).collect(),
        d_dist: vec![0.0; points.len()],
    })
}

/// Mean squared edge distance over points with `d < delta`; zero if none
/// qualify or there are no segments. Also returns the selected count.
pub fn edge_term(points: &[Point3], d: &[f64], segs: &[Segment], delta: f64) -> (Term, usize) {
    let selected: Vec<usize> = (0..points.len()).filter(|&i| d[i] < delta).collect();
    let mut term = Term::zero(points.len());
    if selected.is_empty() || segs.is_empty() {
        return (term, selected.len());
    }
    let m = selected.len() as f64;
    let hits = par::map(&selected, |&i| closest_on_edges(points[i], segs).expect("non-empty edges").0);
    for (&i, c) in selected.iter().zip(&hits) {
        term.value += c.distance_sq / m;
        term.d_points[i] = c.grad_sq(points[i]) / m;
    }
    (term, selected.len())
}

/// `1/(N K) sum_i sum_{j in knn(i)} eta(|x_j - x_i|)`; gradients reach both
/// ends of every active pair.
pub fn repulsion_term(points: &[Point3], k: usize, h: f64) -> Result<Term> {
    if points.len() < k + 1 {
        return Err(Error::CloudTooSmall {
            needed: k + 1,
            got: points.len(),
        });
    }
    let tree = KdTree::new(points);
    let norm = (points.len() * k) as f64;
    let nbrs = par::map_range(points.len(), |i| tree.knn(points[i], k, Some(i)));
    let mut term = Term::zero(points.len());
    for (i, list) in nbrs.iter().enumerate() {
        for n in list {
            let e = h * h - n.dist_sq;
            if e > 0.0 {
                term.value += e / norm;
                // d/dx_i of -(|x_j - x_i|^2) = 2 (x_j - x_i)
                let g = (points[n.index] - points[i]) * (2.0 / norm);
                term.d_points[i] += g;
                term.d_points[n.index] -= g;
            }
        }
    }
    Ok(term)
}

fn clamp_slope(x: f64, b: f64) -> f64 {
    if x > 0.0 && x < b {
        1.0
    } else {
        0.0
    }
}

/// `mean_i (T_b(d_E(x_i)) - T_b(d_i))^2`; with no segments the target is `b`.
pub fn regression_term(points: &[Point3], d: &[f64], segs: &[Segment], b: f64) -> Term {
    let n = points.len();
    let mut term = Term::zero(n);
    if n == 0 {
        return term;
    }
    let inv = 1.0 / n as f64;
    let hits: Vec<Option<crate::geom::ClosestPoint>> = if segs.is_empty() {
        vec![None; n]
    } else {
        par::map(points, |&p| Some(closest_on_edges(p, segs).expect("non-empty edges").0))
    };
    for i in 0..n {
        let (target, d_target) = match &hits[i] {
            None => (b, Point3::ZERO),
            Some(c) => {
                let t = truncate(c.distance, b);
                let g = if c.distance > 0.0 {
                    (points[i] - c.closest) * (clamp_slope(c.distance, b) / c.distance)
                } else {
                    Point3::ZERO
                };
                (t, g)
            }
        };
        let diff = target - truncate(d[i], b);
        term.value += diff * diff * inv;
        term.d_points[i] = d_target * (2.0 * diff * inv);
        term.d_dist[i] = -2.0 * diff * inv * clamp_slope(d[i], b);
    }
    term
}

/// Full breakdown without a tape.
pub fn joint_terms(
    points: &[Point3],
    d: &[f64],
    tris: &[Triangle],
    segs: &[Segment],
    cfg: &LossConfig,
) -> Result<(LossBreakdown, [Term; 4])> {
    if points.len() != d.len() {
        return Err(Error::ShapeMismatch {
            op: "joint loss",
            left: vec![points.len(), 3],
            right: vec![d.len(), 1],
        });
    }
    let surface = surface_term(points, tris)?;
    let (edge, count) = edge_term(points, d, segs, cfg.delta_d);
    let repulsion = repulsion_term(points, cfg.k, cfg.h)?;
    let regression = regression_term(points, d, segs, cfg.b);
    let mut bd = LossBreakdown {
        surface: surface.value,
        edge: edge.value,
        repulsion: repulsion.value,
        regression: regression.value,
        joint: 0.0,
        edge_point_count: count,
    };
    bd.joint = bd.recombine(cfg);
    Ok((bd, [surface, edge, repulsion, regression]))
}

fn to_points(t: &Tensor) -> Vec<Point3> {
    t.data.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect()
}

fn points_grad(d: &[Point3], scale: f64) -> Tensor {
    Tensor {
        rows: d.len(),
        cols: 3,
        data: d.iter().flat_map(|p| (*p * scale).to_array()).collect(),
    }
}

/// Records a term as a scalar node over `points` (`Ñ x 3`) and `dist`
/// (`Ñ x 1`).
fn record(tape: &mut Tape, points: Var, dist: Var, term: Term) -> Var {
    let value = Tensor::scalar(term.value);
    tape.custom(&[points, dist], value, move |g| {
        let s = g.item();
        vec![
            points_grad(&term.d_points, s),
            Tensor {
                rows: term.d_dist.len(),
                cols: 1,
                data: term.d_dist.iter().map(|v| v * s).collect(),
            },
        ]
    })
}

/// Joint objective on the tape. `points` is `Ñ x 3`, `dist` is `Ñ x 1`.
pub fn joint_loss(
    tape: &mut Tape,
    points: Var,
    dist: Var,
    tris: &[Triangle],
    segs: &[Segment],
    cfg: &LossConfig,
) -> Result<(Var, LossBreakdown)> {
    let pts = to_points(tape.value(points));
    let d = tape.value(dist).data.clone();
    let (mut bd, [surface, edge, repulsion, regression]) = joint_terms(&pts, &d, tris, segs, cfg)?;
    let s = record(tape, points, dist, surface);
    let e = record(tape, points, dist, edge);
    let r = record(tape, points, dist, repulsion);
    let g = record(tape, points, dist, regression);
    let e = tape.scale(e, cfg.alpha);
    let g = tape.scale(g, cfg.beta);
    let sr = tape.add(s, r)?;
    let sre = tape.add(sr, e)?;
    let joint = tape.add(sre, g)?;
    bd.joint = tape.value(joint).item();
    Ok((joint, bd))
}
