//! Point-set cleanup after consolidation: RANSAC lines through edge points,
//! edge-stopping PCA planes through surface points, and dart-throwing gap
//! fill from the original cloud.

use std::collections::{HashMap, VecDeque};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::Result;
use crate::geom::{Point3, Segment};
use crate::mesh::PointCloud;
use crate::par;
use crate::patching::build_knn_graph;
use crate::rng::{child_rng, Rng};
use crate::spatial::KdTree;

#[derive(Debug, Clone, PartialEq)]
pub struct RefineConfig {
    pub inlier_tol: f64,
    pub min_inliers: usize,
    pub iterations: usize,
    pub k: usize,
    pub group_size: usize,
    pub rounds: usize,
    pub min_dist: f64,
    pub seed: u64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            inlier_tol: 0.01,
            min_inliers: 10,
            iterations: 500,
            k: 10,
            group_size: 30,
            rounds: 3,
            min_dist: 0.03,
            seed: 0,
        }
    }
}

fn to_vec(p: Point3) -> Vector3<f64> {
    Vector3::new(p.x, p.y, p.z)
}

fn from_vec(v: &Vector3<f64>) -> Point3 {
    Point3::new(v[0], v[1], v[2])
}

/// Centroid and eigen-decomposition of the covariance of `points`.
fn pca(points: &[Point3]) -> (Point3, SymmetricEigen<f64, nalgebra::U3>) {
    let c = points.iter().fold(Point3::ZERO, |a, &p| a + p) / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for &p in points {
        let d = to_vec(p - c);
        cov += d * d.transpose();
    }
    (c, SymmetricEigen::new(cov / points.len() as f64))
}

fn axis(eig: &SymmetricEigen<f64, nalgebra::U3>, largest: bool) -> Point3 {
    let vals = eig.eigenvalues;
    let mut k = 0;
    for i in 1..3 {
        let better = if largest { vals[i] > vals[k] } else { vals[i] < vals[k] };
        if better {
            k = i;
        }
    }
    from_vec(&eig.eigenvectors.column(k).into_owned())
}

fn line_distance(p: Point3, origin: Point3, dir: Point3) -> f64 {
    let d = p - origin;
    (d - dir * d.dot(dir)).norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub segments: Vec<Segment>,
    /// Projected positions, indexed like the input; `None` for dropped points.
    pub projected: Vec<Option<Point3>>,
    /// Indices left over after extraction.
    pub dropped: Vec<usize>,
}

/// Greedy line extraction: the best 2-point hypothesis by inlier count is
/// refit by PCA, its inliers projected onto the line and removed; repeats
/// until a best line has fewer than `min_inliers`.
pub fn ransac_fit_edges(points: &[Point3], cfg: &RefineConfig, rng: &mut Rng) -> RansacResult {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut projected = vec![None; points.len()];
    let mut segments = Vec::new();
    while remaining.len() >= cfg.min_inliers.max(2) {
        let mut best: Vec<usize> = Vec::new();
        for _ in 0..cfg.iterations {
            let i = remaining[rng.random_range(0..remaining.len())];
            let j = remaining[rng.random_range(0..remaining.len())];
            let Some(dir) = (points[j] - points[i]).normalized() else { continue };
            let inliers: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&q| line_distance(points[q], points[i], dir) < cfg.inlier_tol)
                .collect();
            if inliers.len() > best.len() {
                best = inliers;
            }
        }
        if best.len() < cfg.min_inliers.max(2) {
            break;
        }
        let pts: Vec<Point3> = best.iter().map(|&i| points[i]).collect();
        let (c, eig) = pca(&pts);
        let dir = axis(&eig, true);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in &best {
            let t = (points[i] - c).dot(dir);
            lo = lo.min(t);
            hi = hi.max(t);
            projected[i] = Some(c + dir * t);
        }
        segments.push(Segment::new(c + dir * lo, c + dir * hi));
        remaining.retain(|i| projected[*i].is_none());
    }
    RansacResult {
        segments,
        projected,
        dropped: remaining,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub points: Vec<Point3>,
    /// Each group's point indices, in growth order.
    pub groups: Vec<Vec<usize>>,
    /// Sum of projection distances.
    pub displacement: f64,
}

/// Breadth-first groups of at most `group_size` surface points over the k-nn
/// graph of all points, never entering edge points; each group of three or
/// more is projected onto its PCA plane.
pub fn pca_filter_surface(points: &[Point3], is_edge: &[bool], cfg: &RefineConfig) -> Result<PcaResult> {
    let mut out = points.to_vec();
    if points.len() < 2 || is_edge.iter().all(|&e| e) {
        return Ok(PcaResult {
            points: out,
            groups: Vec::new(),
            displacement: 0.0,
        });
    }
    let graph = build_knn_graph(points, cfg.k)?;
    let mut visited = is_edge.to_vec();
    let mut groups = Vec::new();
    for seed in 0..points.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut group = vec![seed];
        let mut queue = VecDeque::from([seed]);
        'grow: while let Some(u) = queue.pop_front() {
            for &(v, _) in graph.undirected(u) {
                if group.len() >= cfg.group_size {
                    break 'grow;
                }
                if !visited[v] {
                    visited[v] = true;
                    group.push(v);
                    queue.push_back(v);
                }
            }
        }
        groups.push(group);
    }
    let fits = par::map(&groups, |g| {
        if g.len() < 3 {
            return None;
        }
        let pts: Vec<Point3> = g.iter().map(|&i| points[i]).collect();
        let (c, eig) = pca(&pts);
        Some((c, axis(&eig, false)))
    });
    let mut displacement = 0.0;
    for (g, fit) in groups.iter().zip(fits) {
        let Some((c, n)) = fit else { continue };
        for &i in g {
            let off = n * (points[i] - c).dot(n);
            displacement += off.norm();
            out[i] = points[i] - off;
        }
    }
    Ok(PcaResult {
        points: out,
        groups,
        displacement,
    })
}

type Cell = (i64, i64, i64);

struct Grid {
    size: f64,
    cells: HashMap<Cell, Vec<Point3>>,
}

impl Grid {
    fn new(size: f64) -> Self {
        Self {
            size,
            cells: HashMap::new(),
        }
    }

    fn cell(&self, p: Point3) -> Cell {
        let f = |v: f64| (v / self.size).floor() as i64;
        (f(p.x), f(p.y), f(p.z))
    }

    fn insert(&mut self, p: Point3) {
        let c = self.cell(p);
        self.cells.entry(c).or_default().push(p);
    }

    fn any_within(&self, p: Point3, r: f64) -> bool {
        let (x, y, z) = self.cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&(x + dx, y + dy, z + dz)) {
                        if list.iter().any(|q| q.dist(p) < r) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Original points at least `min_dist` from every refined point, accepted in
/// a seeded random order only if also `min_dist` from every point accepted
/// before them.
pub fn fill_gaps(refined: &[Point3], original: &[Point3], min_dist: f64, rng: &mut Rng) -> Vec<Point3> {
    let tree = KdTree::new(refined);
    let mut candidates: Vec<Point3> = original
        .iter()
        .copied()
        .filter(|&p| tree.nearest(p).is_none_or(|n| n.dist_sq.sqrt() >= min_dist))
        .collect();
    candidates.shuffle(rng);
    let mut grid = Grid::new(min_dist.max(f64::MIN_POSITIVE));
    let mut added = Vec::new();
    for p in candidates {
        if !grid.any_within(p, min_dist) {
            grid.insert(p);
            added.push(p);
        }
    }
    added
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutput {
    pub cloud: PointCloud,
    pub segments: Vec<Segment>,
    /// Total projection displacement per round.
    pub displacement: Vec<f64>,
    pub added: usize,
}

/// `rounds` of line and plane projection followed by one gap fill from
/// `original`. Edge flags are kept through rounds; leftover edge points are
/// demoted to surface.
pub fn refine(input: &PointCloud, original: &[Point3], cfg: &RefineConfig) -> Result<RefineOutput> {
    let mut points = input.points.clone();
    let mut is_edge: Vec<bool> = (0..points.len()).map(|i| input.edge_flag(i)).collect();
    let mut segments = Vec::new();
    let mut displacement = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let mut moved = 0.0;
        let edge_idx: Vec<usize> = (0..points.len()).filter(|&i| is_edge[i]).collect();
        let edge_pts: Vec<Point3> = edge_idx.iter().map(|&i| points[i]).collect();
        let fit = ransac_fit_edges(&edge_pts, cfg, &mut child_rng(cfg.seed, round as u64));
        for (k, &i) in edge_idx.iter().enumerate() {
            match fit.projected[k] {
                Some(q) => {
                    moved += q.dist(points[i]);
                    points[i] = q;
                }
                None => is_edge[i] = false,
            }
        }
        segments = fit.segments;
        let pca = pca_filter_surface(&points, &is_edge, cfg)?;
        moved += pca.displacement;
        points = pca.points;
        displacement.push(moved);
    }
    let fill_rng = &mut child_rng(cfg.seed, u64::MAX);
    let extra = fill_gaps(&points, original, cfg.min_dist, fill_rng);
    let added = extra.len();
    points.extend(extra);
    is_edge.resize(points.len(), false);
    Ok(RefineOutput {
        cloud: PointCloud {
            points,
            edge_dist: None,
            is_edge: Some(is_edge),
        },
        segments,
        displacement,
        added,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    #[test]
    fn empty_inputs() {
        let cfg = RefineConfig::default();
        let r = ransac_fit_edges(&[], &cfg, &mut rng_from(0));
        assert!(r.segments.is_empty() && r.projected.is_empty());
        let p = pca_filter_surface(&[], &[], &cfg).unwrap();
        assert!(p.points.is_empty());
    }

    #[test]
    fn gap_fill_rules() {
        let refined = [Point3::ZERO, Point3::new(1.0, 0.0, 0.0)];
        let near = [Point3::new(0.001, 0.0, 0.0)];
        assert!(fill_gaps(&refined, &near, 0.03, &mut rng_from(0)).is_empty());
        let far = [Point3::new(5.0, 0.0, 0.0)];
        assert_eq!(fill_gaps(&refined, &far, 0.03, &mut rng_from(0)), far.to_vec());
        let pair = [Point3::new(5.0, 0.0, 0.0), Point3::new(5.01, 0.0, 0.0)];
        assert_eq!(fill_gaps(&refined, &pair, 0.03, &mut rng_from(0)).len(), 1);
    }

    #[test]
    fn zero_rounds_only_fills() {
        let cloud = PointCloud::new(vec![Point3::ZERO, Point3::new(1.0, 0.0, 0.0)]);
        let out = refine(&cloud, &cloud.points, &RefineConfig { rounds: 0, ..Default::default() }).unwrap();
        assert_eq!(out.cloud.points, cloud.points);
        assert!(out.displacement.is_empty());
        assert_eq!(out.added, 0);
    }
}
