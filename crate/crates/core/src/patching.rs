//! Patch extraction over a k-nn graph.
//!
//! Patches are grown by graph distance rather than Euclidean distance, so a
//! patch started on one side of a thin sheet does not pick up samples from
//! the opposite side.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::geom::{dist_to_mesh, point_segment_distance, point_triangle_distance, Point3, Segment, Similarity, Triangle};
use crate::mesh::TriMesh;
use crate::par;
use crate::rng::{child_rng, Rng};
use crate::spatial::{KdTree, Neighbor};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchConfig {
    /// Neighbors per point in the patch graph.
    pub k: usize,
    /// Points collected by Dijkstra before subsampling.
    pub dijkstra_size: usize,
    /// Points kept per patch.
    pub sample_size: usize,
    /// Ground-truth association margin, in normalized patch units.
    pub margin: f64,
    /// Training centroids drawn per cloud.
    pub centroids_per_cloud: usize,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            k: 10,
            dijkstra_size: 2048,
            sample_size: 1024,
            margin: 0.1,
            centroids_per_cloud: 100,
        }
    }
}

/// Directed k-nn edges plus their symmetrized union used for traversal.
#[derive(Debug, Clone)]
pub struct KnnGraph {
    pub k: usize,
    /// `adjacency[i]`: the k nearest neighbors of `i` with Euclidean weights,
    /// nearest first.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    undirected: Vec<Vec<(usize, f64)>>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Union of directed edges, usable in both directions.
    pub fn undirected(&self, i: usize) -> &[(usize, f64)] {
        &self.undirected[i]
    }
}

/// Exact k nearest neighbors of every point (self excluded), ties by index.
pub fn build_knn_graph(points: &[Point3], k: usize) -> Result<KnnGraph> {
    if points.len() < 2 {
        return Err(Error::CloudTooSmall {
            needed: 2,
            got: points.len(),
        });
    }
    let tree = KdTree::new(points);
    let k_eff = k.min(points.len() - 1);
    let adjacency: Vec<Vec<(usize, f64)>> = par::map_range(points.len(), |i| {
        tree.knn(points[i], k_eff, Some(i))
            .into_iter()
            .map(|Neighbor { index, dist_sq }| (index, dist_sq.sqrt()))
            .collect()
    });
    let mut undirected: Vec<Vec<(usize, f64)>> = adjacency.clone();
    for (i, nbrs) in adjacency.iter().enumerate() {
        for &(j, w) in nbrs {
            undirected[j].push((i, w));
        }
    }
    for list in &mut undirected {
        list.sort_by(|a, b| a.0.cmp(&b.0));
        list.dedup_by_key(|e| e.0);
    }
    Ok(KnnGraph {
        k: k_eff,
        adjacency,
        undirected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Dist(f64);

impl Eq for Dist {}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// The `size` points nearest to `source` in shortest-path distance over the
/// undirected graph, in settling order (source first). Equal distances
/// settle the lower index first, so smaller collections are prefixes of
/// larger ones.
pub fn dijkstra_collect(graph: &KnnGraph, source: usize, size: usize) -> Result<Vec<usize>> {
    let n = graph.len();
    let mut best = vec![f64::INFINITY; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut out = Vec::with_capacity(size);
    best[source] = 0.0;
    heap.push(Reverse((Dist(0.0), source)));
    while let Some(Reverse((Dist(d), u))) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        out.push(u);
        if out.len() == size {
            return Ok(out);
        }
        for &(v, w) in graph.undirected(u) {
            let nd = d + w;
            if !settled[v] && nd < best[v] {
                best[v] = nd;
                heap.push(Reverse((Dist(nd), v)));
            }
        }
    }
    Err(Error::PatchUnderfilled {
        centroid: source,
        reached: out.len(),
        needed: size,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// Points in the normalized frame (zero mean, max norm 1).
    pub points: Vec<Point3>,
    pub centroid_index: usize,
    /// Normalized → world.
    pub transform: Similarity,
    /// Associated surface, in the normalized frame.
    pub gt_triangles: Vec<Triangle>,
    /// Associated edge segments, in the normalized frame.
    pub gt_segments: Vec<Segment>,
    /// Index of each point in the source cloud.
    pub source_indices: Vec<usize>,
    pub mesh_id: u32,
}

impl Patch {
    pub fn world_points(&self) -> Vec<Point3> {
        self.points.iter().map(|&p| self.transform.apply(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub points: Vec<Point3>,
    /// Normalized → original.
    pub transform: Similarity,
    /// All input points coincide; scale was forced to 1.
    pub degenerate: bool,
}

/// Translates to zero mean and scales so the farthest point has norm 1.
pub fn normalize_patch(points: &[Point3]) -> Normalized {
    assert!(!points.is_empty(), "cannot normalize an empty patch");
    let mean = points.iter().fold(Point3::ZERO, |acc, &p| acc + p) / points.len() as f64;
    let radius = points.iter().map(|&p| p.dist(mean)).fold(0.0, f64::max);
    let degenerate = !(radius > 0.0);
    let scale = if degenerate { 1.0 } else { radius };
    let transform = Similarity {
        scale,
        translation: mean,
    };
    Normalized {
        points: points.iter().map(|&p| transform.apply_inverse(p)).collect(),
        transform,
        degenerate,
    }
}

/// Grows a graph patch of `dijkstra_size` points around `centroid`, keeps a
/// uniform random subset of `sample_size`, and normalizes it.
pub fn extract_patch(
    points: &[Point3],
    graph: &KnnGraph,
    centroid: usize,
    dijkstra_size: usize,
    sample_size: usize,
    rng: &mut Rng,
) -> Result<Patch> {
    if points.len() < dijkstra_size {
        return Err(Error::CloudTooSmall {
            needed: dijkstra_size,
            got: points.len(),
        });
    }
    let collected = dijkstra_collect(graph, centroid, dijkstra_size)?;
    let mut keep = index::sample(rng, collected.len(), sample_size.min(collected.len())).into_vec();
    keep.sort_unstable();
    let source_indices: Vec<usize> = keep.iter().map(|&k| collected[k]).collect();
    let world: Vec<Point3> = source_indices.iter().map(|&i| points[i]).collect();
    let norm = normalize_patch(&world);
    Ok(Patch {
        points: norm.points,
        centroid_index: centroid,
        transform: norm.transform,
        gt_triangles: Vec::new(),
        gt_segments: Vec::new(),
        source_indices,
        mesh_id: 0,
    })
}

/// Clips a segment to the ball `|p| <= radius`; `None` if it misses.
fn clip_to_ball(seg: &Segment, radius: f64) -> Option<Segment> {
    let d = seg.p1 - seg.p0;
    let a = d.norm_sq();
    let r2 = radius * radius;
    if a == 0.0 {
        return (seg.p0.norm_sq() <= r2).then_some(*seg);
    }
    let b = 2.0 * seg.p0.dot(d);
    let c = seg.p0.norm_sq() - r2;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = ((-b - sq) / (2.0 * a)).max(0.0);
    let t1 = ((-b + sq) / (2.0 * a)).min(1.0);
    (t0 <= t1).then(|| Segment::new(seg.at(t0), seg.at(t1)))
}

/// Attaches the mesh triangles and edge segments lying within `margin`
/// (normalized units) of any patch point, expressed in the patch frame.
/// Segments are clipped to the ball of radius `1 + margin`.
pub fn associate_ground_truth(
    mut patch: Patch,
    mesh_tris: &[Triangle],
    edges: &[Segment],
    margin: f64,
) -> Result<Patch> {
    let t = patch.transform;
    let center = t.translation;
    let world = patch.world_points();
    let radius = world.iter().map(|p| p.dist(center)).fold(0.0, f64::max);
    let world_margin = margin * t.scale;

    let tri_hits = par::map(mesh_tris, |tri| {
        if point_triangle_distance(center, tri).distance > radius + world_margin {
            return false;
        }
        world
            .iter()
            .any(|&p| point_triangle_distance(p, tri).distance <= world_margin)
    });
    patch.gt_triangles = mesh_tris
        .iter()
        .zip(&tri_hits)
        .filter(|(_, &hit)| hit)
        .map(|(tri, _)| tri.map(|p| t.apply_inverse(p)))
        .collect();
    if patch.gt_triangles.is_empty() {
        return Err(Error::NoAssociatedTriangles);
    }

    patch.gt_segments = edges
        .iter()
        .filter(|seg| {
            point_segment_distance(center, seg).distance <= radius + world_margin
                && world
                    .iter()
                    .any(|&p| point_segment_distance(p, seg).distance <= world_margin)
        })
        .filter_map(|seg| clip_to_ball(&seg.map(|p| t.apply_inverse(p)), 1.0 + margin))
        .collect();
    Ok(patch)
}

/// `m` distinct uniformly random point indices.
pub fn select_training_centroids(n_points: usize, m: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n_points < m {
        return Err(Error::CloudTooSmall {
            needed: m,
            got: n_points,
        });
    }
    Ok(index::sample(rng, n_points, m).into_vec())
}

/// Greedy farthest-point sampling of `m` indices starting from `first`.
/// Ties pick the lowest index.
pub fn farthest_point_sampling(points: &[Point3], m: usize, first: usize) -> Vec<usize> {
    let m = m.min(points.len());
    if m == 0 {
        return Vec::new();
    }
    let mut chosen = Vec::with_capacity(m);
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut next = first;
    for _ in 0..m {
        chosen.push(next);
        let c = points[next];
        let mut best = (-1.0, 0);
        for (i, (d, &p)) in min_d.iter_mut().zip(points).enumerate() {
            *d = d.min(p.dist_sq(c));
            if *d > best.0 {
                best = (*d, i);
            }
        }
        next = best.1;
    }
    chosen
}

/// Number of inference patches covering each point about `coverage` times.
pub fn inference_patch_count(n_points: usize, patch_size: usize, coverage: f64) -> usize {
    (coverage * n_points as f64 / patch_size as f64).ceil() as usize
}

/// Inference centroids by farthest-point sampling from a random first pick.
pub fn select_inference_centroids(
    points: &[Point3],
    patch_size: usize,
    coverage: f64,
    rng: &mut Rng,
) -> Vec<usize> {
    if points.is_empty() {
        return Vec::new();
    }
    let m = inference_patch_count(points.len(), patch_size, coverage);
    if m >= points.len() {
        return (0..points.len()).collect();
    }
    let first = rng.random_range(0..points.len());
    farthest_point_sampling(points, m, first)
}

/// Training patches from one scanned cloud of `mesh`: random centroids,
/// graph patches, ground truth attached. Centroids whose patch cannot be
/// filled or has no surface nearby are skipped with a warning.
pub fn training_patches(
    points: &[Point3],
    mesh: &TriMesh,
    cfg: &PatchConfig,
    mesh_id: u32,
    rng: &mut Rng,
) -> Result<Vec<Patch>> {
    let graph = build_knn_graph(points, cfg.k)?;
    let centroids = select_training_centroids(points.len(), cfg.centroids_per_cloud, rng)?;
    let tris = mesh.triangles();
    let base: u64 = rng.random();
    let streams: Vec<(u64, usize)> = centroids.into_iter().enumerate().map(|(i, c)| (i as u64, c)).collect();
    let results = par::map(&streams, |&(stream, c)| {
        let mut local = child_rng(base, stream);
        extract_patch(points, &graph, c, cfg.dijkstra_size, cfg.sample_size, &mut local)
            .and_then(|p| associate_ground_truth(p, &tris, &mesh.edges, cfg.margin))
    });
    let mut out = Vec::with_capacity(results.len());
    for ((_, c), patch) in streams.iter().zip(results) {
        match patch {
            Ok(mut p) => {
                p.mesh_id = mesh_id;
                out.push(p);
            }
            Err(e) => log::warn!("skipping centroid {c}: {e}"),
        }
    }
    Ok(out)
}

/// Distance from every patch point to its associated surface (normalized
/// frame); handy for checking association.
pub fn patch_surface_residuals(patch: &Patch) -> Result<Vec<f64>> {
    patch
        .points
        .iter()
        .map(|&p| dist_to_mesh(p, &patch.gt_triangles).map(|d| d.0))
        .collect()
}
