use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::mesh::PointCloud;
use crate::network::{infer, NetworkParams};
use crate::par;
use crate::patching::{build_knn_graph, extract_patch, select_inference_centroids};
use crate::rng::{child_rng, child_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct ConsolidateConfig {
    /// Edge threshold in the normalized patch frame.
    pub delta_d: f64,
    /// Average number of patches covering each input point.
    pub coverage: f64,
    /// Neighbors in the patch graph.
    pub k: usize,
    pub seed: u64,
}

impl Default for ConsolidateConfig {
    fn default() -> Self {
        Self {
            delta_d: 0.05,
            coverage: 3.0,
            k: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Consolidation {
    /// World-frame outputs with `edge_dist` (world units) and `is_edge`.
    pub cloud: PointCloud,
    pub patches: usize,
    pub skipped: usize,
}

/// Patch-wise inference over `points`; outputs of all patches are
/// concatenated without deduplication.
pub fn consolidate(points: &[Point3], params: &NetworkParams, cfg: &ConsolidateConfig) -> Result<Consolidation> {
    let n_hat = params.config.n_hat;
    let dijkstra_size = 2 * n_hat;
    if points.len() < dijkstra_size {
        return Err(Error::CloudTooSmall {
            needed: dijkstra_size,
            got: points.len(),
        });
    }
    let graph = build_knn_graph(points, cfg.k)?;
    let centroids = select_inference_centroids(points, params.config.retained(), cfg.coverage, &mut child_rng(cfg.seed, 0));
    let sample_seed = child_seed(cfg.seed, 1);
    let results = par::map_range(centroids.len(), |i| -> Result<PointCloud> {
        let patch = extract_patch(points, &graph, centroids[i], dijkstra_size, n_hat, &mut child_rng(sample_seed, i as u64))?;
        let out = infer(params, &patch.points, cfg.delta_d)?;
        let t = patch.transform;
        Ok(PointCloud {
            points: out.points.iter().map(|&p| t.apply(p)).collect(),
            edge_dist: Some(out.regressed_d.iter().map(|d| d * t.scale).collect()),
            is_edge: Some(out.edge_mask),
        })
    });
    let mut parts = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for (c, r) in centroids.iter().zip(results) {
        match r {
            Ok(p) => parts.push(p),
            Err(e) => {
                log::warn!("skipping inference patch at {c}: {e}");
                skipped += 1;
            }
        }
    }
    if parts.is_empty() {
        return Err(Error::NoPatches);
    }
    Ok(Consolidation {
        patches: parts.len(),
        skipped,
        cloud: PointCloud::concat(parts),
    })
}
