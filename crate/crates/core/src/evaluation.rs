//! Point-to-surface and point-to-edge error metrics.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geom::{dist_to_edges, dist_to_mesh, Point3, Segment, Triangle};
use crate::mesh::TriMesh;
use crate::network::NetworkParams;
use crate::par;
use crate::pipeline::{consolidate, ConsolidateConfig};
use crate::scanner::{virtual_scan, ScanConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub mean: f64,
    pub rms: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn from_distances(d: &[f64]) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::EmptyInput("no distances"));
        }
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let rms = (d.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
        Ok(Self {
            mean,
            rms,
            count: d.len(),
        })
    }
}

pub fn surface_distances(points: &[Point3], tris: &[Triangle]) -> Result<Vec<f64>> {
    if tris.is_empty() {
        return Err(Error::NoSurface);
    }
    Ok(par::map(points, |&p| dist_to_mesh(p, tris).expect("non-empty mesh").0))
}

pub fn edge_distances(points: &[Point3], segs: &[Segment]) -> Result<Vec<f64>> {
    if segs.is_empty() {
        return Err(Error::NoEdges);
    }
    Ok(par::map(points, |&p| dist_to_edges(p, segs).expect("non-empty edges").0))
}

/// Mean and RMS of point-to-mesh distances.
pub fn surface_error_stats(points: &[Point3], tris: &[Triangle]) -> Result<ErrorStats> {
    ErrorStats::from_distances(&surface_distances(points, tris)?)
}

/// Mean and RMS of point-to-edge distances.
pub fn edge_error_stats(points: &[Point3], segs: &[Segment]) -> Result<ErrorStats> {
    ErrorStats::from_distances(&edge_distances(points, segs)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// `bin_lo,bin_hi,count` rows with a header.
    pub fn to_csv(&self) -> String {
        let w = self.bin_width();
        let mut s = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let lo = self.lo + i as f64 * w;
            writeln!(s, "{},{},{}", lo, lo + w, c).expect("write to string");
        }
        s
    }
}

/// Uniform bins over `[lo, hi)`. Values past either end land in the first
/// or last bin.
pub fn distance_histogram(distances: &[f64], bins: usize, range: (f64, f64)) -> Histogram {
    assert!(bins >= 1, "histogram needs at least one bin");
    let (lo, hi) = range;
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &d in distances {
        let k = ((d - lo) / w).floor();
        let k = if k.is_nan() || k < 0.0 { 0 } else { (k as usize).min(bins - 1) };
        counts[k] += 1;
    }
    Histogram { lo, hi, counts }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Output,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Input => "input",
            Stage::Output => "output",
        }
    }
}

/// Surface and edge error of one cloud against a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudStats {
    pub surface: ErrorStats,
    pub edge: ErrorStats,
    pub surface_hist: Histogram,
    pub edge_hist: Histogram,
}

pub fn measure_cloud(points: &[Point3], mesh: &TriMesh, bins: usize, range: (f64, f64)) -> Result<CloudStats> {
    let ds = surface_distances(points, &mesh.triangles())?;
    let de = edge_distances(points, &mesh.edges)?;
    let surface = ErrorStats::from_distances(&ds)?;
    let edge = ErrorStats::from_distances(&de)?;
    for s in [surface, edge] {
        assert!(s.rms * s.rms >= s.mean * s.mean * (1.0 - 1e-12), "rms below mean: {s:?}");
    }
    Ok(CloudStats {
        surface,
        edge,
        surface_hist: distance_histogram(&ds, bins, range),
        edge_hist: distance_histogram(&de, bins, range),
    })
}

pub const STATS_HEADER: &str = "count,surface_mean,surface_rms,edge_mean,edge_rms,surface_mean_e3,surface_rms_e3";

impl CloudStats {
    /// One line under [`STATS_HEADER`]; the `_e3` columns are in units of
    /// 1e-3.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.surface.count,
            self.surface.mean,
            self.surface.rms,
            self.edge.mean,
            self.edge.rms,
            self.surface.mean * 1e3,
            self.surface.rms * 1e3
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_q: usize,
    pub stage: Stage,
    pub stats: CloudStats,
}

/// Scans the normalized `mesh` at each quantization level, consolidates the
/// scan, and measures both clouds. Two rows per level: input then output.
pub fn noise_sweep_report(
    mesh: &TriMesh,
    params: &NetworkParams,
    scan: &ScanConfig,
    infer: &ConsolidateConfig,
    n_q: &[usize],
    bins: usize,
    range: (f64, f64),
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(2 * n_q.len());
    for &q in n_q {
        let cloud = virtual_scan(mesh, &ScanConfig { n_q: q, ..scan.clone() })?;
        rows.push(SweepRow {
            n_q: q,
            stage: Stage::Input,
            stats: measure_cloud(&cloud.points, mesh, bins, range)?,
        });
        let out = consolidate(&cloud.points, params, infer)?;
        rows.push(SweepRow {
            n_q: q,
            stage: Stage::Output,
            stats: measure_cloud(&out.cloud.points, mesh, bins, range)?,
        });
    }
    Ok(rows)
}

pub fn report_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("n_q,stage,{STATS_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{},{}", r.n_q, r.stage.name(), r.stats.csv_row()).expect("write to string");
    }
    s
}

/// Long-form histograms: `n_q,stage,metric,bin_lo,bin_hi,count`.
pub fn histograms_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("n_q,stage,metric,bin_lo,bin_hi,count\n");
    for r in rows {
        for (metric, h) in [("surface", &r.stats.surface_hist), ("edge", &r.stats.edge_hist)] {
            let w = h.bin_width();
            for (i, c) in h.counts.iter().enumerate() {
                let lo = h.lo + i as f64 * w;
                writeln!(s, "{},{},{metric},{},{},{c}", r.n_q, r.stage.name(), lo, lo + w).expect("write to string");
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_definition() {
        let s = ErrorStats::from_distances(&[0.3, 0.4]).unwrap();
        assert!((s.mean - 0.35).abs() < 1e-15);
        assert!((s.rms - 0.125f64.sqrt()).abs() < 1e-15);
        assert!(ErrorStats::from_distances(&[]).is_err());
    }

    #[test]
    fn histogram_edges() {
        let h = distance_histogram(&[0.0; 7], 50, (0.0, 0.05));
        assert_eq!(h.counts[0], 7);
        assert_eq!(h.total(), 7);
        let h = distance_histogram(&[-1.0, 0.5, 10.0], 4, (0.0, 1.0));
        assert_eq!(h.counts, vec![1, 0, 1, 1]);
        assert!(h.to_csv().starts_with("bin_lo,bin_hi,count\n0,0.25,1\n"));
    }
}
