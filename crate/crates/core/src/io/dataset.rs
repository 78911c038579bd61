//! Binary patch dataset.
//!
//! Layout (little endian): magic `EPCPATCH`, version `u32`, `n_hat u32`,
//! `count u32`, then per patch: `mesh_id u32`, `centroid u64`, scale `f64`,
//! translation `3 f64`, `n_hat` points `3 f64` each, `n_hat` source indices
//! `u64`, triangle count `u64` and `9 f64` per triangle, segment count `u64`
//! and `6 f64` per segment.

use std::path::Path;

use super::binary::{Reader, Writer};
use crate::error::Result;
use crate::geom::{Segment, Similarity, Triangle};
use crate::patching::Patch;

const MAGIC: &[u8; 8] = b"EPCPATCH";
const VERSION: u32 = 1;

pub fn encode_dataset(n_hat: usize, patches: &[Patch]) -> Result<Vec<u8>> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u32(n_hat as u32);
    w.u32(patches.len() as u32);
    for p in patches {
        if p.points.len() != n_hat || p.source_indices.len() != n_hat {
            return Err(crate::error::Error::ShapeMismatch {
                op: "dataset patch",
                left: vec![p.points.len()],
                right: vec![n_hat],
            });
        }
        w.u32(p.mesh_id);
        w.u64(p.centroid_index as u64);
        w.f64(p.transform.scale);
        w.point(p.transform.translation);
        for &q in &p.points {
            w.point(q);
        }
        for &i in &p.source_indices {
            w.u64(i as u64);
        }
        w.u64(p.gt_triangles.len() as u64);
        for t in &p.gt_triangles {
            for v in t.vertices() {
                w.point(v);
            }
        }
        w.u64(p.gt_segments.len() as u64);
        for s in &p.gt_segments {
            w.point(s.p0);
            w.point(s.p1);
        }
    }
    Ok(w.buf)
}

/// Returns `n_hat` and the patches.
pub fn decode_dataset(bytes: &[u8]) -> Result<(usize, Vec<Patch>)> {
    let (mut r, version) = Reader::open("patch dataset", bytes, MAGIC)?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let n_hat = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut patches = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mesh_id = r.u32()?;
        let centroid_index = r.u64()? as usize;
        let scale = r.f64()?;
        let translation = r.point()?;
        let points = (0..n_hat).map(|_| r.point()).collect::<Result<Vec<_>>>()?;
        let source_indices = (0..n_hat).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let nt = r.count(72)?;
        let gt_triangles = (0..nt)
            .map(|_| Ok(Triangle::new(r.point()?, r.point()?, r.point()?)))
            .collect::<Result<Vec<_>>>()?;
        let ns = r.count(48)?;
        let gt_segments = (0..ns)
            .map(|_| Ok(Segment::new(r.point()?, r.point()?)))
            .collect::<Result<Vec<_>>>()?;
        patches.push(Patch {
            points,
            centroid_index,
            transform: Similarity { scale, translation },
            gt_triangles,
            gt_segments,
            source_indices,
            mesh_id,
        });
    }
    r.finish()?;
    Ok((n_hat, patches))
}

pub fn write_dataset(path: &Path, n_hat: usize, patches: &[Patch]) -> Result<()> {
    super::write_atomic(path, &encode_dataset(n_hat, patches)?)
}

pub fn read_dataset(path: &Path) -> Result<(usize, Vec<Patch>)> {
    decode_dataset(&std::fs::read(path)?)
}
