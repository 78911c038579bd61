//! Training checkpoints.
//!
//! Layout (little endian): magic `EPCCKPT\0`, version `u32`, seed `u64`,
//! completed epochs `u64`, optimizer steps `u64`, architecture hash and
//! network configuration as length-prefixed strings, then named arrays
//! (`u32` count; per array a name, `rows u64`, `cols u64`, `f64` data):
//! every parameter followed by the Adam first and second moments under
//! `adam.m.<name>` and `adam.v.<name>`.

use std::collections::HashMap;
use std::path::Path;

use super::binary::{Reader, Writer};
use crate::autograd::Tensor;
use crate::config::{network_from_text, network_to_text};
use crate::error::{Error, Result};
use crate::network::{init_params, NetworkConfig, NetworkParams};
use crate::pipeline::adam::AdamState;

const MAGIC: &[u8; 8] = b"EPCCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub params: NetworkParams,
    pub adam: AdamState,
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::new(MAGIC, VERSION);
    w.u64(ck.seed);
    w.u64(ck.epoch);
    w.u64(ck.adam.step);
    w.str(&ck.params.architecture_hash());
    w.str(&network_to_text(&ck.params.config));
    let named = ck.params.named_tensors();
    w.u32((3 * named.len()) as u32);
    let mut put = |name: &str, t: &Tensor| {
        w.str(name);
        w.u64(t.rows as u64);
        w.u64(t.cols as u64);
        w.f64s(&t.data);
    };
    for (name, t) in &named {
        put(name, t);
    }
    for (prefix, moments) in [("adam.m.", &ck.adam.m), ("adam.v.", &ck.adam.v)] {
        for ((name, _), t) in named.iter().zip(moments) {
            put(&format!("{prefix}{name}"), t);
        }
    }
    w.buf
}

/// Decodes a checkpoint; if `expected` is given, refuses one whose
/// architecture differs.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&NetworkConfig>) -> Result<Checkpoint> {
    let (mut r, version) = Reader::open("checkpoint", bytes, MAGIC)?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let epoch = r.u64()?;
    let step = r.u64()?;
    let hash = r.str()?;
    let config = network_from_text(&r.str()?)?;
    let mut params = init_params(&config, 0)?;
    let actual = params.architecture_hash();
    if hash != actual {
        return Err(Error::ArchitectureMismatch { found: hash, expected: actual });
    }
    if let Some(exp) = expected {
        let want = init_params(exp, 0)?.architecture_hash();
        if want != hash {
            return Err(Error::ArchitectureMismatch { found: hash, expected: want });
        }
    }
    let count = r.u32()? as usize;
    let mut arrays: HashMap<String, Tensor> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name = r.str()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows.checked_mul(cols).ok_or_else(|| r.err("array too large"))?;
        let data = r.f64s(n)?;
        arrays.insert(name, Tensor { rows, cols, data });
    }
    r.finish()?;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut take = |name: &str, like: &Tensor| -> Result<Tensor> {
        let t = arrays
            .remove(name)
            .ok_or_else(|| Error::Format { kind: "checkpoint", msg: format!("missing array {name}") })?;
        if t.shape() != like.shape() {
            return Err(Error::Format {
                kind: "checkpoint",
                msg: format!("array {name} has shape {:?}, expected {:?}", t.shape(), like.shape()),
            });
        }
        Ok(t)
    };
    let mut m = Vec::with_capacity(names.len());
    let mut v = Vec::with_capacity(names.len());
    for (name, slot) in names.iter().zip(params.tensors_mut()) {
        *slot = take(name, slot)?;
        m.push(take(&format!("adam.m.{name}"), slot)?);
        v.push(take(&format!("adam.v.{name}"), slot)?);
    }
    Ok(Checkpoint {
        seed,
        epoch,
        params,
        adam: AdamState { m, v, step },
    })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    super::write_atomic(path, &encode_checkpoint(ck))
}

pub fn read_checkpoint(path: &Path, expected: Option<&NetworkConfig>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?, expected)
}
