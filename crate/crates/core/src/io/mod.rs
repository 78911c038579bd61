//! File formats: OBJ meshes, ASCII PLY clouds, edge annotations, and the
//! binary patch-dataset and checkpoint containers.

mod binary;
pub mod checkpoint;
pub mod dataset;
pub mod edges;
pub mod obj;
pub mod ply;

use std::path::Path;

use crate::error::{Error, Result};

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Writes through a sibling temporary file so readers never see a partial
/// file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
