use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no ground-truth surface")]
    NoSurface,
    #[error("no edge segments")]
    NoEdges,
    #[error("empty mesh")]
    EmptyMesh,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("point cloud too small: need at least {needed} points, got {got}")]
    CloudTooSmall { needed: usize, got: usize },
    #[error("patch underfilled: reached {reached} of {needed} points from centroid {centroid}")]
    PatchUnderfilled {
        centroid: usize,
        reached: usize,
        needed: usize,
    },
    #[error("patch has no associated ground-truth triangles")]
    NoAssociatedTriangles,
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    StaleTape,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no patch could be processed")]
    NoPatches,
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid {kind} file: {msg}")]
    Format { kind: &'static str, msg: String },
    #[error("checkpoint architecture mismatch (file {found}, expected {expected})")]
    ArchitectureMismatch { found: String, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
