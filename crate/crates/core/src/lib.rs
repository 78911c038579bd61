pub mod autograd;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod geom;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod network;
pub mod par;
pub mod patching;
pub mod pipeline;
pub mod refine;
pub mod rng;
pub mod scanner;
pub mod spatial;

pub use error::{Error, Result};
pub use geom::{Point3, Segment, Triangle, Vec3};
pub use mesh::{PointCloud, TriMesh};
