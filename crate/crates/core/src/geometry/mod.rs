//! Watertight triangle meshes and their signed distance fields.

mod index;
pub mod io;
mod mesh;
pub mod primitives;

use nalgebra::Vector3;
use thiserror::Error;

pub use index::{
    closest_point_on_triangle, ClosestPoint, MeshDistanceIndex, SdfSample, GRADIENT_FD_STEP,
    GRADIENT_SURFACE_EPS, HESSIAN_STEP, WINDING_BETA,
};
pub use io::{load_mesh, MeshFormat};
pub use mesh::{TriangleMesh, DEGENERATE_AREA};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("empty mesh")]
    Empty,
    #[error("non-finite vertex {0:?}")]
    NonFinite(Vector3<f64>),
    #[error("face {face} references a vertex outside 0..{vertices}")]
    IndexOutOfRange { face: usize, vertices: usize },
    #[error("non-watertight: {} boundary edges", edges.len())]
    NonWatertight { edges: Vec<(usize, usize)> },
    #[error("non-manifold: {} edges shared by more than two faces", edges.len())]
    NonManifold { edges: Vec<(usize, usize)> },
    #[error("inconsistent orientation on {} edges", edges.len())]
    InconsistentOrientation { edges: Vec<(usize, usize)> },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown mesh format: {0}")]
    UnknownFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
