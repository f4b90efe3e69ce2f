//! Hull fill of sparse points, isosurface extraction and mesh clean-up.

mod hull;
mod marching_cubes;
mod mesh;
mod postprocess;

pub use hull::{alpha_hull_fill, orient, ConvexHull, HullFill};
pub use marching_cubes::{case_table, marching_cubes, CubeCase};
pub use mesh::TriangleMesh;
pub use postprocess::{boundary_loops, fill_holes, laplacian_smooth, postprocess};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a point set has no 3D hull.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegeneracyClass {
    TooFewPoints,
    Coincident,
    Collinear,
    Coplanar,
}

impl std::fmt::Display for DegeneracyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TooFewPoints => "fewer than 4 points",
            Self::Coincident => "all points coincident",
            Self::Collinear => "all points collinear",
            Self::Coplanar => "all points coplanar",
        })
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate hull input ({class}, {points} points)")]
    Degenerate { class: DegeneracyClass, points: usize },
    #[error("alpha {0} not supported: only alpha = 0 (convex hull) yields a closed shape")]
    UnsupportedAlpha(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;
