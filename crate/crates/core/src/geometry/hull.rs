//! Convex hull of sparse points and its voxel fill.
//!
//! The hull is built incrementally in a seeded random insertion order. All
//! side-of-plane decisions go through Shewchuk's adaptive exact `orient3d`,
//! so coplanar and cospherical inputs on the integer voxel lattice are
//! classified exactly.

use super::{DegeneracyClass, GeometryError, Result};
use crate::rng;
use crate::volume::{PointCloud, VoxelGrid};
use rand::seq::SliceRandom;
use robust::{orient2d, orient3d, Coord, Coord3D};
use std::collections::HashSet;

/// Binary fill of a point set's hull together with a tetrahedral
/// decomposition of that hull.
#[derive(Debug, Clone, PartialEq)]
pub struct HullFill {
    pub grid: VoxelGrid,
    /// Tetrahedra as indices into the input cloud.
    pub simplices: Vec<[usize; 4]>,
}

/// Closed convex hull with outward-oriented triangular faces.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    points: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

fn c3(p: [f64; 3]) -> Coord3D<f64> {
    Coord3D { x: p[0], y: p[1], z: p[2] }
}

/// Exact sign of the volume spanned by `(b - a, c - a, d - a)`: positive when
/// `d` lies on the side that `(b - a) x (c - a)` points to.
pub fn orient(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> f64 {
    // robust::orient3d is positive when d lies below the plane of a, b, c
    // (a, b, c counter-clockwise seen from above), i.e. opposite to ours.
    -orient3d(c3(a), c3(b), c3(c), c3(d))
}

fn collinear(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> bool {
    let proj = |p: [f64; 3], i: usize, j: usize| Coord { x: p[i], y: p[j] };
    [(0, 1), (1, 2), (0, 2)]
        .iter()
        .all(|&(i, j)| orient2d(proj(a, i, j), proj(b, i, j), proj(c, i, j)) == 0.0)
}

impl ConvexHull {
    pub fn build(points: &[[f64; 3]]) -> Result<Self> {
        let degenerate = |class| Err(GeometryError::Degenerate { class, points: points.len() });
        if points.len() < 4 {
            return degenerate(DegeneracyClass::TooFewPoints);
        }
        if let Some(p) = points.iter().find(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::InvalidInput(format!("non-finite point {p:?}")));
        }
        let p = points;
        let i0 = 0;
        let Some(i1) = (1..p.len()).find(|&i| p[i] != p[i0]) else {
            return degenerate(DegeneracyClass::Coincident);
        };
        let Some(i2) = (1..p.len()).find(|&i| !collinear(p[i0], p[i1], p[i])) else {
            return degenerate(DegeneracyClass::Collinear);
        };
        let Some(i3) = (1..p.len()).find(|&i| orient(p[i0], p[i1], p[i2], p[i]) != 0.0) else {
            return degenerate(DegeneracyClass::Coplanar);
        };

        let mut faces: Vec<[usize; 3]> = Vec::new();
        let tet = [i0, i1, i2, i3];
        for skip in 0..4 {
            let f: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| tet[k]).collect();
            let (a, b, c) = (f[0], f[1], f[2]);
            if orient(p[a], p[b], p[c], p[tet[skip]]) > 0.0 {
                faces.push([a, c, b]);
            } else {
                faces.push([a, b, c]);
            }
        }

        let mut order: Vec<usize> = (0..p.len()).filter(|i| !tet.contains(i)).collect();
        order.shuffle(&mut rng::stream(0x48554c4c, p.len() as u64));

        let mut alive = vec![true; 4];
        for &q in &order {
            let visible: Vec<usize> = (0..faces.len())
                .filter(|&f| alive[f] && orient(p[faces[f][0]], p[faces[f][1]], p[faces[f][2]], p[q]) > 0.0)
                .collect();
            if visible.is_empty() {
                continue;
            }
            let directed: HashSet<(usize, usize)> = visible
                .iter()
                .flat_map(|&f| {
                    let [a, b, c] = faces[f];
                    [(a, b), (b, c), (c, a)]
                })
                .collect();
            let mut horizon = Vec::new();
            for &f in &visible {
                let [a, b, c] = faces[f];
                for (u, v) in [(a, b), (b, c), (c, a)] {
                    if !directed.contains(&(v, u)) {
                        horizon.push((u, v));
                    }
                }
                alive[f] = false;
            }
            for (u, v) in horizon {
                faces.push([u, v, q]);
                alive.push(true);
            }
            if faces.len() > 64 && alive.iter().filter(|&&a| a).count() * 2 < faces.len() {
                let kept: Vec<[usize; 3]> =
                    faces.iter().zip(&alive).filter(|(_, &a)| a).map(|(f, _)| *f).collect();
                alive = vec![true; kept.len()];
                faces = kept;
            }
        }
        let faces = faces.into_iter().zip(alive).filter(|(_, a)| *a).map(|(f, _)| f).collect();
        Ok(Self { points: points.to_vec(), faces })
    }

    /// Inside or on the boundary.
    pub fn contains(&self, q: [f64; 3]) -> bool {
        self.faces.iter().all(|f| {
            orient(self.points[f[0]], self.points[f[1]], self.points[f[2]], q) <= 0.0
        })
    }

    /// Star decomposition from the first hull vertex; flat tetrahedra are
    /// dropped.
    pub fn tetrahedra(&self) -> Vec<[usize; 4]> {
        let apex = self.faces[0][0];
        self.faces
            .iter()
            .filter(|f| !f.contains(&apex))
            .filter(|f| orient(self.points[f[0]], self.points[f[1]], self.points[f[2]], self.points[apex]) != 0.0)
            .map(|f| [apex, f[0], f[1], f[2]])
            .collect()
    }

    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for f in &self.faces {
            for &k in f {
                for a in 0..3 {
                    lo[a] = lo[a].min(self.points[k][a]);
                    hi[a] = hi[a].max(self.points[k][a]);
                }
            }
        }
        (lo, hi)
    }
}

/// Sets every voxel whose centre lies inside or on the alpha shape of
/// `cloud` (grid coordinates).
///
/// Only `alpha = 0`, the convex hull, is supported: any positive radius can
/// open holes in the shape, so it is rejected.
pub fn alpha_hull_fill(cloud: &PointCloud, dims: [usize; 3], alpha: f64) -> Result<HullFill> {
    if alpha != 0.0 {
        return Err(GeometryError::UnsupportedAlpha(alpha));
    }
    let hull = ConvexHull::build(&cloud.points)?;
    let (lo, hi) = hull.bounds();
    let range = |a: usize| {
        let start = lo[a].ceil().max(0.0) as usize;
        let end = (hi[a].floor().min(dims[a] as f64 - 1.0)).max(-1.0);
        start..(end + 1.0) as usize
    };
    let mut grid = VoxelGrid::zeros(dims, [1.0; 3]);
    for z in range(2) {
        for y in range(1) {
            for x in range(0) {
                if hull.contains([x as f64, y as f64, z as f64]) {
                    grid.set([x, y, z], 1.0);
                }
            }
        }
    }
    Ok(HullFill { grid, simplices: hull.tetrahedra() })
}
