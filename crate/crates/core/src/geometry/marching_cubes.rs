//! Marching cubes over a zero-padded voxel grid.
//!
//! The 256-entry case table is generated rather than transcribed. For every
//! corner configuration the iso-line segments are first fixed on each of the
//! six cube faces, then chained into closed polygons:
//!
//! * walking a face's corners counter-clockwise (seen from outside), each
//!   crossing from an outside to an inside corner is joined to the next
//!   crossing back out. On an ambiguous face (two diagonal inside corners)
//!   this always cuts the two inside corners off separately, so they are
//!   never connected across the face.
//! * the rule only looks at the face's own corners, so the two cubes that
//!   share a face produce the same segments there, traversed in opposite
//!   directions. Every mesh edge on a cube face is therefore shared by
//!   exactly two triangles and the output is closed once the grid is padded.
//! * triangles stay as they are; larger polygons are split into a fan
//!   around an extra vertex at the polygon centroid, which never creates an
//!   edge that a neighbouring cube could also produce and keeps the
//!   triangulation symmetric under mirroring.
//!
//! No asymptotic decider is used, so tunnels through ambiguous faces are
//! never opened; thin structures joined only across a face diagonal come out
//! as separate pieces.

use super::{GeometryError, Result, TriangleMesh};
use crate::volume::VoxelGrid;
use std::sync::OnceLock;

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Face corner cycles; orientation is normalised in `face_cycles`.
const FACES: [[usize; 4]; 6] =
    [[0, 1, 2, 3], [4, 5, 6, 7], [0, 1, 5, 4], [3, 2, 6, 7], [0, 3, 7, 4], [1, 2, 6, 5]];

/// Closed iso-polygons of one corner configuration, as cyclic lists of cube
/// edge ids oriented with the inside region behind them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CubeCase {
    pub polygons: Vec<Vec<u8>>,
}

fn edge_id(a: usize, b: usize) -> u8 {
    EDGES.iter().position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a)).unwrap() as u8
}

/// Face corner cycles ordered counter-clockwise seen from outside the cube.
fn face_cycles() -> [[usize; 4]; 6] {
    FACES.map(|f| {
        let p = f.map(|c| CORNERS[c].map(|v| v as f64));
        let u = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
        let w = [p[2][0] - p[1][0], p[2][1] - p[1][1], p[2][2] - p[1][2]];
        let n = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
        let centre: Vec<f64> = (0..3).map(|a| p.iter().map(|q| q[a]).sum::<f64>() / 4.0 - 0.5).collect();
        let outward = n[0] * centre[0] + n[1] * centre[1] + n[2] * centre[2];
        if outward > 0.0 {
            f
        } else {
            [f[0], f[3], f[2], f[1]]
        }
    })
}

fn build_case(mask: u8, faces: &[[usize; 4]; 6]) -> CubeCase {
    let inside = |c: usize| mask & (1 << c) != 0;
    let mut next = [u8::MAX; 12];
    for face in faces {
        // (edge, is_entry) in counter-clockwise order
        let crossings: Vec<(u8, bool)> = (0..4)
            .filter_map(|k| {
                let (a, b) = (face[k], face[(k + 1) % 4]);
                (inside(a) != inside(b)).then(|| (edge_id(a, b), inside(b)))
            })
            .collect();
        for (i, &(edge, entry)) in crossings.iter().enumerate() {
            if !entry {
                continue;
            }
            let exit = (1..crossings.len())
                .map(|s| crossings[(i + s) % crossings.len()])
                .find(|&(_, is_entry)| !is_entry)
                .expect("every entry crossing has a matching exit");
            next[edge as usize] = exit.0;
        }
    }
    let mut seen = [false; 12];
    let mut polygons = Vec::new();
    for start in 0..12u8 {
        if next[start as usize] == u8::MAX || seen[start as usize] {
            continue;
        }
        let mut poly = Vec::new();
        let mut e = start;
        while !seen[e as usize] {
            seen[e as usize] = true;
            poly.push(e);
            e = next[e as usize];
        }
        polygons.push(poly);
    }
    CubeCase { polygons }
}

/// Polygon orientation produced by `build_case` relative to outward normals
/// (pointing from inside to outside), decided once on the single-corner case.
fn needs_flip(table: &[CubeCase]) -> bool {
    let poly = &table[1].polygons[0];
    let mid = |e: u8| {
        let [a, b] = EDGES[e as usize];
        let (pa, pb) = (CORNERS[a], CORNERS[b]);
        [0, 1, 2].map(|i| (pa[i] + pb[i]) as f64 / 2.0)
    };
    let [p, q, r] = [mid(poly[0]), mid(poly[1]), mid(poly[2])];
    let u = [q[0] - p[0], q[1] - p[1], q[2] - p[2]];
    let w = [r[0] - p[0], r[1] - p[1], r[2] - p[2]];
    let n = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
    // corner 0 is the only inside corner; the outward normal points away from it
    n[0] * p[0] + n[1] * p[1] + n[2] * p[2] < 0.0
}

/// The generated case table, indexed by a mask with bit `i` set when corner
/// `i` is inside.
pub fn case_table() -> &'static [CubeCase] {
    static TABLE: OnceLock<Vec<CubeCase>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = face_cycles();
        let mut table: Vec<CubeCase> = (0..=255u8).map(|m| build_case(m, &faces)).collect();
        if needs_flip(&table) {
            for case in &mut table {
                for poly in &mut case.polygons {
                    poly.reverse();
                }
            }
        }
        table
    })
}

/// Extracts the `threshold` level set of `grid`; a voxel is inside when its
/// value exceeds the threshold. The grid is padded with one layer of zeros,
/// so the result is closed. Vertices are placed by linear interpolation
/// along lattice edges and reported in grid coordinates of the unpadded grid.
pub fn marching_cubes(grid: &VoxelGrid, threshold: f32) -> Result<TriangleMesh> {
    let dims = grid.dims();
    if dims.iter().any(|&d| d < 2) {
        return Err(GeometryError::InvalidInput(format!("grid dims {dims:?} must be at least 2 per axis")));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(GeometryError::InvalidInput(format!("threshold {threshold} outside (0, 1)")));
    }
    let table = case_table();
    let pd = dims.map(|d| d + 2);
    let value = |p: [usize; 3]| grid.get_or_zero([p[0] as isize - 1, p[1] as isize - 1, p[2] as isize - 1]);
    let lattice = |p: [usize; 3]| p[0] + pd[0] * (p[1] + pd[1] * p[2]);

    let mut edge_vertex = vec![usize::MAX; lattice([pd[0] - 1, pd[1] - 1, pd[2] - 1]) * 3 + 3];
    let mut mesh = TriangleMesh::default();

    for z in 0..pd[2] - 1 {
        for y in 0..pd[1] - 1 {
            for x in 0..pd[0] - 1 {
                let corner_pos = CORNERS.map(|c| [x + c[0], y + c[1], z + c[2]]);
                let corner_val = corner_pos.map(value);
                let mut mask = 0u8;
                for (i, &v) in corner_val.iter().enumerate() {
                    if v > threshold {
                        mask |= 1 << i;
                    }
                }
                if mask == 0 || mask == 255 {
                    continue;
                }
                for poly in &table[mask as usize].polygons {
                    let ids: Vec<usize> = poly
                        .iter()
                        .map(|&e| {
                            let [a, b] = EDGES[e as usize];
                            let (pa, pb) = (corner_pos[a], corner_pos[b]);
                            let (lo, va, vb, hi) =
                                if pa <= pb { (pa, corner_val[a], corner_val[b], pb) } else { (pb, corner_val[b], corner_val[a], pa) };
                            let axis = (0..3).find(|&i| lo[i] != hi[i]).unwrap();
                            let key = lattice(lo) * 3 + axis;
                            if edge_vertex[key] == usize::MAX {
                                let t = ((threshold - va) / (vb - va)) as f64;
                                let mut v = lo.map(|c| c as f64 - 1.0);
                                v[axis] += t;
                                edge_vertex[key] = mesh.vertices.len();
                                mesh.vertices.push(v);
                            }
                            edge_vertex[key]
                        })
                        .collect();
                    if ids.len() == 3 {
                        mesh.triangles.push([ids[0], ids[1], ids[2]]);
                    } else {
                        let n = ids.len() as f64;
                        let centre = [0, 1, 2].map(|a| ids.iter().map(|&k| mesh.vertices[k][a]).sum::<f64>() / n);
                        let c = mesh.vertices.len();
                        mesh.vertices.push(centre);
                        for k in 0..ids.len() {
                            mesh.triangles.push([c, ids[k], ids[(k + 1) % ids.len()]]);
                        }
                    }
                }
            }
        }
    }
    Ok(mesh)
}
