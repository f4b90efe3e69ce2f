use super::TriangleMesh;
use std::collections::HashMap;

const SMOOTHING_WEIGHT: f64 = 0.5;

/// Mesh clean-up after isosurface extraction: keeps the largest connected
/// component, applies `smooth_iters` rounds of uniform Laplacian smoothing,
/// then closes any boundary loop with a triangle fan.
///
/// Components other than the largest are always removed. Dropped components
/// holding at least `min_component_fraction` of all triangles are logged,
/// since losing them usually means the reconstruction split in two.
pub fn postprocess(mesh: &TriangleMesh, min_component_fraction: f64, smooth_iters: usize) -> TriangleMesh {
    if mesh.is_empty() {
        return TriangleMesh::default();
    }
    let mut out = largest_component(mesh, min_component_fraction);
    for _ in 0..smooth_iters {
        laplacian_smooth(&mut out);
    }
    fill_holes(&mut out);
    out
}

fn largest_component(mesh: &TriangleMesh, min_component_fraction: f64) -> TriangleMesh {
    let (ids, sizes) = mesh.triangle_components();
    // ties go to the component seen first
    let keep = (0..sizes.len()).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });
    let total = mesh.triangles.len() as f64;
    for (c, &size) in sizes.iter().enumerate() {
        if c != keep && size as f64 >= min_component_fraction * total {
            log::warn!("dropping mesh component with {size} of {total} triangles");
        }
    }
    let triangles = mesh.triangles.iter().zip(&ids).filter(|(_, &id)| id == keep).map(|(t, _)| *t).collect();
    TriangleMesh { vertices: mesh.vertices.clone(), triangles }.compacted()
}

/// One Jacobi step of `x <- x + w (mean(neighbours) - x)`.
pub fn laplacian_smooth(mesh: &mut TriangleMesh) {
    let n = mesh.vertices.len();
    let mut sum = vec![[0.0f64; 3]; n];
    let mut count = vec![0usize; n];
    let mut edges: Vec<(usize, usize)> = mesh.edge_incidence().into_keys().collect();
    // fixed summation order keeps results reproducible
    edges.sort_unstable();
    for (a, b) in edges {
        for (u, v) in [(a, b), (b, a)] {
            for k in 0..3 {
                sum[u][k] += mesh.vertices[v][k];
            }
            count[u] += 1;
        }
    }
    for i in 0..n {
        if count[i] == 0 {
            continue;
        }
        for k in 0..3 {
            let mean = sum[i][k] / count[i] as f64;
            mesh.vertices[i][k] += SMOOTHING_WEIGHT * (mean - mesh.vertices[i][k]);
        }
    }
}

/// Boundary loops, each following the direction of its boundary edges as
/// they appear in their triangles.
pub fn boundary_loops(mesh: &TriangleMesh) -> Vec<Vec<usize>> {
    let incidence = mesh.edge_incidence();
    let mut outgoing: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut starts = Vec::new();
    for t in &mesh.triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            if incidence[&(a.min(b), a.max(b))] == 1 {
                outgoing.entry(a).or_default().push(b);
                starts.push(a);
            }
        }
    }
    let mut loops = Vec::new();
    for start in starts {
        let mut lp = Vec::new();
        let mut v = start;
        while let Some(next) = outgoing.get_mut(&v).and_then(|o| o.pop()) {
            lp.push(v);
            v = next;
            if v == start {
                break;
            }
        }
        if lp.len() >= 3 {
            loops.push(lp);
        }
    }
    loops
}

/// Fan-triangulates every boundary loop from its first vertex.
pub fn fill_holes(mesh: &mut TriangleMesh) {
    for lp in boundary_loops(mesh) {
        let apex = lp[0];
        for i in 1..lp.len() - 1 {
            let tri = [apex, lp[i + 1], lp[i]];
            if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                mesh.triangles.push(tri);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::marching_cubes;
    use crate::volume::VoxelGrid;

    fn block_mesh() -> TriangleMesh {
        let g = VoxelGrid::from_fn([6, 6, 6], [1.0; 3], |c| c.iter().all(|&v| (1..5).contains(&v)));
        marching_cubes(&g, 0.5).unwrap()
    }

    #[test]
    fn smoothing_keeps_counts() {
        let m = block_mesh();
        for iters in [0, 1, 5] {
            let p = postprocess(&m, 0.05, iters);
            assert_eq!(p.vertices.len(), m.vertices.len());
            assert_eq!(p.triangles.len(), m.triangles.len());
            assert!(p.is_closed());
        }
    }

    #[test]
    fn zero_iterations_is_idempotent() {
        let m = block_mesh();
        let once = postprocess(&m, 0.05, 0);
        assert_eq!(postprocess(&once, 0.05, 0), once);
        assert_eq!(once, m);
    }

    #[test]
    fn open_box_gets_closed() {
        let mut m = block_mesh();
        // remove one triangle fan around a face-centre vertex
        let centre = m.triangles[0][0];
        m.triangles.retain(|t| !t.contains(&centre));
        assert!(!m.is_closed());
        let fixed = postprocess(&m, 0.05, 0);
        assert!(fixed.is_closed());
        assert_eq!(fixed.euler_characteristic(), 2);
    }

    #[test]
    fn empty_in_empty_out() {
        assert!(postprocess(&TriangleMesh::default(), 0.1, 3).is_empty());
    }
}
