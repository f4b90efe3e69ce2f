use super::{GeometryError, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// Indexed triangle mesh in grid coordinates (voxels).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<[f64; 3]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(GeometryError::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= self.vertices.len()) {
                return Err(GeometryError::InvalidMesh(format!("triangle {i} index out of range")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(GeometryError::InvalidMesh(format!("triangle {i} is degenerate")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Number of triangles incident to each undirected edge.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        let mut edges = HashMap::with_capacity(self.triangles.len() * 3 / 2);
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        edges
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_closed(&self) -> bool {
        !self.triangles.is_empty() && self.edge_incidence().values().all(|&c| c == 2)
    }

    /// `V - E + F`, counting only vertices referenced by some triangle.
    pub fn euler_characteristic(&self) -> i64 {
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &k in t {
                used[k] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - self.edge_incidence().len() as i64 + self.triangles.len() as i64
    }

    /// Signed enclosed volume by the divergence theorem; positive for
    /// outward-facing (counter-clockwise seen from outside) triangles.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|k| self.vertices[k]);
                a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0])
            })
            .sum::<f64>()
            / 6.0
    }

    /// Connected components over shared vertices: a component id per
    /// triangle, and the triangle count of every component.
    pub fn triangle_components(&self) -> (Vec<usize>, Vec<usize>) {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for t in &self.triangles {
            let r0 = find(&mut parent, t[0]);
            for &k in &t[1..] {
                let r = find(&mut parent, k);
                if r != r0 {
                    let (lo, hi) = (r.min(r0), r.max(r0));
                    parent[hi] = lo;
                }
            }
        }
        let mut ids = HashMap::new();
        let mut sizes = Vec::new();
        let comp = self
            .triangles
            .iter()
            .map(|t| {
                let root = find(&mut parent, t[0]);
                let id = *ids.entry(root).or_insert_with(|| {
                    sizes.push(0);
                    sizes.len() - 1
                });
                sizes[id] += 1;
                id
            })
            .collect();
        (comp, sizes)
    }

    /// Drops unreferenced vertices, keeping the relative order of the rest.
    pub fn compacted(&self) -> TriangleMesh {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut used = vec![false; self.vertices.len()];
        for t in &self.triangles {
            for &k in t {
                used[k] = true;
            }
        }
        let mut vertices = Vec::new();
        for (i, v) in self.vertices.iter().enumerate() {
            if used[i] {
                remap[i] = vertices.len();
                vertices.push(*v);
            }
        }
        let triangles = self.triangles.iter().map(|t| t.map(|k| remap[k])).collect();
        TriangleMesh { vertices, triangles }
    }

    pub fn reversed(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Applies `f` to every vertex position.
    pub fn transformed(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> TriangleMesh {
        TriangleMesh { vertices: self.vertices.iter().map(|&v| f(v)).collect(), triangles: self.triangles.clone() }
    }

    /// ASCII Wavefront OBJ (`v x y z`, `f i j k`, 1-based).
    pub fn write_obj(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut s = String::with_capacity(self.vertices.len() * 32 + self.triangles.len() * 24);
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v[0], v[1], v[2]));
        }
        for t in &self.triangles {
            s.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
        }
        out.write_all(s.as_bytes())
    }

    /// Reads the `v` and `f` records of an OBJ file. Faces with more than
    /// three vertices are fan-triangulated; `v/vt/vn` index forms are
    /// accepted and only the position index is used.
    pub fn read_obj(input: impl BufRead) -> Result<TriangleMesh> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let parse_err = |what: &str| GeometryError::Parse(format!("line {}: {what}", lineno + 1));
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts
                        .take(3)
                        .map(|p| p.parse::<f64>().map_err(|_| parse_err("bad vertex coordinate")))
                        .collect::<Result<_>>()?;
                    if c.len() != 3 {
                        return Err(parse_err("vertex needs 3 coordinates"));
                    }
                    vertices.push([c[0], c[1], c[2]]);
                }
                Some("f") => {
                    let idx: Vec<usize> = parts
                        .map(|p| {
                            let first = p.split('/').next().unwrap_or("");
                            match first.parse::<usize>() {
                                Ok(i) if i >= 1 => Ok(i - 1),
                                _ => Err(parse_err("bad face index")),
                            }
                        })
                        .collect::<Result<_>>()?;
                    if idx.len() < 3 {
                        return Err(parse_err("face needs at least 3 vertices"));
                    }
                    for k in 1..idx.len() - 1 {
                        triangles.push([idx[0], idx[k], idx[k + 1]]);
                    }
                }
                _ => {}
            }
        }
        TriangleMesh::new(vertices, triangles)
    }

    /// Binary STL: 80-byte header, u32 triangle count, then per triangle a
    /// normal and three vertices as f32 plus a zero u16 attribute.
    pub fn write_stl(&self, mut out: impl Write) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(84 + self.triangles.len() * 50);
        let mut header = [0u8; 80];
        let tag = b"atriamap binary STL";
        header[..tag.len()].copy_from_slice(tag);
        buf.extend_from_slice(&header);
        buf.extend_from_slice(&(self.triangles.len() as u32).to_le_bytes());
        for t in &self.triangles {
            let [a, b, c] = t.map(|k| self.vertices[k]);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let n = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            let n = if len > 0.0 { n.map(|x| x / len) } else { [0.0; 3] };
            for p in [n, a, b, c] {
                for x in p {
                    buf.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
            buf.extend_from_slice(&0u16.to_le_bytes());
        }
        out.write_all(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tetrahedron() -> TriangleMesh {
        TriangleMesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn tetrahedron_invariants() {
        let t = tetrahedron();
        assert!(t.is_closed());
        assert_eq!(t.euler_characteristic(), 2);
        assert!((t.signed_volume() - 1.0 / 6.0).abs() < 1e-15);
        assert!((t.reversed().signed_volume() + 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_bad_triangles() {
        assert!(TriangleMesh::new(vec![[0.0; 3]; 3], vec![[0, 0, 1]]).is_err());
        assert!(TriangleMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(vec![[f64::NAN, 0.0, 0.0]], vec![]).is_err());
    }

    #[test]
    fn obj_roundtrip_and_stl_size() {
        let t = tetrahedron();
        let mut buf = Vec::new();
        t.write_obj(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("v 0 0 0\n"));
        assert!(text.contains("f 1 3 2\n"));
        assert_eq!(TriangleMesh::read_obj(&buf[..]).unwrap(), t);

        let mut stl = Vec::new();
        t.write_stl(&mut stl).unwrap();
        assert_eq!(stl.len(), 84 + 4 * 50);
        assert_eq!(u32::from_le_bytes(stl[80..84].try_into().unwrap()), 4);
    }

    #[test]
    fn obj_quads_are_fanned() {
        let src = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n";
        let m = TriangleMesh::read_obj(src.as_bytes()).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn components_split_disjoint_parts() {
        let t = tetrahedron();
        let mut two = t.clone();
        let off = two.vertices.len();
        two.vertices.extend(t.vertices.iter().map(|v| [v[0] + 5.0, v[1], v[2]]));
        two.triangles.extend(t.triangles.iter().map(|tri| tri.map(|k| k + off)));
        let (ids, sizes) = two.triangle_components();
        assert_eq!(sizes, vec![4, 4]);
        assert_eq!(ids, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }
}
