//! Triangle meshes and Wavefront OBJ input/output.
//!
//! UVs are stored per face corner (an index triple into the UV table for each
//! face) so that texture seams survive a load/split/save cycle unchanged.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub type Point3 = [f64; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has {0} vertices, at least 3 are required")]
    TooFewVertices(usize),
    #[error("mesh has no faces")]
    NoFaces,
    #[error("face {face} references vertex {index}, but the mesh has {count} vertices")]
    FaceIndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {0} repeats a vertex")]
    DegenerateFace(usize),
    #[error("face {face} references uv {index}, but the mesh has {count} uvs")]
    UvIndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("uv face table has {uv_faces} entries for {faces} faces")]
    UvFaceCountMismatch { faces: usize, uv_faces: usize },
    #[error("obj line {line}: {msg}")]
    Obj { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Material/texture reference carried through from the source OBJ.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TextureRef {
    pub mtllib: Option<String>,
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    pub uvs: Vec<[f64; 2]>,
    /// Per-face UV index triples; empty when the mesh has no texture coordinates.
    pub face_uvs: Vec<[usize; 3]>,
    pub texture: TextureRef,
}

impl Mesh {
    /// Build a mesh without texture coordinates, checking the invariants.
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let mesh = Mesh {
            vertices,
            faces,
            uvs: Vec::new(),
            face_uvs: Vec::new(),
            texture: TextureRef::default(),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.vertices.len() < 3 {
            return Err(MeshError::TooFewVertices(self.vertices.len()));
        }
        if self.faces.is_empty() {
            return Err(MeshError::NoFaces);
        }
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(MeshError::FaceIndexOutOfRange { face: fi, index: i, count: n });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace(fi));
            }
        }
        if !self.face_uvs.is_empty() {
            if self.face_uvs.len() != self.faces.len() {
                return Err(MeshError::UvFaceCountMismatch {
                    faces: self.faces.len(),
                    uv_faces: self.face_uvs.len(),
                });
            }
            for (fi, f) in self.face_uvs.iter().enumerate() {
                for &i in f {
                    if i >= self.uvs.len() {
                        return Err(MeshError::UvIndexOutOfRange {
                            face: fi,
                            index: i,
                            count: self.uvs.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn has_uvs(&self) -> bool {
        !self.face_uvs.is_empty()
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounding_box(&self) -> (Point3, Point3) {
        bounding_box(&self.vertices)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        norm(sub(hi, lo))
    }

    pub fn triangle(&self, face: usize) -> [Point3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Sorted, deduplicated 1-ring neighbours of every vertex.
    pub fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| triangle_area(&self.triangle(f))).sum()
    }

    /// Parse Wavefront OBJ text. Polygons are fan-triangulated.
    pub fn from_obj_str(text: &str) -> Result<Self, MeshError> {
        parse_obj(text)
    }

    pub fn load_obj(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path)?;
        parse_obj(&text)
    }

    /// Serialize as OBJ. Coordinates use the shortest round-tripping decimal
    /// form, so output is deterministic and lossless.
    pub fn to_obj_string(&self) -> String {
        let mut out = String::new();
        if let Some(lib) = &self.texture.mtllib {
            let _ = writeln!(out, "mtllib {lib}");
        }
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
        }
        for t in &self.uvs {
            let _ = writeln!(out, "vt {} {}", t[0], t[1]);
        }
        if let Some(mat) = &self.texture.material {
            let _ = writeln!(out, "usemtl {mat}");
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if self.has_uvs() {
                let t = self.face_uvs[fi];
                let _ = writeln!(
                    out,
                    "f {}/{} {}/{} {}/{}",
                    f[0] + 1,
                    t[0] + 1,
                    f[1] + 1,
                    t[1] + 1,
                    f[2] + 1,
                    t[2] + 1
                );
            } else {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
        out
    }

    pub fn save_obj(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_obj_string())?;
        Ok(())
    }
}

fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    let mut face_uvs: Vec<Option<[usize; 3]>> = Vec::new();
    let mut texture = TextureRef::default();

    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let err = |msg: String| MeshError::Obj { line: line_no, msg };
        match tag {
            "v" => {
                let c = parse_floats(parts, 3).map_err(err)?;
                vertices.push([c[0], c[1], c[2]]);
            }
            "vt" => {
                let c = parse_floats(parts, 2).map_err(err)?;
                uvs.push([c[0], c[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in parts {
                    let mut fields = tok.split('/');
                    let v = resolve_index(fields.next().unwrap_or(""), vertices.len())
                        .map_err(|m| err(format!("bad vertex reference {tok:?}: {m}")))?;
                    let t = match fields.next() {
                        Some(s) if !s.is_empty() => Some(
                            resolve_index(s, uvs.len())
                                .map_err(|m| err(format!("bad uv reference {tok:?}: {m}")))?,
                        ),
                        _ => None,
                    };
                    corners.push((v, t));
                }
                if corners.len() < 3 {
                    return Err(err(format!("face has {} corners", corners.len())));
                }
                for i in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[i], corners[i + 1]];
                    faces.push([tri[0].0, tri[1].0, tri[2].0]);
                    face_uvs.push(match (tri[0].1, tri[1].1, tri[2].1) {
                        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
                        _ => None,
                    });
                }
            }
            "mtllib" => texture.mtllib = Some(line[tag.len()..].trim().to_string()),
            "usemtl" => texture.material = Some(line[tag.len()..].trim().to_string()),
            _ => {}
        }
    }

    // UVs are kept only when every face carries them.
    let face_uvs = if !face_uvs.is_empty() && face_uvs.iter().all(Option::is_some) {
        face_uvs.into_iter().flatten().collect()
    } else {
        Vec::new()
    };
    let uvs = if face_uvs.is_empty() { Vec::new() } else { uvs };
    let mesh = Mesh { vertices, faces, uvs, face_uvs, texture };
    mesh.validate()?;
    Ok(mesh)
}

fn parse_floats<'a>(parts: impl Iterator<Item = &'a str>, n: usize) -> Result<Vec<f64>, String> {
    let vals: Vec<f64> = parts
        .take(n)
        .map(|s| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if vals.len() < n {
        return Err(format!("expected {n} coordinates, found {}", vals.len()));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err("non-finite coordinate".into());
    }
    Ok(vals)
}

/// OBJ indices are 1-based; negative values count back from the end.
fn resolve_index(s: &str, count: usize) -> Result<usize, String> {
    let i: i64 = s.parse().map_err(|e| format!("{e}"))?;
    let resolved = if i > 0 { i - 1 } else if i < 0 { count as i64 + i } else { -1 };
    if resolved < 0 || resolved as usize >= count {
        return Err(format!("index {i} out of range ({count} defined)"));
    }
    Ok(resolved as usize)
}

pub fn bounding_box(points: &[Point3]) -> (Point3, Point3) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

pub fn triangle_area(t: &[Point3; 3]) -> f64 {
    0.5 * norm(cross(sub(t[1], t[0]), sub(t[2], t[0])))
}

/// Closed axis-aligned box `[lo, hi]` as a 12-triangle mesh.
pub fn box_mesh(lo: Point3, hi: Point3) -> Mesh {
    let v = |x: usize, y: usize, z: usize| {
        [
            if x == 0 { lo[0] } else { hi[0] },
            if y == 0 { lo[1] } else { hi[1] },
            if z == 0 { lo[2] } else { hi[2] },
        ]
    };
    let mut vertices = Vec::with_capacity(8);
    for x in 0..2 {
        for y in 0..2 {
            for z in 0..2 {
                vertices.push(v(x, y, z));
            }
        }
    }
    // vertex index = 4x + 2y + z
    let quads = [
        [0, 1, 3, 2], // x = lo
        [4, 6, 7, 5], // x = hi
        [0, 4, 5, 1], // y = lo
        [2, 3, 7, 6], // y = hi
        [0, 2, 6, 4], // z = lo
        [1, 5, 7, 3], // z = hi
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    Mesh::new(vertices, faces).expect("box mesh is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_polygons_uvs_and_materials() {
        let text = "mtllib box.mtl\n# comment\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n\
                    vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nusemtl wood\nf 1/1 2/2 3/3 4/4\n";
        let m = Mesh::from_obj_str(text).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.face_uvs, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.texture.mtllib.as_deref(), Some("box.mtl"));
        assert_eq!(m.texture.material.as_deref(), Some("wood"));

        let again = Mesh::from_obj_str(&m.to_obj_string()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn negative_and_normal_references() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf -3//1 -2//1 -1//1\n";
        let m = Mesh::from_obj_str(text).unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        assert!(!m.has_uvs());
    }

    #[test]
    fn rejects_invalid_meshes() {
        assert!(matches!(
            Mesh::new(vec![[0.0; 3]; 2], vec![[0, 1, 1]]),
            Err(MeshError::TooFewVertices(2))
        ));
        assert!(matches!(
            Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 1]]),
            Err(MeshError::DegenerateFace(0))
        ));
        assert!(matches!(
            Mesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 5]]),
            Err(MeshError::FaceIndexOutOfRange { index: 5, .. })
        ));
        assert!(matches!(
            Mesh::from_obj_str("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n"),
            Err(MeshError::Obj { line: 4, .. })
        ));
        assert!(matches!(Mesh::from_obj_str(""), Err(MeshError::TooFewVertices(0))));
    }

    #[test]
    fn box_mesh_is_closed() {
        let m = box_mesh([0.0; 3], [1.0, 2.0, 3.0]);
        assert_eq!(m.faces.len(), 12);
        assert!((m.surface_area() - 2.0 * (2.0 + 3.0 + 6.0)).abs() < 1e-12);
        // every edge shared by exactly two faces
        let mut edges = std::collections::HashMap::new();
        for f in &m.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *edges.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        assert!(edges.values().all(|&c| c == 2));
    }
}
