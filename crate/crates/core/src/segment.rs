//! Seed-driven part segmentation of the original mesh.
//!
//! Decoded per-part voxels become seed points in the mesh frame. Each vertex
//! gets a Gaussian affinity to the nearest seed of every part, the affinities
//! are smoothed over the vertex graph, and faces take the majority of their
//! vertices' argmax labels.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::mesh::{Mesh, MeshError, Point3};
use crate::spatial::KdTree;
use crate::voxel::{NormalizationTransform, OccupancyGrid};

pub type PartId = u32;

/// Fraction of the bounding-box diagonal used as the default kernel width.
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("part {0} has no occupied cells")]
    EmptyPart(PartId),
    #[error("no parts given")]
    NoParts,
    #[error("part id {0} appears more than once")]
    DuplicatePart(PartId),
    #[error("part grids disagree in resolution: {first:?} vs {other:?}")]
    ResolutionMismatch { first: [usize; 3], other: [usize; 3] },
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("{what}: expected {expected} entries, found {found}")]
    SizeMismatch { what: &'static str, expected: usize, found: usize },
    #[error("labels line {line}: {reason}")]
    BadLabels { line: usize, reason: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Seed points per part, ordered by ascending part id.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    parts: Vec<(PartId, Vec<Point3>)>,
}

impl SeedSet {
    pub fn new(parts: impl IntoIterator<Item = (PartId, Vec<Point3>)>) -> Result<Self, SegmentError> {
        let mut map = BTreeMap::new();
        for (id, seeds) in parts {
            if seeds.is_empty() {
                return Err(SegmentError::EmptyPart(id));
            }
            if map.insert(id, seeds).is_some() {
                return Err(SegmentError::DuplicatePart(id));
            }
        }
        if map.is_empty() {
            return Err(SegmentError::NoParts);
        }
        Ok(SeedSet { parts: map.into_iter().collect() })
    }

    pub fn ids(&self) -> Vec<PartId> {
        self.parts.iter().map(|(id, _)| *id).collect()
    }

    pub fn parts(&self) -> &[(PartId, Vec<Point3>)] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn seed_count(&self, id: PartId) -> usize {
        self.parts.iter().find(|(p, _)| *p == id).map_or(0, |(_, s)| s.len())
    }
}

/// Occupied cell centres of each part grid, mapped back to the mesh frame.
pub fn extract_seeds(
    part_grids: &[(PartId, OccupancyGrid)],
    transform: &NormalizationTransform,
) -> Result<SeedSet, SegmentError> {
    let first = part_grids.first().ok_or(SegmentError::NoParts)?.1.dims();
    let mut parts = Vec::with_capacity(part_grids.len());
    for (id, grid) in part_grids {
        if grid.dims() != first {
            return Err(SegmentError::ResolutionMismatch { first, other: grid.dims() });
        }
        let seeds: Vec<Point3> = grid.occupied_centers().into_iter().map(|c| transform.invert(c)).collect();
        parts.push((*id, seeds));
    }
    SeedSet::new(parts)
}

/// Row-major `vertices × parts` matrix; columns follow `parts`.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexProbabilities {
    pub parts: Vec<PartId>,
    pub data: Vec<f64>,
}

impl VertexProbabilities {
    pub fn vertex_count(&self) -> usize {
        if self.parts.is_empty() {
            0
        } else {
            self.data.len() / self.parts.len()
        }
    }

    pub fn row(&self, v: usize) -> &[f64] {
        let k = self.parts.len();
        &self.data[v * k..(v + 1) * k]
    }

    /// Column of the largest entry, lowest column on ties.
    pub fn argmax(&self, v: usize) -> usize {
        let row = self.row(v);
        let mut best = 0;
        for (p, &x) in row.iter().enumerate() {
            if x > row[best] {
                best = p;
            }
        }
        best
    }
}

fn normalize_row(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 && s.is_finite() {
        row.iter_mut().for_each(|x| *x /= s);
    } else {
        let u = 1.0 / row.len() as f64;
        row.iter_mut().for_each(|x| *x = u);
    }
}

/// Gaussian kernel on the distance to each part's nearest seed, normalized
/// over parts.
///
/// Kernels are evaluated relative to the closest part, which leaves the
/// normalized values unchanged but keeps far-away vertices from underflowing
/// to an all-zero row.
pub fn init_probabilities(
    mesh: &Mesh,
    seeds: &SeedSet,
    sigma: f64,
    exec: Exec,
) -> Result<VertexProbabilities, SegmentError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SegmentError::InvalidSigma(sigma));
    }
    let trees: Vec<KdTree> = seeds.parts.iter().map(|(_, s)| KdTree::new(s.clone())).collect();
    let d2: Vec<Vec<f64>> = trees.iter().map(|t| t.nearest_dist2_many(&mesh.vertices, exec)).collect();
    let k = trees.len();
    let inv = 1.0 / (2.0 * sigma * sigma);
    let rows: Vec<Vec<f64>> = exec::map_range(exec, mesh.vertices.len(), |v| {
        let min = (0..k).map(|p| d2[p][v]).fold(f64::INFINITY, f64::min);
        let mut row: Vec<f64> = (0..k).map(|p| (-(d2[p][v] - min) * inv).exp()).collect();
        normalize_row(&mut row);
        row
    });
    Ok(VertexProbabilities { parts: seeds.ids(), data: rows.concat() })
}

/// `iterations` rounds of `P <- alpha P + (1 - alpha) A P` with `A` the
/// row-normalized 1-ring adjacency; isolated vertices use a self loop. Each
/// row stays a convex combination of normalized rows, so no renormalization
/// is applied.
pub fn smooth_probabilities(
    probs: &VertexProbabilities,
    adjacency: &[Vec<usize>],
    alpha: f64,
    iterations: usize,
    exec: Exec,
) -> Result<VertexProbabilities, SegmentError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(SegmentError::InvalidAlpha(alpha));
    }
    let n = probs.vertex_count();
    if adjacency.len() != n {
        return Err(SegmentError::SizeMismatch { what: "adjacency", expected: n, found: adjacency.len() });
    }
    let k = probs.parts.len();
    let mut cur = probs.data.clone();
    for _ in 0..iterations {
        let mut next = vec![0.0; cur.len()];
        exec::for_each_chunk_mut(exec, &mut next, k, |v, out| {
            let own = &cur[v * k..(v + 1) * k];
            let nbrs = &adjacency[v];
            for p in 0..k {
                let avg = if nbrs.is_empty() {
                    own[p]
                } else {
                    nbrs.iter().map(|&u| cur[u * k + p]).sum::<f64>() / nbrs.len() as f64
                };
                out[p] = alpha * own[p] + (1.0 - alpha) * avg;
            }
        });
        cur = next;
    }
    Ok(VertexProbabilities { parts: probs.parts.clone(), data: cur })
}

/// Vertex argmax labels, then a per-face majority vote; a three-way split
/// goes to the lowest part id.
pub fn label_faces(probs: &VertexProbabilities, mesh: &Mesh) -> Result<Vec<PartId>, SegmentError> {
    let n = mesh.vertices.len();
    if probs.vertex_count() != n {
        return Err(SegmentError::SizeMismatch { what: "probability rows", expected: n, found: probs.vertex_count() });
    }
    let vertex: Vec<usize> = (0..n).map(|v| probs.argmax(v)).collect();
    let labels = mesh
        .faces
        .iter()
        .map(|f| {
            let [a, b, c] = [vertex[f[0]], vertex[f[1]], vertex[f[2]]];
            let col = if a == b || a == c {
                a
            } else if b == c {
                b
            } else {
                a.min(b).min(c)
            };
            probs.parts[col]
        })
        .collect();
    Ok(labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    /// Kernel width in mesh units; `None` uses a fraction of the bounding-box
    /// diagonal.
    pub sigma: Option<f64>,
    pub alpha: f64,
    pub iterations: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams { sigma: None, alpha: DEFAULT_ALPHA, iterations: DEFAULT_ITERATIONS }
    }
}

impl SegmentParams {
    pub fn sigma_for(&self, mesh: &Mesh) -> f64 {
        self.sigma.unwrap_or_else(|| DEFAULT_SIGMA_FRACTION * mesh.bbox_diagonal())
    }
}

/// Initialize, smooth and vote in one call.
pub fn segment_mesh(
    mesh: &Mesh,
    seeds: &SeedSet,
    params: &SegmentParams,
    exec: Exec,
) -> Result<Vec<PartId>, SegmentError> {
    let p = init_probabilities(mesh, seeds, params.sigma_for(mesh), exec)?;
    let p = smooth_probabilities(&p, &mesh.vertex_adjacency(), params.alpha, params.iterations, exec)?;
    label_faces(&p, mesh)
}

/// One submesh per label present, in ascending id order. Vertices and UVs are
/// re-indexed in first-use order; the texture reference is copied.
pub fn split_mesh(mesh: &Mesh, labels: &[PartId]) -> Result<Vec<(PartId, Mesh)>, SegmentError> {
    if labels.len() != mesh.faces.len() {
        return Err(SegmentError::SizeMismatch { what: "face labels", expected: mesh.faces.len(), found: labels.len() });
    }
    let mut groups: BTreeMap<PartId, Vec<usize>> = BTreeMap::new();
    for (f, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(f);
    }
    let mut out = Vec::with_capacity(groups.len());
    for (id, faces) in groups {
        let mut vmap = HashMap::new();
        let mut tmap = HashMap::new();
        let mut sub = Mesh {
            vertices: Vec::new(),
            faces: Vec::with_capacity(faces.len()),
            uvs: Vec::new(),
            face_uvs: Vec::new(),
            texture: mesh.texture.clone(),
        };
        for f in faces {
            let tri = mesh.faces[f].map(|v| {
                *vmap.entry(v).or_insert_with(|| {
                    sub.vertices.push(mesh.vertices[v]);
                    sub.vertices.len() - 1
                })
            });
            sub.faces.push(tri);
            if mesh.has_uvs() {
                let uv = mesh.face_uvs[f].map(|t| {
                    *tmap.entry(t).or_insert_with(|| {
                        sub.uvs.push(mesh.uvs[t]);
                        sub.uvs.len() - 1
                    })
                });
                sub.face_uvs.push(uv);
            }
        }
        out.push((id, sub));
    }
    Ok(out)
}

/// One entry of the parts manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartEntry {
    pub file: String,
    pub face_count: usize,
    pub seed_count: usize,
}

pub type PartsManifest = BTreeMap<String, PartEntry>;

/// Write `part_<id>.obj` for every submesh into `dir` and return the manifest
/// (keys are part ids, file paths relative to `dir`).
pub fn write_parts(dir: &Path, parts: &[(PartId, Mesh)], seeds: &SeedSet) -> Result<PartsManifest, SegmentError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = PartsManifest::new();
    for (id, mesh) in parts {
        let file = format!("part_{id}.obj");
        mesh.save_obj(&dir.join(&file))?;
        manifest.insert(
            id.to_string(),
            PartEntry { file, face_count: mesh.faces.len(), seed_count: seeds.seed_count(*id) },
        );
    }
    Ok(manifest)
}

pub fn manifest_json(manifest: &PartsManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

/// One label per line, in face order.
pub fn labels_to_string(labels: &[PartId]) -> String {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    s
}

pub fn parse_labels(text: &str) -> Result<Vec<PartId>, SegmentError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|e: std::num::ParseIntError| SegmentError::BadLabels { line: i + 1, reason: e.to_string() })
        })
        .collect()
}
