//! Mesh normalization, surface voxelization and occupancy grids.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::exec::{self, Exec};
use crate::mesh::{bounding_box, cross, dot, sub, Mesh, MeshError, Point3};

/// Default voxel resolution of the geometry grid.
pub const DEFAULT_RESOLUTION: usize = 64;
/// Largest resolution `voxelize_mesh` accepts unless configured otherwise.
pub const DEFAULT_MAX_RESOLUTION: usize = 512;
/// One voxel at the default resolution.
pub const DEFAULT_MARGIN: f64 = 1.0 / 64.0;

const GRID_MAGIC: &[u8; 4] = b"AVGX";
const UNIT_CUBE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum VoxelError {
    #[error("all mesh vertices coincide")]
    ZeroExtentMesh,
    #[error("margin {0} must lie in [0, 0.5)")]
    InvalidMargin(f64),
    #[error("resolution {requested} exceeds the cap of {cap}")]
    ResolutionTooLarge { requested: usize, cap: usize },
    #[error("resolution must be positive")]
    ZeroResolution,
    #[error("vertex {index} at {point:?} lies outside the unit cube; normalize the mesh first")]
    NotNormalized { index: usize, point: Point3 },
    #[error("grid resolutions differ: {0:?} vs {1:?}")]
    ResolutionMismatch([usize; 3], [usize; 3]),
    #[error("invalid grid file: {0}")]
    BadGridFile(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform scale followed by translation: `p' = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform {
    pub translation: Point3,
    pub scale: f64,
}

impl NormalizationTransform {
    pub const IDENTITY: Self = Self { translation: [0.0; 3], scale: 1.0 };

    pub fn apply(&self, p: Point3) -> Point3 {
        [
            self.scale * p[0] + self.translation[0],
            self.scale * p[1] + self.translation[1],
            self.scale * p[2] + self.translation[2],
        ]
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        [
            (p[0] - self.translation[0]) / self.scale,
            (p[1] - self.translation[1]) / self.scale,
            (p[2] - self.translation[2]) / self.scale,
        ]
    }

    /// Map a length in normalized units back to mesh units.
    pub fn invert_length(&self, len: f64) -> f64 {
        len / self.scale
    }
}

/// Fit the mesh into `[margin, 1 - margin]^3`, centred on (0.5, 0.5, 0.5),
/// with a uniform scale set by the longest bounding-box axis.
pub fn normalize_mesh(mesh: &Mesh, margin: f64) -> Result<(Mesh, NormalizationTransform), VoxelError> {
    if !(0.0..0.5).contains(&margin) {
        return Err(VoxelError::InvalidMargin(margin));
    }
    let transform = normalization_for(&mesh.vertices, margin)?;
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = transform.apply(*v);
    }
    Ok((out, transform))
}

/// The transform `normalize_mesh` would apply to these points.
pub fn normalization_for(points: &[Point3], margin: f64) -> Result<NormalizationTransform, VoxelError> {
    let (lo, hi) = bounding_box(points);
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0f64, f64::max);
    if !(extent > 0.0) {
        return Err(VoxelError::ZeroExtentMesh);
    }
    let scale = (1.0 - 2.0 * margin) / extent;
    let mut translation = [0.0; 3];
    for a in 0..3 {
        let center = 0.5 * (lo[a] + hi[a]);
        translation[a] = 0.5 - scale * center;
    }
    Ok(NormalizationTransform { translation, scale })
}

/// Dense bit-set of occupied cells, stored x-major (x slowest, z fastest).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct OccupancyGrid {
    dims: [usize; 3],
    words: Vec<u64>,
}

impl std::fmt::Debug for OccupancyGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OccupancyGrid")
            .field("dims", &self.dims)
            .field("occupied", &self.count())
            .finish()
    }
}

impl OccupancyGrid {
    pub fn new(dims: [usize; 3]) -> Self {
        let cells = dims[0] * dims[1] * dims[2];
        Self { dims, words: vec![0; cells.div_ceil(64)] }
    }

    pub fn cubic(resolution: usize) -> Self {
        Self::new([resolution; 3])
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let z = i % self.dims[2];
        let y = (i / self.dims[2]) % self.dims[1];
        let x = i / (self.dims[1] * self.dims[2]);
        [x, y, z]
    }

    #[inline]
    pub fn get_linear(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.get_linear(self.linear(x, y, z))
    }

    #[inline]
    pub fn set_linear(&mut self, i: usize, value: bool) {
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.linear(x, y, z);
        self.set_linear(i, value);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn occupancy_fraction(&self) -> f64 {
        self.count() as f64 / self.cell_count() as f64
    }

    /// Linear indices of occupied cells in ascending order.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }

    /// Centre of a cell in normalized `[0,1]` coordinates.
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Point3 {
        [
            (x as f64 + 0.5) / self.dims[0] as f64,
            (y as f64 + 0.5) / self.dims[1] as f64,
            (z as f64 + 0.5) / self.dims[2] as f64,
        ]
    }

    /// Normalized centres of all occupied cells, ascending linear order.
    pub fn occupied_centers(&self) -> Vec<Point3> {
        self.occupied()
            .map(|i| {
                let [x, y, z] = self.coords(i);
                self.cell_center(x, y, z)
            })
            .collect()
    }

    fn check_same_dims(&self, other: &Self) -> Result<(), VoxelError> {
        if self.dims != other.dims {
            return Err(VoxelError::ResolutionMismatch(self.dims, other.dims));
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &Self) -> Result<usize, VoxelError> {
        self.check_same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum())
    }

    pub fn union_count(&self, other: &Self) -> Result<usize, VoxelError> {
        self.check_same_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum())
    }

    pub fn union_with(&mut self, other: &Self) -> Result<(), VoxelError> {
        self.check_same_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        Ok(())
    }

    /// Packed bytes, LSB-first within each byte, x-major cell order.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let n = self.cell_count();
        let mut bytes: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(n.div_ceil(8));
        bytes
    }

    pub fn from_packed_bytes(dims: [usize; 3], bytes: &[u8]) -> Result<Self, VoxelError> {
        let mut grid = Self::new(dims);
        let n = grid.cell_count();
        if bytes.len() != n.div_ceil(8) {
            return Err(VoxelError::BadGridFile(format!(
                "expected {} payload bytes, found {}",
                n.div_ceil(8),
                bytes.len()
            )));
        }
        for (wi, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            grid.words[wi] = u64::from_le_bytes(buf);
        }
        if !n.is_multiple_of(8) && bytes[bytes.len() - 1] >> (n % 8) != 0 {
            return Err(VoxelError::BadGridFile("non-zero padding bits".into()));
        }
        Ok(grid)
    }

    /// Grid file: magic "AVGX", three little-endian u32 dims, packed bits.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), VoxelError> {
        w.write_all(GRID_MAGIC)?;
        for d in self.dims {
            let d = u32::try_from(d).map_err(|_| VoxelError::BadGridFile("dimension exceeds u32".into()))?;
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&self.to_packed_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, VoxelError> {
        let mut header = [0u8; 16];
        r.read_exact(&mut header)
            .map_err(|_| VoxelError::BadGridFile("truncated header".into()))?;
        if &header[..4] != GRID_MAGIC {
            return Err(VoxelError::BadGridFile("bad magic".into()));
        }
        let mut dims = [0usize; 3];
        for (a, d) in dims.iter_mut().enumerate() {
            let b = &header[4 + 4 * a..8 + 4 * a];
            *d = u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize;
        }
        if dims.iter().any(|&d| d == 0 || d > 4096) {
            return Err(VoxelError::BadGridFile(format!("implausible dims {dims:?}")));
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        Self::from_packed_bytes(dims, &payload)
    }

    pub fn save(&self, path: &Path) -> Result<(), VoxelError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VoxelError> {
        let bytes = std::fs::read(path)?;
        Self::read_from(bytes.as_slice())
    }
}

/// Intersection over union; two empty grids score 1.
pub fn grid_iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64, VoxelError> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Surface voxelization with the default cap and parallel execution.
pub fn voxelize_mesh(mesh: &Mesh, resolution: usize) -> Result<OccupancyGrid, VoxelError> {
    Voxelizer::default().voxelize(mesh, resolution)
}

#[derive(Debug, Clone, Copy)]
pub struct Voxelizer {
    pub max_resolution: usize,
    pub exec: Exec,
}

impl Default for Voxelizer {
    fn default() -> Self {
        Self { max_resolution: DEFAULT_MAX_RESOLUTION, exec: Exec::default() }
    }
}

impl Voxelizer {
    /// Mark every cell whose closed box overlaps at least one triangle.
    /// The mesh must already lie in the unit cube.
    pub fn voxelize(&self, mesh: &Mesh, resolution: usize) -> Result<OccupancyGrid, VoxelError> {
        if resolution == 0 {
            return Err(VoxelError::ZeroResolution);
        }
        if resolution > self.max_resolution {
            return Err(VoxelError::ResolutionTooLarge { requested: resolution, cap: self.max_resolution });
        }
        mesh.validate()?;
        for (index, p) in mesh.vertices.iter().enumerate() {
            if p.iter().any(|&c| !(-UNIT_CUBE_TOLERANCE..=1.0 + UNIT_CUBE_TOLERANCE).contains(&c)) {
                return Err(VoxelError::NotNormalized { index, point: *p });
            }
        }

        let res = resolution;
        let cell = 1.0 / res as f64;
        let half = [0.5 * cell; 3];
        let per_face: Vec<Vec<usize>> = exec::map_range(self.exec, mesh.faces.len(), |f| {
            let tri = mesh.triangle(f);
            let (lo, hi) = bounding_box(&tri);
            let range = |a: usize| {
                let first = ((lo[a] * res as f64).floor() as i64 - 1).max(0) as usize;
                let last = ((hi[a] * res as f64).floor() as i64 + 1).min(res as i64 - 1) as usize;
                first..=last
            };
            let mut hits = Vec::new();
            for x in range(0) {
                for y in range(1) {
                    for z in range(2) {
                        let center = [
                            (x as f64 + 0.5) * cell,
                            (y as f64 + 0.5) * cell,
                            (z as f64 + 0.5) * cell,
                        ];
                        if triangle_box_overlap(center, half, &tri) {
                            hits.push((x * res + y) * res + z);
                        }
                    }
                }
            }
            hits
        });

        let mut grid = OccupancyGrid::cubic(res);
        for i in per_face.into_iter().flatten() {
            grid.set_linear(i, true);
        }
        Ok(grid)
    }
}

/// Separating-axis test between a triangle and a closed axis-aligned box
/// (Akenine-Möller). Touching counts as overlap.
pub fn triangle_box_overlap(center: Point3, half: Point3, tri: &[Point3; 3]) -> bool {
    let v0 = sub(tri[0], center);
    let v1 = sub(tri[1], center);
    let v2 = sub(tri[2], center);
    let e0 = sub(v1, v0);
    let e1 = sub(v2, v1);
    let e2 = sub(v0, v2);

    // Nine edge cross-product axes.
    for e in [e0, e1, e2] {
        for a in 0..3 {
            let mut axis = [0.0; 3];
            axis[a] = 1.0;
            let axis = cross(axis, e);
            let p0 = dot(v0, axis);
            let p1 = dot(v1, axis);
            let p2 = dot(v2, axis);
            let r = half[0] * axis[0].abs() + half[1] * axis[1].abs() + half[2] * axis[2].abs();
            let mn = p0.min(p1).min(p2);
            let mx = p0.max(p1).max(p2);
            if mn > r || mx < -r {
                return false;
            }
        }
    }

    // Box face normals.
    for a in 0..3 {
        let mn = v0[a].min(v1[a]).min(v2[a]);
        let mx = v0[a].max(v1[a]).max(v2[a]);
        if mn > half[a] || mx < -half[a] {
            return false;
        }
    }

    // Triangle plane.
    let normal = cross(e0, e1);
    let d = dot(normal, v0);
    let r = half[0] * normal[0].abs() + half[1] * normal[1].abs() + half[2] * normal[2].abs();
    d.abs() <= r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::box_mesh;

    #[test]
    fn normalize_unit_cube_is_identity() {
        let m = box_mesh([0.0; 3], [1.0; 3]);
        let (n, t) = normalize_mesh(&m, 0.0).unwrap();
        assert_eq!(t.scale, 1.0);
        assert_eq!(t.translation, [0.0; 3]);
        assert_eq!(n.vertices, m.vertices);
    }

    #[test]
    fn normalize_double_cube_halves() {
        let m = box_mesh([0.0; 3], [2.0; 3]);
        let (n, t) = normalize_mesh(&m, 0.0).unwrap();
        assert_eq!(t.scale, 0.5);
        let (lo, hi) = n.bounding_box();
        assert_eq!(lo, [0.0; 3]);
        assert_eq!(hi, [1.0; 3]);
    }

    #[test]
    fn normalize_respects_margin_and_centres() {
        let m = box_mesh([-3.0, 1.0, 2.0], [5.0, 2.0, 4.0]);
        let (n, _) = normalize_mesh(&m, 0.1).unwrap();
        let (lo, hi) = n.bounding_box();
        assert!((lo[0] - 0.1).abs() < 1e-12 && (hi[0] - 0.9).abs() < 1e-12);
        for a in 0..3 {
            assert!((0.5 * (lo[a] + hi[a]) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_extent_rejected() {
        let m = Mesh {
            vertices: vec![[1.0; 3]; 3],
            faces: vec![[0, 1, 2]],
            uvs: vec![],
            face_uvs: vec![],
            texture: Default::default(),
        };
        assert!(matches!(normalize_mesh(&m, 0.0), Err(VoxelError::ZeroExtentMesh)));
    }

    #[test]
    fn unit_cube_shell_at_resolution_four() {
        let grid = voxelize_mesh(&box_mesh([0.0; 3], [1.0; 3]), 4).unwrap();
        assert_eq!(grid.count(), 56);
        for x in 1..3 {
            for y in 1..3 {
                for z in 1..3 {
                    assert!(!grid.get(x, y, z));
                }
            }
        }
    }

    #[test]
    fn resolution_cap_and_normalization_checks() {
        let m = box_mesh([0.0; 3], [1.0; 3]);
        assert!(matches!(
            voxelize_mesh(&m, 513),
            Err(VoxelError::ResolutionTooLarge { requested: 513, cap: 512 })
        ));
        assert!(matches!(voxelize_mesh(&m, 0), Err(VoxelError::ZeroResolution)));
        let big = box_mesh([0.0; 3], [2.0; 3]);
        assert!(matches!(voxelize_mesh(&big, 8), Err(VoxelError::NotNormalized { .. })));
    }

    #[test]
    fn iou_cases() {
        let mut a = OccupancyGrid::cubic(8);
        let mut b = OccupancyGrid::cubic(8);
        assert_eq!(grid_iou(&a, &b).unwrap(), 1.0);
        for i in 0..40 {
            b.set_linear(i * 7, true);
            if i < 10 {
                a.set_linear(i * 7, true);
            }
        }
        assert_eq!(grid_iou(&a, &b).unwrap(), 0.25);
        assert_eq!(grid_iou(&b, &b).unwrap(), 1.0);
        let mut c = OccupancyGrid::cubic(8);
        c.set_linear(1, true);
        assert_eq!(grid_iou(&a, &c).unwrap(), 0.0);
        assert!(matches!(
            grid_iou(&a, &OccupancyGrid::cubic(4)),
            Err(VoxelError::ResolutionMismatch(..))
        ));
    }

    #[test]
    fn grid_file_layout() {
        let mut g = OccupancyGrid::new([3, 2, 2]);
        g.set(0, 0, 0, true);
        g.set(2, 1, 1, true);
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AVGX");
        assert_eq!(&buf[4..16], &[3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0]);
        // 12 cells -> 2 bytes; cell 0 is bit 0 of byte 0, cell 11 is bit 3 of byte 1.
        assert_eq!(&buf[16..], &[0b0000_0001, 0b0000_1000]);
        assert_eq!(OccupancyGrid::read_from(buf.as_slice()).unwrap(), g);

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(OccupancyGrid::read_from(bad.as_slice()).is_err());
        let mut padded = buf.clone();
        padded[17] |= 0x80;
        assert!(OccupancyGrid::read_from(padded.as_slice()).is_err());
    }
}
