//! Procedural closed meshes used as fixtures by tests, benches and the demo
//! commands.

use crate::exec::Exec;
use crate::mesh::{box_mesh, Mesh, Point3};
use crate::voxel::{normalize_mesh, OccupancyGrid, VoxelError, Voxelizer, DEFAULT_MARGIN};

/// Axis-aligned ellipsoid shell with `rings` latitude bands and `segments`
/// longitude slices.
pub fn ellipsoid(center: Point3, radii: Point3, rings: usize, segments: usize) -> Mesh {
    assert!(rings >= 2 && segments >= 3);
    let mut vertices = vec![[center[0], center[1], center[2] + radii[2]]];
    for r in 1..rings {
        let theta = std::f64::consts::PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            vertices.push([
                center[0] + radii[0] * theta.sin() * phi.cos(),
                center[1] + radii[1] * theta.sin() * phi.sin(),
                center[2] + radii[2] * theta.cos(),
            ]);
        }
    }
    let south = vertices.len();
    vertices.push([center[0], center[1], center[2] - radii[2]]);

    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring(1, s), ring(1, s + 1)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            faces.push([ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)]);
            faces.push([ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)]);
        }
    }
    for s in 0..segments {
        faces.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    Mesh::new(vertices, faces).expect("ellipsoid is well formed")
}

/// L-shaped profile in the xy plane (legs of length `width` along x and
/// `height` along y, both `thickness` thick) extruded over `[0, depth]` in z.
pub fn l_bracket(width: f64, height: f64, thickness: f64, depth: f64) -> Mesh {
    assert!(thickness < width && thickness < height);
    let outline = [
        [0.0, 0.0],
        [width, 0.0],
        [width, thickness],
        [thickness, thickness],
        [thickness, height],
        [0.0, height],
    ];
    let mut vertices = Vec::with_capacity(12);
    for z in [0.0, depth] {
        for p in outline {
            vertices.push([p[0], p[1], z]);
        }
    }
    let mut faces = Vec::new();
    // The inner corner (index 3) sees every other outline vertex.
    for i in [4, 5, 0, 1] {
        let j = (i + 1) % 6;
        faces.push([3, j, i]);
        faces.push([9, 6 + i, 6 + j]);
    }
    for i in 0..6 {
        let j = (i + 1) % 6;
        faces.push([i, j, 6 + j]);
        faces.push([i, 6 + j, 6 + i]);
    }
    Mesh::new(vertices, faces).expect("bracket is well formed")
}

/// Twenty named shapes: ellipsoid shells, boxes and L-brackets with varied
/// proportions.
pub fn fixture_suite() -> Vec<(String, Mesh)> {
    let mut out = Vec::new();
    let ellipsoids = [
        [1.0, 1.0, 1.0],
        [1.0, 0.7, 0.5],
        [1.0, 0.4, 0.4],
        [0.6, 1.0, 0.8],
        [0.5, 0.5, 1.0],
        [1.0, 0.9, 0.3],
        [0.8, 0.3, 1.0],
    ];
    for (i, r) in ellipsoids.iter().enumerate() {
        out.push((format!("ellipsoid_{i}"), ellipsoid([0.0; 3], *r, 24, 48)));
    }
    let boxes = [
        [1.0, 1.0, 1.0],
        [1.0, 0.5, 0.25],
        [1.0, 1.0, 0.2],
        [0.3, 1.0, 0.6],
        [1.0, 0.15, 0.15],
        [0.7, 0.7, 1.0],
        [0.45, 0.9, 1.0],
    ];
    for (i, e) in boxes.iter().enumerate() {
        out.push((format!("box_{i}"), box_mesh([0.0; 3], *e)));
    }
    let brackets = [
        (1.0, 1.0, 0.25, 0.5),
        (1.0, 0.6, 0.2, 1.0),
        (0.8, 1.0, 0.3, 0.3),
        (1.0, 0.5, 0.1, 0.7),
        (1.0, 1.0, 0.5, 1.0),
        (0.6, 1.0, 0.15, 0.9),
    ];
    for (i, &(w, h, t, d)) in brackets.iter().enumerate() {
        out.push((format!("bracket_{i}"), l_bracket(w, h, t, d)));
    }
    out
}

/// Normalize into the unit cube with the default margin, then surface-voxelize.
pub fn voxelize_normalized(mesh: &Mesh, resolution: usize, exec: Exec) -> Result<OccupancyGrid, VoxelError> {
    let (normalized, _) = normalize_mesh(mesh, DEFAULT_MARGIN)?;
    Voxelizer { exec, ..Voxelizer::default() }.voxelize(&normalized, resolution)
}
