//! Incremental 3D convex hull, used for part volumes.

use std::collections::HashMap;

use crate::mesh::{bounding_box, cross, dot, sub, Point3};

/// Outward-oriented hull triangles as indices into `points`. Empty when the
/// points are coplanar (or fewer than four).
pub fn convex_hull(points: &[Point3]) -> Vec<[usize; 3]> {
    if points.len() < 4 {
        return Vec::new();
    }
    let (lo, hi) = bounding_box(points);
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if extent == 0.0 {
        return Vec::new();
    }
    let eps = 1e-10 * extent;

    // Initial tetrahedron from extreme points.
    let i0 = (0..points.len()).min_by(|&a, &b| points[a][0].total_cmp(&points[b][0])).unwrap();
    let far = |score: &dyn Fn(Point3) -> f64| {
        (0..points.len()).max_by(|&a, &b| score(points[a]).total_cmp(&score(points[b]))).unwrap()
    };
    let p0 = points[i0];
    let i1 = far(&|p| dot(sub(p, p0), sub(p, p0)));
    let d01 = sub(points[i1], p0);
    let i2 = far(&|p| {
        let c = cross(d01, sub(p, p0));
        dot(c, c)
    });
    let n012 = cross(d01, sub(points[i2], p0));
    let n_len = dot(n012, n012).sqrt();
    if n_len <= eps * extent {
        return Vec::new();
    }
    let i3 = far(&|p| dot(n012, sub(p, p0)).abs());
    if dot(n012, sub(points[i3], p0)).abs() / n_len <= eps {
        return Vec::new();
    }

    let interior = {
        let s = [i0, i1, i2, i3].iter().fold([0.0; 3], |acc, &i| {
            [acc[0] + points[i][0], acc[1] + points[i][1], acc[2] + points[i][2]]
        });
        [s[0] / 4.0, s[1] / 4.0, s[2] / 4.0]
    };

    struct Face {
        v: [usize; 3],
        normal: Point3,
        offset: f64,
        alive: bool,
    }
    let make = |v: [usize; 3]| -> Face {
        let mut v = v;
        let mut n = cross(sub(points[v[1]], points[v[0]]), sub(points[v[2]], points[v[0]]));
        if dot(n, sub(interior, points[v[0]])) > 0.0 {
            v.swap(1, 2);
            n = n.map(|x| -x);
        }
        let len = dot(n, n).sqrt();
        let normal = n.map(|x| x / len);
        Face { v, normal, offset: dot(normal, points[v[0]]), alive: true }
    };

    let mut faces: Vec<Face> = [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]].into_iter().map(make).collect();
    let mut edge_face: HashMap<(usize, usize), usize> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            edge_face.insert((f.v[k], f.v[(k + 1) % 3]), fi);
        }
    }

    for (pi, &p) in points.iter().enumerate() {
        if [i0, i1, i2, i3].contains(&pi) {
            continue;
        }
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&fi| faces[fi].alive && dot(faces[fi].normal, p) - faces[fi].offset > eps)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let is_visible: std::collections::HashSet<usize> = visible.iter().copied().collect();
        let mut horizon = Vec::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                let across = edge_face[&(b, a)];
                if !is_visible.contains(&across) {
                    horizon.push((a, b));
                }
            }
        }
        for &fi in &visible {
            faces[fi].alive = false;
            let v = faces[fi].v;
            for k in 0..3 {
                edge_face.remove(&(v[k], v[(k + 1) % 3]));
            }
        }
        for (a, b) in horizon {
            let normal = cross(sub(points[b], points[a]), sub(p, points[a]));
            let len = dot(normal, normal).sqrt();
            let normal = normal.map(|x| x / len);
            let fi = faces.len();
            faces.push(Face { v: [a, b, pi], normal, offset: dot(normal, points[a]), alive: true });
            edge_face.insert((a, b), fi);
            edge_face.insert((b, pi), fi);
            edge_face.insert((pi, a), fi);
        }
    }
    faces.into_iter().filter(|f| f.alive).map(|f| f.v).collect()
}

/// Volume enclosed by the convex hull; zero for flat point sets.
pub fn convex_hull_volume(points: &[Point3]) -> f64 {
    let tris = convex_hull(points);
    let v: f64 = tris
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| points[i]);
            dot(a, cross(b, c))
        })
        .sum();
    v / 6.0
}
