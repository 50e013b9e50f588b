//! Asset metadata, kinematic trees and URDF output.
//!
//! Quantized metadata values decode as follows: a joint centre component `c`
//! in `[0, 200]` is the normalized-cube coordinate `0.005·c`; an axis is
//! normalized to unit length; a limit `v` is `v·π/100` radians for revolute
//! joints and `v/100` of the object's real size for prismatic joints.

mod emit;
mod metadata;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use thiserror::Error;

use crate::mesh::{norm, Point3};
use crate::segment::PartId;
use crate::voxel::NormalizationTransform;

pub use emit::{emit_urdf, joint_name, link_name, parse_urdf, validate_urdf, LinkPhysics, ParsedJoint, ParsedUrdf, PartGeometry, UrdfOptions};
pub use metadata::{parse_metadata, AssetMetadata, JointKind, JointType, PartRecord};

/// Normalized-cube length of one centre step.
pub const CENTER_RESOLUTION: f64 = 0.005;

#[derive(Debug, Error)]
pub enum UrdfError {
    #[error("schema violation at {path}: {reason}")]
    SchemaViolation { path: String, reason: String },
    #[error("{path} = {value} is outside [{min}, {max}]")]
    RangeViolation { path: String, value: i64, min: i64, max: i64 },
    #[error("more than one root part: {0:?}")]
    MultipleRoots(Vec<PartId>),
    #[error("part {part} names unknown parent {parent}")]
    UnknownParent { part: PartId, parent: PartId },
    #[error("parent cycle: {}", fmt_cycle(.0))]
    CycleDetected(Vec<PartId>),
    #[error("part {0} has a moving joint with a zero axis")]
    ZeroAxis(PartId),
    #[error("part {part} has limits lo {lo} > hi {hi}")]
    InvalidLimits { part: PartId, lo: i64, hi: i64 },
    #[error("no mesh for part {0}")]
    MissingMesh(PartId),
    #[error("invalid URDF: {0}")]
    InvalidUrdf(String),
}

fn fmt_cycle(c: &[PartId]) -> String {
    c.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" -> ")
}

/// How the metadata `scale` value is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleUnit {
    Millimeters,
    #[default]
    Centimeters,
    Meters,
}

impl ScaleUnit {
    pub fn to_meters(self, v: f64) -> f64 {
        match self {
            ScaleUnit::Millimeters => v / 1000.0,
            ScaleUnit::Centimeters => v / 100.0,
            ScaleUnit::Meters => v,
        }
    }
}

impl std::str::FromStr for ScaleUnit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mm" | "millimeters" => Ok(ScaleUnit::Millimeters),
            "cm" | "centimeters" => Ok(ScaleUnit::Centimeters),
            "m" | "meters" => Ok(ScaleUnit::Meters),
            _ => Err(format!("unknown scale unit {s:?} (expected mm, cm or m)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub kind: JointKind,
    /// Centre in the normalized cube, before mapping to the mesh frame.
    pub grid_origin: Point3,
    /// Centre in the mesh frame.
    pub origin: Point3,
    /// Unit axis; `[0, 0, 0]` for fixed and floating joints.
    pub axis: Point3,
    /// Radians (revolute) or metres (prismatic).
    pub limits: Option<(f64, f64)>,
}

/// Decode one part's joint. `scale_m` is the object's real size in metres.
pub fn decode_kinematics(
    part: &PartRecord,
    scale_m: f64,
    transform: &NormalizationTransform,
) -> Result<Joint, UrdfError> {
    let kind = part.joint_type.canonical();
    let c = part.center.unwrap_or([0; 3]);
    let grid_origin = c.map(|v| v as f64 * CENTER_RESOLUTION);
    let origin = if part.center.is_some() { transform.invert(grid_origin) } else { [0.0; 3] };

    if !kind.is_actuated() {
        return Ok(Joint { kind, grid_origin, origin, axis: [0.0; 3], limits: None });
    }
    let a = part.axis.unwrap_or([0; 3]).map(|v| v as f64);
    let n = norm(a);
    if n == 0.0 {
        return Err(UrdfError::ZeroAxis(part.id));
    }
    let axis = a.map(|v| v / n);
    let [lo, hi] = part.limits.unwrap_or([0, 0]);
    if lo > hi {
        return Err(UrdfError::InvalidLimits { part: part.id, lo, hi });
    }
    let span = match kind {
        JointKind::Revolute => PI,
        _ => scale_m,
    };
    let to_unit = |v: i64| v as f64 * span / 100.0;
    Ok(Joint { kind, grid_origin, origin, axis, limits: Some((to_unit(lo), to_unit(hi))) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub parent: PartId,
    pub child: PartId,
    pub joint: Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    pub name: String,
    pub root: PartId,
    /// Breadth-first from the root, siblings by ascending id.
    pub order: Vec<PartId>,
    /// One per non-root part, in `order`.
    pub edges: Vec<Edge>,
}

impl KinematicTree {
    pub fn parent_of(&self, part: PartId) -> Option<PartId> {
        self.edges.iter().find(|e| e.child == part).map(|e| e.parent)
    }

    pub fn edge_to(&self, part: PartId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.child == part)
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.order
            .iter()
            .map(|&p| {
                let mut d = 0;
                let mut cur = p;
                while let Some(up) = self.parent_of(cur) {
                    d += 1;
                    cur = up;
                }
                d
            })
            .max()
            .unwrap_or(0)
    }
}

/// Options for interpreting metadata values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DecodeOptions {
    pub scale_unit: ScaleUnit,
}

pub fn build_kinematic_tree(
    meta: &AssetMetadata,
    transform: &NormalizationTransform,
    opts: DecodeOptions,
) -> Result<KinematicTree, UrdfError> {
    let roots: Vec<PartId> = meta.parts.values().filter(|p| p.parent.is_none()).map(|p| p.id).collect();
    if roots.len() > 1 {
        return Err(UrdfError::MultipleRoots(roots));
    }
    // Walk up from every part; revisiting a part on the same walk is a cycle.
    for &start in meta.parts.keys() {
        let mut path = vec![start];
        let mut seen = BTreeSet::from([start]);
        let mut cur = start;
        while let Some(parent) = meta.parts[&cur].parent {
            if !meta.parts.contains_key(&parent) {
                return Err(UrdfError::UnknownParent { part: cur, parent });
            }
            if !seen.insert(parent) {
                let at = path.iter().position(|&p| p == parent).unwrap();
                let mut cycle = path[at..].to_vec();
                cycle.push(parent);
                return Err(UrdfError::CycleDetected(cycle));
            }
            path.push(parent);
            cur = parent;
        }
    }
    let root = roots[0];

    let mut children: BTreeMap<PartId, Vec<PartId>> = BTreeMap::new();
    for p in meta.parts.values() {
        if let Some(parent) = p.parent {
            children.entry(parent).or_default().push(p.id);
        }
    }
    let scale_m = opts.scale_unit.to_meters(meta.scale);
    let mut order = vec![root];
    let mut edges = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let p = order[i];
        for &c in children.get(&p).into_iter().flatten() {
            let joint = decode_kinematics(&meta.parts[&c], scale_m, transform)?;
            edges.push(Edge { parent: p, child: c, joint });
            order.push(c);
        }
        i += 1;
    }
    Ok(KinematicTree { name: meta.name.clone(), root, order, edges })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: PartId, t: JointType, parent: Option<PartId>) -> PartRecord {
        PartRecord {
            id,
            joint_type: t,
            parent,
            center: Some([100, 100, 100]),
            axis: Some([0, 0, 100]),
            limits: Some([-50, 50]),
            material: None,
            density: None,
            youngs_modulus: None,
            friction: None,
            caption: None,
            tokens: None,
        }
    }

    fn meta(parts: Vec<PartRecord>) -> AssetMetadata {
        AssetMetadata { name: "t".into(), scale: 40.0, parts: parts.into_iter().map(|p| (p.id, p)).collect() }
    }

    #[test]
    fn decode_rules() {
        let mut r = record(1, JointType::Revolute, Some(0));
        r.center = Some([100, 138, 101]);
        r.axis = Some([100, 0, 0]);
        r.limits = Some([-54, 45]);
        let j = decode_kinematics(&r, 0.4, &NormalizationTransform::IDENTITY).unwrap();
        assert_eq!(j.kind, JointKind::Revolute);
        let want = [0.5, 0.69, 0.505];
        for a in 0..3 {
            assert!((j.grid_origin[a] - want[a]).abs() < 1e-12);
        }
        assert_eq!(j.axis, [1.0, 0.0, 0.0]);
        let (lo, hi) = j.limits.unwrap();
        assert!((lo + 1.696_460_032_938_2).abs() < 1e-9);
        assert!((hi - 1.413_716_694_115_407).abs() < 1e-9);

        r.joint_type = JointType::Prismatic;
        r.limits = Some([0, 50]);
        let j = decode_kinematics(&r, 0.4, &NormalizationTransform::IDENTITY).unwrap();
        assert_eq!(j.limits, Some((0.0, 0.2)));

        r.axis = Some([0, 0, 0]);
        assert!(matches!(decode_kinematics(&r, 0.4, &NormalizationTransform::IDENTITY), Err(UrdfError::ZeroAxis(1))));
        r.axis = Some([3, 4, 0]);
        r.limits = Some([10, -10]);
        assert!(matches!(
            decode_kinematics(&r, 0.4, &NormalizationTransform::IDENTITY),
            Err(UrdfError::InvalidLimits { .. })
        ));
    }

    #[test]
    fn origin_maps_to_mesh_frame() {
        let r = record(1, JointType::Hinge, Some(0));
        let t = NormalizationTransform { translation: [0.25, 0.0, -0.5], scale: 2.0 };
        let j = decode_kinematics(&r, 1.0, &t).unwrap();
        assert_eq!(j.kind, JointKind::Revolute);
        assert_eq!(j.origin, [(0.5 - 0.25) / 2.0, 0.25, 0.5]);
    }

    #[test]
    fn type_mapping() {
        assert_eq!(JointType::Hinge.canonical(), JointKind::Revolute);
        assert_eq!(JointType::Rigid.canonical(), JointKind::Fixed);
        assert_eq!(JointType::Free.canonical(), JointKind::Floating);
        let j = decode_kinematics(&record(2, JointType::Rigid, Some(0)), 1.0, &NormalizationTransform::IDENTITY)
            .unwrap();
        assert_eq!(j.limits, None);
    }

    #[test]
    fn chain_and_cycle() {
        let m = meta(vec![
            record(0, JointType::Fixed, None),
            record(1, JointType::Revolute, Some(0)),
            record(2, JointType::Prismatic, Some(1)),
            record(3, JointType::Hinge, Some(2)),
        ]);
        let t = build_kinematic_tree(&m, &NormalizationTransform::IDENTITY, DecodeOptions::default()).unwrap();
        assert_eq!(t.root, 0);
        assert_eq!(t.order, vec![0, 1, 2, 3]);
        assert_eq!(t.depth(), 3);
        assert_eq!(t.parent_of(3), Some(2));

        let m = meta(vec![
            record(0, JointType::Fixed, None),
            record(1, JointType::Revolute, Some(2)),
            record(2, JointType::Revolute, Some(1)),
        ]);
        match build_kinematic_tree(&m, &NormalizationTransform::IDENTITY, DecodeOptions::default()) {
            Err(UrdfError::CycleDetected(c)) => assert_eq!(c, vec![1, 2, 1]),
            other => panic!("{other:?}"),
        }
    }
}
