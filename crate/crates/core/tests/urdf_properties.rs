use std::collections::BTreeMap;
use std::f64::consts::PI;

use articulate_core::mesh::box_mesh;
use articulate_core::segment::PartId;
use articulate_core::urdf::{
    build_kinematic_tree, emit_urdf, link_name, validate_urdf, AssetMetadata, DecodeOptions, JointKind, JointType, PartGeometry,
    PartRecord, UrdfOptions,
};
use articulate_core::voxel::NormalizationTransform;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Spec {
    parent: usize,
    kind: JointType,
    center: [i64; 3],
    axis: [i64; 3],
    limits: [i64; 2],
}

fn joint_type() -> impl Strategy<Value = JointType> {
    prop_oneof![
        Just(JointType::Fixed),
        Just(JointType::Rigid),
        Just(JointType::Revolute),
        Just(JointType::Hinge),
        Just(JointType::Prismatic),
        Just(JointType::Free),
    ]
}

fn part_spec() -> impl Strategy<Value = Spec> {
    (
        any::<usize>(),
        joint_type(),
        [0i64..=200, 0i64..=200, 0i64..=200],
        [0i64..=100, 0i64..=100, 0i64..=100].prop_filter("non-zero axis", |a| a.iter().any(|&v| v > 0)),
        (-100i64..=100, -100i64..=100),
    )
        .prop_map(|(parent, kind, center, axis, (a, b))| Spec { parent, kind, center, axis, limits: [a.min(b), a.max(b)] })
}

fn record(id: PartId, parent: Option<PartId>, s: &Spec) -> PartRecord {
    PartRecord {
        id,
        joint_type: s.kind,
        parent,
        center: Some(s.center),
        axis: Some(s.axis),
        limits: Some(s.limits),
        material: None,
        density: None,
        youngs_modulus: None,
        friction: None,
        caption: None,
        tokens: None,
    }
}

/// Random tree: part `i` hangs off one of the parts before it.
fn asset() -> impl Strategy<Value = (AssetMetadata, NormalizationTransform)> {
    (
        proptest::collection::vec(part_spec(), 1..7),
        0.5..5.0f64,
        [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64],
        1.0..100.0f64,
    )
        .prop_map(|(specs, scale, translation, object_scale)| {
            let mut parts = BTreeMap::new();
            parts.insert(0, record(0, None, &specs[0]));
            for (i, s) in specs.iter().enumerate().skip(1) {
                let id = i as PartId;
                parts.insert(id, record(id, Some((s.parent % i) as PartId), s));
            }
            (AssetMetadata { name: "prop asset".into(), scale: object_scale, parts }, NormalizationTransform { translation, scale })
        })
}

fn geometry(meta: &AssetMetadata) -> BTreeMap<PartId, PartGeometry> {
    meta.parts
        .keys()
        .map(|&id| {
            let o = id as f64;
            (id, PartGeometry::from_mesh(format!("parts/part_{id}.obj"), &box_mesh([o, 0.0, 0.0], [o + 1.0, 0.5, 0.25])))
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn emitted_urdf_round_trips((meta, t) in asset()) {
        let opts = DecodeOptions::default();
        let tree = build_kinematic_tree(&meta, &t, opts).unwrap();
        prop_assert_eq!(tree.order.len(), meta.parts.len());
        let xml = emit_urdf(&tree, &meta, &geometry(&meta), &UrdfOptions::default()).unwrap();
        let parsed = validate_urdf(&xml).unwrap();
        prop_assert_eq!(parsed.joints.len(), tree.edges.len());
        prop_assert_eq!(parsed.links.len(), meta.parts.len());

        for e in &tree.edges {
            let rec = &meta.parts[&e.child];
            let child = link_name(e.child);
            let j = parsed.joint_for_child(&child).unwrap();
            prop_assert_eq!(j.kind, e.joint.kind);
            prop_assert_eq!(j.kind, rec.joint_type.canonical());
            prop_assert_eq!(&j.parent, &link_name(e.parent));

            // Origins come back in the mesh frame.
            let frame = parsed.link_frame(&child);
            let c = rec.center.unwrap().map(|v| v as f64 * 0.005);
            for a in 0..3 {
                let expected = (c[a] - t.translation[a]) / t.scale;
                prop_assert!(close(frame[a], expected), "origin {frame:?} vs axis {a} {expected}");
            }

            if matches!(j.kind, JointKind::Revolute | JointKind::Prismatic) {
                let axis = j.axis.unwrap();
                let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
                prop_assert!((n - 1.0).abs() < 1e-6);
                let raw = rec.axis.unwrap().map(|v| v as f64);
                let rn = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
                for a in 0..3 {
                    prop_assert!(close(axis[a], raw[a] / rn));
                }
                let (lo, hi) = j.limits.unwrap();
                prop_assert!(lo <= hi);
                let span = if j.kind == JointKind::Revolute { PI } else { meta.scale / 100.0 };
                let [rl, rh] = rec.limits.unwrap();
                prop_assert!(close(lo, rl as f64 * span / 100.0), "{lo} vs {rl}");
                prop_assert!(close(hi, rh as f64 * span / 100.0), "{hi} vs {rh}");
            }
        }
    }

    #[test]
    fn names_are_unique((meta, t) in asset()) {
        let tree = build_kinematic_tree(&meta, &t, DecodeOptions::default()).unwrap();
        let xml = emit_urdf(&tree, &meta, &geometry(&meta), &UrdfOptions::default()).unwrap();
        let parsed = validate_urdf(&xml).unwrap();
        let mut links: Vec<&str> = parsed.links.iter().map(|l| l.name.as_str()).collect();
        links.sort_unstable();
        links.dedup();
        prop_assert_eq!(links.len(), parsed.links.len());
        prop_assert!(parsed.links.iter().all(|l| l.mass.is_some_and(|m| m > 0.0)));
    }
}
