//! URDF text output and a checker that reads it back.
//!
//! Meshes stay in the frame of the source mesh. Each link frame is placed at
//! its joint origin, so visual and collision geometry carry the opposite
//! offset and joint origins are differences of absolute joint centres.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use crate::hull::convex_hull_volume;
use crate::mesh::{Mesh, Point3};
use crate::segment::PartId;

use super::{AssetMetadata, JointKind, KinematicTree, UrdfError};

/// Per-part geometry summary needed for a link.
#[derive(Debug, Clone, PartialEq)]
pub struct PartGeometry {
    /// Mesh path as written into the URDF, relative to the URDF file.
    pub file: String,
    pub bbox: (Point3, Point3),
    /// Convex-hull volume in mesh units cubed.
    pub hull_volume: f64,
}

impl PartGeometry {
    pub fn from_mesh(file: impl Into<String>, mesh: &Mesh) -> Self {
        PartGeometry { file: file.into(), bbox: mesh.bounding_box(), hull_volume: convex_hull_volume(&mesh.vertices) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UrdfOptions {
    /// Real length of one mesh unit, in metres; used for masses.
    pub mesh_unit_m: f64,
    /// g/cm³, used when a part declares no density.
    pub default_density: f64,
    pub default_friction: f64,
    /// Lower bound keeping flat parts simulatable, kg.
    pub min_mass: f64,
    pub effort: f64,
    pub velocity: f64,
}

impl Default for UrdfOptions {
    fn default() -> Self {
        UrdfOptions {
            mesh_unit_m: 1.0,
            default_density: 1.0,
            default_friction: 0.5,
            min_mass: 1e-3,
            effort: 100.0,
            velocity: 1.0,
        }
    }
}

/// Physical values written for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPhysics {
    pub mass: f64,
    pub center: Point3,
    /// Diagonal of the solid-box inertia tensor about `center`.
    pub inertia: [f64; 3],
    pub friction: f64,
}

impl LinkPhysics {
    pub fn compute(density_g_cm3: f64, friction: f64, geom: &PartGeometry, opts: &UrdfOptions) -> Self {
        let k = opts.mesh_unit_m;
        let mass = (density_g_cm3 * 1000.0 * geom.hull_volume * k * k * k).max(opts.min_mass);
        let (lo, hi) = geom.bbox;
        let e: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
        let inertia = [
            mass / 12.0 * (e[1] * e[1] + e[2] * e[2]),
            mass / 12.0 * (e[0] * e[0] + e[2] * e[2]),
            mass / 12.0 * (e[0] * e[0] + e[1] * e[1]),
        ];
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        LinkPhysics { mass, center, inertia, friction }
    }
}

/// Shortest decimal that parses back to the same value; `-0` prints as `0`.
fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

fn vec3(p: Point3) -> String {
    format!("{} {} {}", num(p[0]), num(p[1]), num(p[2]))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn comment_safe(s: &str) -> String {
    s.replace("--", "- -")
}

pub fn robot_name(name: &str) -> String {
    let s: String = name
        .trim()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    let s = s.split('_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_");
    if s.is_empty() {
        "asset".into()
    } else {
        s
    }
}

pub fn link_name(id: PartId) -> String {
    format!("part_{id}")
}

pub fn joint_name(id: PartId) -> String {
    format!("joint_{id}")
}

/// URDF document for a tree whose parts all have geometry.
pub fn emit_urdf(
    tree: &KinematicTree,
    meta: &AssetMetadata,
    geometry: &BTreeMap<PartId, PartGeometry>,
    opts: &UrdfOptions,
) -> Result<String, UrdfError> {
    for &p in &tree.order {
        if !geometry.contains_key(&p) {
            return Err(UrdfError::MissingMesh(p));
        }
    }
    let frame = |p: PartId| -> Point3 { tree.edge_to(p).map_or([0.0; 3], |e| e.joint.origin) };
    let neg = |p: Point3| p.map(|v| -v);

    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<robot name=\"{}\">", robot_name(&tree.name));
    for &p in &tree.order {
        let rec = &meta.parts[&p];
        let geom = &geometry[&p];
        let phys = LinkPhysics::compute(
            rec.density.unwrap_or(opts.default_density),
            rec.friction.unwrap_or(opts.default_friction),
            geom,
            opts,
        );
        let w = frame(p);
        let _ = writeln!(out, "  <link name=\"{}\">", link_name(p));
        let mut notes = Vec::new();
        if let Some(m) = &rec.material {
            notes.push(format!("material: {m}"));
        }
        if let Some(y) = rec.youngs_modulus {
            notes.push(format!("youngs_modulus_gpa: {}", num(y)));
        }
        if !notes.is_empty() {
            let _ = writeln!(out, "    <!-- {} -->", comment_safe(&notes.join("; ")));
        }
        let _ = writeln!(out, "    <inertial>");
        let c = [phys.center[0] - w[0], phys.center[1] - w[1], phys.center[2] - w[2]];
        let _ = writeln!(out, "      <origin xyz=\"{}\" rpy=\"0 0 0\"/>", vec3(c));
        let _ = writeln!(out, "      <mass value=\"{}\"/>", num(phys.mass));
        let _ = writeln!(
            out,
            "      <inertia ixx=\"{}\" ixy=\"0\" ixz=\"0\" iyy=\"{}\" iyz=\"0\" izz=\"{}\"/>",
            num(phys.inertia[0]),
            num(phys.inertia[1]),
            num(phys.inertia[2])
        );
        let _ = writeln!(out, "    </inertial>");
        for tag in ["visual", "collision"] {
            let _ = writeln!(out, "    <{tag}>");
            let _ = writeln!(out, "      <origin xyz=\"{}\" rpy=\"0 0 0\"/>", vec3(neg(w)));
            let _ = writeln!(out, "      <geometry>");
            let _ = writeln!(out, "        <mesh filename=\"{}\"/>", xml_escape(&geom.file));
            let _ = writeln!(out, "      </geometry>");
            let _ = writeln!(out, "    </{tag}>");
        }
        let _ = writeln!(out, "    <contact>");
        let _ = writeln!(out, "      <lateral_friction value=\"{}\"/>", num(phys.friction));
        let _ = writeln!(out, "    </contact>");
        let _ = writeln!(out, "  </link>");
    }
    for e in &tree.edges {
        let j = &e.joint;
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{}\">", joint_name(e.child), j.kind.urdf_name());
        let _ = writeln!(out, "    <parent link=\"{}\"/>", link_name(e.parent));
        let _ = writeln!(out, "    <child link=\"{}\"/>", link_name(e.child));
        let (pw, cw) = (frame(e.parent), frame(e.child));
        let rel = [cw[0] - pw[0], cw[1] - pw[1], cw[2] - pw[2]];
        let _ = writeln!(out, "    <origin xyz=\"{}\" rpy=\"0 0 0\"/>", vec3(rel));
        if j.kind.is_actuated() {
            let _ = writeln!(out, "    <axis xyz=\"{}\"/>", vec3(j.axis));
            let (lo, hi) = j.limits.expect("actuated joints carry limits");
            let _ = writeln!(
                out,
                "    <limit lower=\"{}\" upper=\"{}\" effort=\"{}\" velocity=\"{}\"/>",
                num(lo),
                num(hi),
                num(opts.effort),
                num(opts.velocity)
            );
        }
        let _ = writeln!(out, "  </joint>");
    }
    let _ = writeln!(out, "</robot>");
    validate_urdf(&out)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLink {
    pub name: String,
    pub mass: Option<f64>,
    pub meshes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedJoint {
    pub name: String,
    pub kind: JointKind,
    pub parent: String,
    pub child: String,
    pub origin: Point3,
    pub axis: Option<Point3>,
    pub limits: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedUrdf {
    pub name: String,
    pub links: Vec<ParsedLink>,
    pub joints: Vec<ParsedJoint>,
}

impl ParsedUrdf {
    /// Absolute position of a link frame, summing joint offsets from the root.
    /// Joint rotations are ignored (they are always zero in emitted files).
    pub fn link_frame(&self, link: &str) -> Point3 {
        let mut p = [0.0; 3];
        let mut cur = link.to_string();
        let mut guard = 0;
        while let Some(j) = self.joints.iter().find(|j| j.child == cur) {
            for a in 0..3 {
                p[a] += j.origin[a];
            }
            cur = j.parent.clone();
            guard += 1;
            if guard > self.joints.len() {
                break;
            }
        }
        p
    }

    pub fn joint_for_child(&self, link: &str) -> Option<&ParsedJoint> {
        self.joints.iter().find(|j| j.child == link)
    }
}

fn invalid(msg: impl Into<String>) -> UrdfError {
    UrdfError::InvalidUrdf(msg.into())
}

fn attr<'a>(n: roxmltree::Node<'a, '_>, name: &str) -> Result<&'a str, UrdfError> {
    n.attribute(name).ok_or_else(|| invalid(format!("<{}> lacks attribute {name}", n.tag_name().name())))
}

fn parse_f64(s: &str, what: &str) -> Result<f64, UrdfError> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| invalid(format!("{what}: {s:?} is not a finite number")))
}

fn parse_vec3(s: &str, what: &str) -> Result<Point3, UrdfError> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(invalid(format!("{what}: expected three numbers, got {s:?}")));
    }
    Ok([parse_f64(parts[0], what)?, parse_f64(parts[1], what)?, parse_f64(parts[2], what)?])
}

fn child<'a, 'i>(n: roxmltree::Node<'a, 'i>, tag: &str) -> Option<roxmltree::Node<'a, 'i>> {
    n.children().find(|c| c.is_element() && c.tag_name().name() == tag)
}

/// Read the subset of URDF this crate writes: links, mesh references, masses
/// and joints.
pub fn parse_urdf(xml: &str) -> Result<ParsedUrdf, UrdfError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| invalid(format!("not well-formed XML: {e}")))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(invalid("root element is not <robot>"));
    }
    let name = attr(robot, "name")?.to_string();
    let mut links = Vec::new();
    let mut joints = Vec::new();
    for n in robot.children().filter(|n| n.is_element()) {
        match n.tag_name().name() {
            "link" => {
                let mass = match child(n, "inertial").and_then(|i| child(i, "mass")) {
                    Some(m) => Some(parse_f64(attr(m, "value")?, "mass")?),
                    None => None,
                };
                let meshes = n
                    .descendants()
                    .filter(|d| d.is_element() && d.tag_name().name() == "mesh")
                    .map(|d| attr(d, "filename").map(str::to_string))
                    .collect::<Result<_, _>>()?;
                links.push(ParsedLink { name: attr(n, "name")?.to_string(), mass, meshes });
            }
            "joint" => {
                let jname = attr(n, "name")?.to_string();
                let t = attr(n, "type")?;
                let kind = JointKind::from_urdf_name(t)
                    .ok_or_else(|| invalid(format!("joint {jname}: unsupported type {t:?}")))?;
                let parent = attr(child(n, "parent").ok_or_else(|| invalid(format!("joint {jname}: no parent")))?, "link")?;
                let child_link =
                    attr(child(n, "child").ok_or_else(|| invalid(format!("joint {jname}: no child")))?, "link")?;
                let origin = match child(n, "origin").and_then(|o| o.attribute("xyz")) {
                    Some(s) => parse_vec3(s, "joint origin")?,
                    None => [0.0; 3],
                };
                let axis = child(n, "axis").map(|a| parse_vec3(attr(a, "xyz")?, "joint axis")).transpose()?;
                let limits = child(n, "limit")
                    .map(|l| -> Result<(f64, f64), UrdfError> {
                        Ok((parse_f64(attr(l, "lower")?, "lower")?, parse_f64(attr(l, "upper")?, "upper")?))
                    })
                    .transpose()?;
                joints.push(ParsedJoint {
                    name: jname,
                    kind,
                    parent: parent.to_string(),
                    child: child_link.to_string(),
                    origin,
                    axis,
                    limits,
                });
            }
            _ => {}
        }
    }
    Ok(ParsedUrdf { name, links, joints })
}

/// Well-formedness and structural checks: unique names, a single-rooted
/// tree over the links, unit axes, ordered limits, positive masses.
pub fn validate_urdf(xml: &str) -> Result<ParsedUrdf, UrdfError> {
    let u = parse_urdf(xml)?;
    if u.links.is_empty() {
        return Err(invalid("no links"));
    }
    let mut names = HashSet::new();
    for l in &u.links {
        if l.name.is_empty() || !names.insert(l.name.as_str()) {
            return Err(invalid(format!("duplicate or empty link name {:?}", l.name)));
        }
        if let Some(m) = l.mass {
            if m <= 0.0 {
                return Err(invalid(format!("link {}: mass must be positive", l.name)));
            }
        }
    }
    let mut jnames = HashSet::new();
    let mut parent_of: HashMap<&str, &str> = HashMap::new();
    for j in &u.joints {
        if j.name.is_empty() || !jnames.insert(j.name.as_str()) {
            return Err(invalid(format!("duplicate or empty joint name {:?}", j.name)));
        }
        for l in [&j.parent, &j.child] {
            if !names.contains(l.as_str()) {
                return Err(invalid(format!("joint {} references unknown link {l}", j.name)));
            }
        }
        if parent_of.insert(j.child.as_str(), j.parent.as_str()).is_some() {
            return Err(invalid(format!("link {} has more than one parent joint", j.child)));
        }
        if j.kind.is_actuated() {
            let a = j.axis.ok_or_else(|| invalid(format!("joint {}: missing axis", j.name)))?;
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(invalid(format!("joint {}: axis norm {n}", j.name)));
            }
            let (lo, hi) = j.limits.ok_or_else(|| invalid(format!("joint {}: missing limit", j.name)))?;
            if lo > hi {
                return Err(invalid(format!("joint {}: lower {lo} > upper {hi}", j.name)));
            }
        }
    }
    let roots: Vec<&str> = u.links.iter().map(|l| l.name.as_str()).filter(|n| !parent_of.contains_key(n)).collect();
    if roots.len() != 1 {
        return Err(invalid(format!("expected one root link, found {roots:?}")));
    }
    for l in &u.links {
        let mut cur = l.name.as_str();
        let mut steps = 0;
        while let Some(p) = parent_of.get(cur) {
            cur = p;
            steps += 1;
            if steps > u.links.len() {
                return Err(invalid(format!("joint cycle through link {}", l.name)));
            }
        }
    }
    Ok(u)
}
