//! The structured JSON description of an asset: object captions, per-part
//! kinematic and material records, and per-part voxel token strings.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::UrdfError;
use crate::segment::PartId;

pub const CENTER_MAX: i64 = 200;
pub const AXIS_MAX: i64 = 100;
pub const LIMIT_MAX: i64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Fixed,
    Revolute,
    Prismatic,
    Free,
    Hinge,
    Rigid,
}

impl JointType {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "fixed" => JointType::Fixed,
            "revolute" => JointType::Revolute,
            "prismatic" => JointType::Prismatic,
            "free" => JointType::Free,
            "hinge" => JointType::Hinge,
            "rigid" => JointType::Rigid,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            JointType::Fixed => "fixed",
            JointType::Revolute => "revolute",
            JointType::Prismatic => "prismatic",
            JointType::Free => "free",
            JointType::Hinge => "hinge",
            JointType::Rigid => "rigid",
        }
    }

    /// The URDF joint kind this type maps to.
    pub fn canonical(self) -> JointKind {
        match self {
            JointType::Fixed | JointType::Rigid => JointKind::Fixed,
            JointType::Revolute | JointType::Hinge => JointKind::Revolute,
            JointType::Prismatic => JointKind::Prismatic,
            JointType::Free => JointKind::Floating,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Fixed,
    Revolute,
    Prismatic,
    Floating,
}

impl JointKind {
    pub fn urdf_name(self) -> &'static str {
        match self {
            JointKind::Fixed => "fixed",
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Floating => "floating",
        }
    }

    pub fn from_urdf_name(s: &str) -> Option<Self> {
        Some(match s {
            "fixed" => JointKind::Fixed,
            "revolute" => JointKind::Revolute,
            "prismatic" => JointKind::Prismatic,
            "floating" => JointKind::Floating,
            _ => return None,
        })
    }

    /// Revolute and prismatic joints carry an axis and limits.
    pub fn is_actuated(self) -> bool {
        matches!(self, JointKind::Revolute | JointKind::Prismatic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartRecord {
    pub id: PartId,
    pub joint_type: JointType,
    pub parent: Option<PartId>,
    /// Grid point in `[0, 200]³`; one step is 0.005 of the normalized cube.
    pub center: Option<[i64; 3]>,
    /// Direction with components in `[0, 100]`.
    pub axis: Option<[i64; 3]>,
    /// `[lo, hi]` in `[-100, 100]`; 100 is half a turn or the full travel.
    pub limits: Option<[i64; 2]>,
    pub material: Option<String>,
    /// g/cm³.
    pub density: Option<f64>,
    /// GPa.
    pub youngs_modulus: Option<f64>,
    pub friction: Option<f64>,
    pub caption: Option<String>,
    /// Raw token text from `parts_voxels`.
    pub tokens: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetMetadata {
    pub name: String,
    /// Largest bounding-box extent of the object in the declared unit
    /// (centimetres unless overridden).
    pub scale: f64,
    pub parts: BTreeMap<PartId, PartRecord>,
}

impl AssetMetadata {
    pub fn root(&self) -> PartId {
        *self.parts.values().find(|p| p.parent.is_none()).map(|p| &p.id).expect("validated metadata has a root")
    }
}

fn schema(path: impl Into<String>, reason: impl Into<String>) -> UrdfError {
    UrdfError::SchemaViolation { path: path.into(), reason: reason.into() }
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, UrdfError> {
    v.as_object().ok_or_else(|| schema(path, "expected an object"))
}

fn required<'a>(m: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, UrdfError> {
    m.get(key).ok_or_else(|| schema(format!("{path}.{key}"), "missing required field"))
}

/// A number, or a string that starts with one (`"1.2 g/cm^3"`).
fn leading_number(v: &Value, path: &str) -> Result<f64, UrdfError> {
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => {
            let s = s.trim();
            let end = s
                .char_indices()
                .find(|&(_, c)| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
                .map_or(s.len(), |(i, _)| i);
            s[..end].parse().ok()
        }
        _ => None,
    };
    match x {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(schema(path, "expected a number")),
    }
}

fn int_array<const N: usize>(v: &Value, path: &str, lo: i64, hi: i64) -> Result<[i64; N], UrdfError> {
    let arr = v.as_array().ok_or_else(|| schema(path, format!("expected an array of {N} integers")))?;
    if arr.len() != N {
        return Err(schema(path, format!("expected {N} entries, found {}", arr.len())));
    }
    let mut out = [0i64; N];
    for (i, x) in arr.iter().enumerate() {
        let p = format!("{path}[{i}]");
        let n = x
            .as_i64()
            .or_else(|| x.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64))
            .ok_or_else(|| schema(&p, "expected an integer"))?;
        if n < lo || n > hi {
            return Err(UrdfError::RangeViolation { path: p, value: n, min: lo, max: hi });
        }
        out[i] = n;
    }
    Ok(out)
}

fn part_id(key: &str, path: &str) -> Result<PartId, UrdfError> {
    key.trim().parse().map_err(|_| schema(path, "part ids must be non-negative integers"))
}

/// Parse and validate a metadata document. Unknown fields are ignored.
pub fn parse_metadata(json: &str) -> Result<AssetMetadata, UrdfError> {
    let doc: Value = serde_json::from_str(json).map_err(|e| schema("$", format!("invalid JSON: {e}")))?;
    let root = object(&doc, "$")?;

    let obj = object(required(root, "object_captions", "$")?, "$.object_captions")?;
    let name = required(obj, "name", "$.object_captions")?
        .as_str()
        .ok_or_else(|| schema("$.object_captions.name", "expected a string"))?
        .to_string();
    let scale = leading_number(required(obj, "scale", "$.object_captions")?, "$.object_captions.scale")?;
    if scale <= 0.0 {
        return Err(schema("$.object_captions.scale", "must be positive"));
    }

    let parts_v = object(required(root, "parts_captions", "$")?, "$.parts_captions")?;
    if parts_v.is_empty() {
        return Err(schema("$.parts_captions", "at least one part is required"));
    }
    let mut parts = BTreeMap::new();
    for (key, value) in parts_v {
        let path = format!("$.parts_captions.{key}");
        let id = part_id(key, &path)?;
        let rec = parse_part(id, value, &path)?;
        if parts.insert(id, rec).is_some() {
            return Err(schema(&path, "duplicate part id"));
        }
    }

    if let Some(vox) = root.get("parts_voxels") {
        for (key, value) in object(vox, "$.parts_voxels")? {
            let path = format!("$.parts_voxels.{key}");
            let id = part_id(key, &path)?;
            let text = value.as_str().ok_or_else(|| schema(&path, "expected a token string"))?;
            parts
                .get_mut(&id)
                .ok_or_else(|| schema(&path, "no matching entry in parts_captions"))?
                .tokens = Some(text.to_string());
        }
    }

    let roots: Vec<PartId> = parts.values().filter(|p| p.parent.is_none()).map(|p| p.id).collect();
    if roots.len() > 1 {
        return Err(UrdfError::MultipleRoots(roots));
    }
    for p in parts.values() {
        if let Some(parent) = p.parent {
            if !parts.contains_key(&parent) {
                return Err(UrdfError::UnknownParent { part: p.id, parent });
            }
        }
    }
    Ok(AssetMetadata { name, scale, parts })
}

fn parse_part(id: PartId, value: &Value, path: &str) -> Result<PartRecord, UrdfError> {
    let m = object(value, path)?;
    let t = required(m, "type", path)?;
    let joint_type = t
        .as_str()
        .and_then(JointType::parse)
        .ok_or_else(|| schema(format!("{path}.type"), format!("unknown joint type {t}")))?;
    let parent = match m.get("parent") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(part_id(s, &format!("{path}.parent"))?),
        Some(v) => Some(
            v.as_u64()
                .and_then(|n| PartId::try_from(n).ok())
                .ok_or_else(|| schema(format!("{path}.parent"), "expected a part id"))?,
        ),
    };
    let center = m.get("center").map(|v| int_array::<3>(v, &format!("{path}.center"), 0, CENTER_MAX)).transpose()?;
    let axis = m.get("axis").map(|v| int_array::<3>(v, &format!("{path}.axis"), 0, AXIS_MAX)).transpose()?;
    let limits =
        m.get("limits").map(|v| int_array::<2>(v, &format!("{path}.limits"), -LIMIT_MAX, LIMIT_MAX)).transpose()?;

    if parent.is_some() && joint_type.canonical().is_actuated() {
        for (key, present) in [("center", center.is_some()), ("axis", axis.is_some()), ("limits", limits.is_some())] {
            if !present {
                return Err(schema(format!("{path}.{key}"), format!("required for {} joints", joint_type.name())));
            }
        }
    }

    let text = |key: &str| -> Result<Option<String>, UrdfError> {
        match m.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(schema(format!("{path}.{key}"), "expected a string")),
        }
    };
    let num = |keys: &[&str]| -> Result<Option<f64>, UrdfError> {
        for key in keys {
            if let Some(v) = m.get(*key) {
                let x = leading_number(v, &format!("{path}.{key}"))?;
                if x < 0.0 {
                    return Err(schema(format!("{path}.{key}"), "must be non-negative"));
                }
                return Ok(Some(x));
            }
        }
        Ok(None)
    };
    Ok(PartRecord {
        id,
        joint_type,
        parent,
        center,
        axis,
        limits,
        material: text("material")?,
        density: num(&["density"])?,
        youngs_modulus: num(&["Young's Modulus (GPa)", "youngs_modulus"])?,
        friction: num(&["friction"])?,
        caption: text("caption")?.or(text("name")?),
        tokens: None,
    })
}
