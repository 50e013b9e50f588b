//! Reading evaluation assets from disk.
//!
//! Two layouts are understood: a URDF whose links reference per-part meshes
//! (as the pipeline writes them), and a metadata JSON document next to a
//! directory of `part_<id>.obj` files (the ground-truth layout).

use std::path::{Path, PathBuf};

use crate::mesh::Mesh;
use crate::segment::PartId;
use crate::urdf::{build_kinematic_tree, parse_metadata, parse_urdf, DecodeOptions};
use crate::voxel::{normalization_for, DEFAULT_MARGIN};

use super::{all_vertices, EvalAsset, EvalPart, JointRecord, MetricsError};

#[derive(Debug, Clone, PartialEq)]
pub enum AssetSource {
    /// A URDF file, or a directory holding `asset.urdf`.
    Urdf(PathBuf),
    Metadata { json: PathBuf, parts_dir: PathBuf, decode: DecodeOptions },
}

impl AssetSource {
    pub fn load(&self) -> Result<EvalAsset, MetricsError> {
        match self {
            AssetSource::Urdf(p) => load_urdf_asset(p),
            AssetSource::Metadata { json, parts_dir, decode } => load_metadata_asset(json, parts_dir, *decode),
        }
    }
}

fn read(path: &Path) -> Result<String, MetricsError> {
    std::fs::read_to_string(path).map_err(|source| MetricsError::Io { path: path.into(), source })
}

fn mesh(path: &Path) -> Result<Mesh, MetricsError> {
    Mesh::load_obj(path).map_err(|source| MetricsError::Mesh { path: path.into(), source })
}

fn part_id(link: &str) -> Result<PartId, MetricsError> {
    link.strip_prefix("part_").and_then(|s| s.parse().ok()).ok_or_else(|| MetricsError::LinkName(link.into()))
}

pub fn load_urdf_asset(path: &Path) -> Result<EvalAsset, MetricsError> {
    let path = if path.is_dir() { path.join("asset.urdf") } else { path.to_path_buf() };
    let urdf = parse_urdf(&read(&path)?).map_err(|source| MetricsError::Urdf { path: path.clone(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut parts = Vec::with_capacity(urdf.links.len());
    for link in &urdf.links {
        let id = part_id(&link.name)?;
        let file = link.meshes.first().ok_or_else(|| MetricsError::Urdf {
            path: path.clone(),
            source: crate::urdf::UrdfError::MissingMesh(id),
        })?;
        let joint = urdf.joint_for_child(&link.name).map(|j| JointRecord {
            kind: j.kind,
            origin: urdf.link_frame(&link.name),
            axis: j.axis.filter(|_| j.kind.is_actuated()),
        });
        parts.push(EvalPart { id, mesh: mesh(&base.join(file))?, joint });
    }
    parts.sort_by_key(|p| p.id);
    Ok(EvalAsset { name: urdf.name, parts })
}

/// Joint centres are decoded against the normalization of the union of all
/// part meshes, which is the normalization of the mesh they were cut from.
pub fn load_metadata_asset(json: &Path, parts_dir: &Path, decode: DecodeOptions) -> Result<EvalAsset, MetricsError> {
    let urdf_err = |source| MetricsError::Urdf { path: json.into(), source };
    let meta = parse_metadata(&read(json)?).map_err(urdf_err)?;
    let mut parts = Vec::with_capacity(meta.parts.len());
    for &id in meta.parts.keys() {
        parts.push(EvalPart { id, mesh: mesh(&parts_dir.join(format!("part_{id}.obj")))?, joint: None });
    }
    let t = normalization_for(&all_vertices(&parts), DEFAULT_MARGIN)?;
    let tree = build_kinematic_tree(&meta, &t, decode).map_err(urdf_err)?;
    for p in &mut parts {
        p.joint = tree.edge_to(p.id).map(|e| JointRecord {
            kind: e.joint.kind,
            origin: e.joint.origin,
            axis: e.joint.kind.is_actuated().then_some(e.joint.axis),
        });
    }
    Ok(EvalAsset { name: meta.name, parts })
}
