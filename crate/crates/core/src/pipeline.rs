//! End-to-end conversion of a mesh plus metadata into an articulated asset.
//!
//! Output directory layout:
//!
//! ```text
//! out/
//!   parts/part_<id>.obj   one submesh per part
//!   asset.urdf            links reference parts/… relative to this file
//!   manifest.json         part id -> file, face count, seed count
//!   summary.json          token statistics, per-part counts, stage timings
//! ```
//!
//! Part seeds come from one of three sources, in order of preference:
//! per-part meshes given alongside the input (voxelized, and passed through
//! the autoencoder when a checkpoint is given), or the metadata token strings
//! decoded with the checkpoint.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{compression_stats, parse_tokens, CodecError, CodecProfile, CompressionStats};
use crate::exec::Exec;
use crate::mesh::{Mesh, MeshError};
use crate::segment::{extract_seeds, manifest_json, segment_mesh, split_mesh, write_parts, PartId, SegmentError, SegmentParams};
use crate::urdf::{
    build_kinematic_tree, emit_urdf, parse_metadata, AssetMetadata, DecodeOptions, PartGeometry, ScaleUnit, UrdfError,
    UrdfOptions,
};
use crate::voxel::{normalize_mesh, NormalizationTransform, OccupancyGrid, VoxelError, Voxelizer, DEFAULT_MARGIN, DEFAULT_RESOLUTION};
use crate::vq::{VqError, VqModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    LoadMesh,
    Metadata,
    Normalize,
    Voxelize,
    Checkpoint,
    Tokens,
    Decode,
    Seeds,
    Segment,
    Split,
    Tree,
    Urdf,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::LoadMesh => "load-mesh",
            Stage::Metadata => "metadata",
            Stage::Normalize => "normalize",
            Stage::Voxelize => "voxelize",
            Stage::Checkpoint => "checkpoint",
            Stage::Tokens => "tokens",
            Stage::Decode => "decode",
            Stage::Seeds => "seeds",
            Stage::Segment => "segment",
            Stage::Split => "split",
            Stage::Tree => "tree",
            Stage::Urdf => "urdf",
            Stage::Write => "write",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Urdf(#[from] UrdfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Error)]
#[error("{stage} stage failed for {}: {source}", path.display())]
pub struct PipelineError {
    pub stage: Stage,
    pub path: PathBuf,
    #[source]
    pub source: StageError,
}

impl PipelineError {
    /// True when the failure lies with the inputs rather than this program
    /// or the output location.
    pub fn is_input_error(&self) -> bool {
        match (&self.stage, &self.source) {
            (Stage::Write, _) => false,
            (Stage::Urdf, StageError::Urdf(UrdfError::InvalidUrdf(_))) => false,
            (_, StageError::Io(e)) => matches!(e.kind(), std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidData),
            _ => true,
        }
    }
}

fn at<E: Into<StageError>>(stage: Stage, path: &Path) -> impl FnOnce(E) -> PipelineError + '_ {
    move |e| PipelineError { stage, path: path.to_path_buf(), source: e.into() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mesh: PathBuf,
    pub metadata: PathBuf,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Directory of `part_<id>.obj` files in the input mesh frame.
    pub part_meshes: Option<PathBuf>,
    /// Expected codec profile; checked against the checkpoint when set.
    pub profile: Option<CodecProfile>,
    pub resolution: usize,
    pub segment: SegmentParams,
    pub scale_unit: ScaleUnit,
    pub urdf: UrdfOptions,
    /// Recorded in the summary; the pipeline itself draws no random numbers.
    pub seed: u64,
    pub exec: Exec,
}

impl PipelineConfig {
    pub fn new(mesh: impl Into<PathBuf>, metadata: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            mesh: mesh.into(),
            metadata: metadata.into(),
            out_dir: out_dir.into(),
            checkpoint: None,
            part_meshes: None,
            profile: None,
            resolution: DEFAULT_RESOLUTION,
            segment: SegmentParams::default(),
            scale_unit: ScaleUnit::default(),
            urdf: UrdfOptions::default(),
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    /// Metadata token strings decoded by the checkpoint.
    MetadataTokens,
    /// Part meshes voxelized, encoded and decoded by the checkpoint.
    PartMeshTokens,
    /// Part meshes voxelized and used directly.
    PartMeshVoxels,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartSummary {
    pub tokens: Option<CompressionStats>,
    pub decoded_voxels: usize,
    pub seed_count: usize,
    pub face_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub asset: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub profile: Option<String>,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
    pub object_voxels: usize,
    /// Whole-object token statistics when a checkpoint is available.
    pub object_tokens: Option<CompressionStats>,
    pub parts: BTreeMap<String, PartSummary>,
    pub joints: BTreeMap<String, String>,
    pub timing_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub urdf: String,
    pub manifest: String,
    pub summary: Summary,
}

struct Timer(BTreeMap<String, f64>, Instant);

impl Timer {
    fn lap(&mut self, stage: Stage) {
        let now = Instant::now();
        self.0.insert(stage.to_string(), (now - self.1).as_secs_f64() * 1e3);
        self.1 = now;
    }
}

fn read_text(path: &Path, stage: Stage) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(at(stage, path))
}

/// Per-part occupancy grids at the pipeline resolution.
struct PartGrids {
    grids: Vec<(PartId, OccupancyGrid)>,
    tokens: BTreeMap<PartId, CompressionStats>,
    source: SeedSource,
}

fn part_grids(
    cfg: &PipelineConfig,
    meta: &AssetMetadata,
    transform: &NormalizationTransform,
    model: Option<&VqModel>,
    timer: &mut Timer,
) -> Result<PartGrids, PipelineError> {
    let mut tokens = BTreeMap::new();
    let ids: Vec<PartId> = meta.parts.keys().copied().collect();

    if let Some(dir) = &cfg.part_meshes {
        let voxelizer = Voxelizer { exec: cfg.exec, ..Voxelizer::default() };
        let mut grids = Vec::with_capacity(ids.len());
        for &id in &ids {
            let path = dir.join(format!("part_{id}.obj"));
            let mut mesh = Mesh::load_obj(&path).map_err(at(Stage::LoadMesh, &path))?;
            for v in &mut mesh.vertices {
                *v = transform.apply(*v);
            }
            grids.push((id, voxelizer.voxelize(&mesh, cfg.resolution).map_err(at(Stage::Voxelize, &path))?));
        }
        timer.lap(Stage::Voxelize);
        let Some(model) = model else {
            return Ok(PartGrids { grids, tokens, source: SeedSource::PartMeshVoxels });
        };
        let ckpt = cfg.checkpoint.as_deref().unwrap_or(Path::new(""));
        let mut out = Vec::with_capacity(grids.len());
        for (id, g) in &grids {
            let seq = model.tokens_for(g, cfg.exec).map_err(at(Stage::Tokens, ckpt))?;
            tokens.insert(*id, compression_stats(&seq));
            out.push((*id, model.decode_tokens(&seq, cfg.exec).map_err(at(Stage::Decode, ckpt))?.grid));
        }
        timer.lap(Stage::Decode);
        return Ok(PartGrids { grids: out, tokens, source: SeedSource::PartMeshTokens });
    }

    let Some(model) = model else {
        return Err(at(Stage::Tokens, &cfg.metadata)(StageError::Input(
            "decoding parts_voxels tokens needs a VQ checkpoint (or supply per-part meshes)".into(),
        )));
    };
    let ckpt = cfg.checkpoint.as_deref().unwrap_or(Path::new(""));
    let mut seqs = Vec::with_capacity(ids.len());
    for &id in &ids {
        let text = meta.parts[&id].tokens.as_deref().ok_or_else(|| {
            at(Stage::Tokens, &cfg.metadata)(StageError::Input(format!(
                "$.parts_voxels.{id} is missing; supply per-part meshes to derive it"
            )))
        })?;
        let seq = parse_tokens(text, model.codec()).map_err(|e| {
            at(Stage::Tokens, &cfg.metadata)(StageError::Input(format!("$.parts_voxels.{id}: {e}")))
        })?;
        tokens.insert(id, compression_stats(&seq));
        seqs.push((id, seq));
    }
    timer.lap(Stage::Tokens);
    let mut grids = Vec::with_capacity(ids.len());
    for (id, seq) in &seqs {
        grids.push((*id, model.decode_tokens(seq, cfg.exec).map_err(at(Stage::Decode, ckpt))?.grid));
    }
    timer.lap(Stage::Decode);
    Ok(PartGrids { grids, tokens, source: SeedSource::MetadataTokens })
}

/// Everything [`build_asset`] produces: the written documents, the per-part
/// submeshes and the seeds that labelled them.
pub type BuiltAsset = (PipelineOutput, Vec<(PartId, Mesh)>, crate::segment::SeedSet);

/// Compute the asset without touching the output directory.
pub fn build_asset(cfg: &PipelineConfig) -> Result<BuiltAsset, PipelineError> {
    let mut timer = Timer(BTreeMap::new(), Instant::now());
    let mesh = Mesh::load_obj(&cfg.mesh).map_err(at(Stage::LoadMesh, &cfg.mesh))?;
    timer.lap(Stage::LoadMesh);
    let meta = parse_metadata(&read_text(&cfg.metadata, Stage::Metadata)?).map_err(at(Stage::Metadata, &cfg.metadata))?;
    timer.lap(Stage::Metadata);

    let (normalized, transform) = normalize_mesh(&mesh, DEFAULT_MARGIN).map_err(at(Stage::Normalize, &cfg.mesh))?;
    timer.lap(Stage::Normalize);
    let object = Voxelizer { exec: cfg.exec, ..Voxelizer::default() }
        .voxelize(&normalized, cfg.resolution)
        .map_err(at(Stage::Voxelize, &cfg.mesh))?;
    timer.lap(Stage::Voxelize);

    let model = match &cfg.checkpoint {
        Some(p) => {
            let m = VqModel::load(p).map_err(at(Stage::Checkpoint, p))?;
            if m.config.grid_dims != [cfg.resolution; 3] {
                return Err(at(Stage::Checkpoint, p)(StageError::Input(format!(
                    "checkpoint grid {:?} does not match resolution {}",
                    m.config.grid_dims, cfg.resolution
                ))));
            }
            if let Some(profile) = cfg.profile {
                if m.codec() != profile.codec() {
                    return Err(at(Stage::Checkpoint, p)(StageError::Input(format!(
                        "checkpoint latent grid {} / {} entries does not match profile {}",
                        m.config.latent_dims,
                        m.config.codebook_size,
                        profile.name()
                    ))));
                }
            }
            Some(m)
        }
        None => None,
    };
    timer.lap(Stage::Checkpoint);
    let object_tokens = match &model {
        Some(m) => Some(compression_stats(
            &m.tokens_for(&object, cfg.exec).map_err(at(Stage::Tokens, &cfg.mesh))?,
        )),
        None => None,
    };

    let parts = part_grids(cfg, &meta, &transform, model.as_ref(), &mut timer)?;
    let seeds = extract_seeds(&parts.grids, &transform).map_err(at(Stage::Seeds, &cfg.metadata))?;
    timer.lap(Stage::Seeds);
    let labels = segment_mesh(&mesh, &seeds, &cfg.segment, cfg.exec).map_err(at(Stage::Segment, &cfg.mesh))?;
    timer.lap(Stage::Segment);
    let submeshes = split_mesh(&mesh, &labels).map_err(at(Stage::Split, &cfg.mesh))?;
    timer.lap(Stage::Split);

    let tree = build_kinematic_tree(&meta, &transform, DecodeOptions { scale_unit: cfg.scale_unit })
        .map_err(at(Stage::Tree, &cfg.metadata))?;
    timer.lap(Stage::Tree);
    let geometry: BTreeMap<PartId, PartGeometry> =
        submeshes.iter().map(|(id, m)| (*id, PartGeometry::from_mesh(format!("parts/part_{id}.obj"), m))).collect();
    let urdf = emit_urdf(&tree, &meta, &geometry, &cfg.urdf).map_err(at(Stage::Urdf, &cfg.metadata))?;
    timer.lap(Stage::Urdf);

    let mut manifest = BTreeMap::new();
    for (id, m) in &submeshes {
        manifest.insert(
            id.to_string(),
            crate::segment::PartEntry {
                file: format!("parts/part_{id}.obj"),
                face_count: m.faces.len(),
                seed_count: seeds.seed_count(*id),
            },
        );
    }
    let face_counts: BTreeMap<PartId, usize> = submeshes.iter().map(|(id, m)| (*id, m.faces.len())).collect();
    let summary = Summary {
        asset: meta.name.clone(),
        seed: cfg.seed,
        seed_source: parts.source,
        profile: model.as_ref().map(|m| m.config.latent_dims.to_string()),
        mesh_vertices: mesh.vertices.len(),
        mesh_faces: mesh.faces.len(),
        object_voxels: object.count(),
        object_tokens,
        parts: parts
            .grids
            .iter()
            .map(|(id, g)| {
                (
                    id.to_string(),
                    PartSummary {
                        tokens: parts.tokens.get(id).copied(),
                        decoded_voxels: g.count(),
                        seed_count: seeds.seed_count(*id),
                        face_count: face_counts.get(id).copied().unwrap_or(0),
                    },
                )
            })
            .collect(),
        joints: tree.edges.iter().map(|e| (e.child.to_string(), e.joint.kind.urdf_name().to_string())).collect(),
        timing_ms: timer.0,
    };
    Ok((PipelineOutput { urdf, manifest: manifest_json(&manifest), summary }, submeshes, seeds))
}

/// Run every stage and write the output directory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    let (out, submeshes, seeds) = build_asset(cfg)?;
    let dir = &cfg.out_dir;
    let parts_dir = dir.join("parts");
    write_parts(&parts_dir, &submeshes, &seeds).map_err(at(Stage::Write, &parts_dir))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| at(Stage::Write, &p)(e))
    };
    write("asset.urdf", &out.urdf)?;
    write("manifest.json", &out.manifest)?;
    let mut summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    summary.push('\n');
    write("summary.json", &summary)?;
    Ok(out)
}
