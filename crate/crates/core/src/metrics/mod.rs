//! Articulation and geometry evaluation of a predicted asset against ground
//! truth.
//!
//! Parts are matched one-to-one by maximizing the summed IoU of their
//! co-voxelized occupancy. On the matched pairs the module reports joint-type
//! accuracy, axis error (radians between unsigned axes), origin error (L2 in
//! mesh units, plus the distance from the predicted origin to the true axis
//! line), IoU and Chamfer distance in the shared normalized frame.

mod assign;
mod load;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::mesh::{cross, dot, norm, sub, triangle_area, Mesh, MeshError, Point3};
use crate::segment::PartId;
use crate::urdf::{JointKind, UrdfError};
use crate::voxel::{normalization_for, NormalizationTransform, OccupancyGrid, VoxelError, Voxelizer, DEFAULT_MARGIN};
use crate::vq::chamfer;

pub use assign::max_score_assignment;
pub use load::{load_metadata_asset, load_urdf_asset, AssetSource};
pub use report::{aggregate, Aggregate, EvaluationReport, ReportUnits};

pub const DEFAULT_SAMPLES: usize = 4096;
pub const DEFAULT_EVAL_RESOLUTION: usize = 64;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("asset has no parts")]
    NoParts,
    #[error("part {0} has no surface area to sample")]
    EmptyGeometry(PartId),
    #[error("joint axis {0:?} has zero length")]
    NonUnitAxis(Point3),
    #[error("link {0:?} is not named part_<id>")]
    LinkName(String),
    #[error("{path}: {source}")]
    Mesh { path: PathBuf, source: MeshError },
    #[error("{path}: {source}")]
    Urdf { path: PathBuf, source: UrdfError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Voxel(#[from] VoxelError),
}

/// Joint of a part relative to its parent, in the asset's mesh frame.
#[derive(Debug, Clone, PartialEq)]
pub struct JointRecord {
    pub kind: JointKind,
    pub origin: Point3,
    /// Present for revolute and prismatic joints.
    pub axis: Option<Point3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPart {
    pub id: PartId,
    pub mesh: Mesh,
    /// `None` for the root part.
    pub joint: Option<JointRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalAsset {
    pub name: String,
    pub parts: Vec<EvalPart>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub resolution: usize,
    /// Surface samples per part for the Chamfer distance.
    pub samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { resolution: DEFAULT_EVAL_RESOLUTION, samples: DEFAULT_SAMPLES, seed: 0, exec: Exec::default() }
    }
}

fn unit(a: Point3) -> Result<(Point3, bool), MetricsError> {
    let n = norm(a);
    if !(n > 0.0) || !n.is_finite() {
        return Err(MetricsError::NonUnitAxis(a));
    }
    Ok((a.map(|v| v / n), (n - 1.0).abs() > 1e-6))
}

/// Angle in `[0, π/2]` between two axes, ignoring their sign.
pub fn axis_error(a: Point3, b: Point3) -> Result<f64, MetricsError> {
    let (a, _) = unit(a)?;
    let (b, _) = unit(b)?;
    // atan2 stays accurate for nearly parallel axes, where acos does not.
    Ok(norm(cross(a, b)).atan2(dot(a, b).abs()))
}

/// Distance from `p` to the line through `origin` along `axis`.
pub fn point_line_distance(p: Point3, origin: Point3, axis: Point3) -> Result<f64, MetricsError> {
    let (u, _) = unit(axis)?;
    Ok(norm(cross(sub(p, origin), u)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointScores {
    pub type_accuracy: f64,
    /// Mean over matched pairs whose true joint moves.
    pub axis_error: Option<f64>,
    pub origin_error: Option<f64>,
    pub origin_line_error: Option<f64>,
    pub warnings: Vec<String>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Joint scores over matched `(pred, gt)` pairs; `None` marks a root part.
///
/// Type accuracy counts unmatched ground-truth parts and unmatched predicted
/// moving parts as failures. Axis and origin errors use the pairs whose true
/// joint is revolute or prismatic; a prediction without an axis there scores
/// π/2, and one without any joint is left out of the origin errors.
pub fn joint_metrics(
    matched: &[(Option<&JointRecord>, Option<&JointRecord>)],
    unmatched_pred: &[Option<&JointRecord>],
    unmatched_gt: usize,
) -> Result<JointScores, MetricsError> {
    let mut warnings = Vec::new();
    let mut check = |j: Option<&JointRecord>, side: &str| -> Result<Option<Point3>, MetricsError> {
        match j.and_then(|j| j.axis) {
            Some(a) => {
                let (u, renormalized) = unit(a)?;
                if renormalized {
                    warnings.push(format!("{side} axis {a:?} was not unit length and has been normalized"));
                }
                Ok(Some(u))
            }
            None => Ok(None),
        }
    };

    let kind = |j: Option<&JointRecord>| j.map(|j| j.kind);
    let correct = matched.iter().filter(|(p, g)| kind(*p) == kind(*g)).count();
    let extra_moving = unmatched_pred.iter().filter(|j| j.is_some_and(|j| j.kind.is_actuated())).count();
    let total = matched.len() + unmatched_gt + extra_moving;
    let type_accuracy = if total == 0 { 1.0 } else { correct as f64 / total as f64 };

    let (mut axes, mut origins, mut lines) = (Vec::new(), Vec::new(), Vec::new());
    for &(p, g) in matched {
        let Some(g) = g.filter(|g| g.kind.is_actuated()) else { continue };
        let Some(ga) = check(Some(g), "ground-truth")? else { continue };
        let pa = check(p.filter(|p| p.kind.is_actuated()), "predicted")?;
        axes.push(match pa {
            Some(pa) => axis_error(pa, ga)?,
            None => std::f64::consts::FRAC_PI_2,
        });
        if let Some(p) = p {
            origins.push(norm(sub(p.origin, g.origin)));
            lines.push(point_line_distance(p.origin, g.origin, ga)?);
        }
    }
    Ok(JointScores {
        type_accuracy,
        axis_error: mean(&axes),
        origin_error: mean(&origins),
        origin_line_error: mean(&lines),
        warnings,
    })
}

/// `n` area-weighted uniform samples on the surface of `mesh`.
pub fn sample_surface<R: Rng>(mesh: &Mesh, n: usize, rng: &mut R) -> Option<Vec<Point3>> {
    let areas: Vec<f64> = (0..mesh.faces.len()).map(|f| triangle_area(&mesh.triangle(f))).collect();
    let pick = WeightedIndex::new(&areas).ok()?;
    Some(
        (0..n)
            .map(|_| {
                let [a, b, c] = mesh.triangle(pick.sample(rng));
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                let s = r1.sqrt();
                let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
                [0, 1, 2].map(|k| wa * a[k] + wb * b[k] + wc * c[k])
            })
            .collect(),
    )
}

fn transformed(mesh: &Mesh, t: &NormalizationTransform) -> Mesh {
    let mut m = mesh.clone();
    for v in &mut m.vertices {
        *v = t.apply(*v);
    }
    m
}

/// Per-part data in the shared normalized frame.
struct Prepared {
    grid: OccupancyGrid,
    samples: Vec<Point3>,
}

fn prepare(part: &EvalPart, t: &NormalizationTransform, opts: &EvalOptions) -> Result<Prepared, MetricsError> {
    let mesh = transformed(&part.mesh, t);
    let voxelizer = Voxelizer { exec: Exec::Sequential, ..Voxelizer::default() };
    let grid = voxelizer.voxelize(&mesh, opts.resolution)?;
    // Every part draws from the same stream so identical meshes give
    // identical samples whatever their id.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let samples = sample_surface(&mesh, opts.samples, &mut rng).ok_or(MetricsError::EmptyGeometry(part.id))?;
    Ok(Prepared { grid, samples })
}

fn all_vertices<'a>(parts: impl IntoIterator<Item = &'a EvalPart>) -> Vec<Point3> {
    parts.into_iter().flat_map(|p| p.mesh.vertices.iter().copied()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometryScores {
    pub iou: f64,
    pub cd: f64,
}

/// IoU and Chamfer distance of two part geometries normalized together.
pub fn part_geometry_metrics(pred: &EvalPart, gt: &EvalPart, opts: &EvalOptions) -> Result<GeometryScores, MetricsError> {
    let t = normalization_for(&all_vertices([pred, gt]), DEFAULT_MARGIN)?;
    let p = prepare(pred, &t, opts)?;
    let g = prepare(gt, &t, opts)?;
    Ok(GeometryScores { iou: iou(&p.grid, &g.grid), cd: chamfer(&p.samples, &g.samples, opts.exec) })
}

fn iou(a: &OccupancyGrid, b: &OccupancyGrid) -> f64 {
    let union = a.union_count(b).expect("grids share a resolution");
    if union == 0 {
        return 1.0;
    }
    a.intersection_count(b).expect("grids share a resolution") as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchRecord {
    pub pred: PartId,
    pub gt: PartId,
    pub iou: f64,
    pub cd: f64,
}

/// Scores of one predicted/ground-truth asset pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReport {
    pub name: String,
    pub category: String,
    pub type_accuracy: f64,
    pub axis_error: Option<f64>,
    pub origin_error: Option<f64>,
    pub origin_line_error: Option<f64>,
    /// Summed matched IoU over the larger part count.
    pub iou: f64,
    /// Mean over matched parts.
    pub cd: f64,
    pub matches: Vec<MatchRecord>,
    pub unmatched_pred: Vec<PartId>,
    pub unmatched_gt: Vec<PartId>,
    pub warnings: Vec<String>,
}

pub fn evaluate(pred: &EvalAsset, gt: &EvalAsset, opts: &EvalOptions) -> Result<PairReport, MetricsError> {
    if pred.parts.is_empty() || gt.parts.is_empty() {
        return Err(MetricsError::NoParts);
    }
    let t = normalization_for(&all_vertices(pred.parts.iter().chain(&gt.parts)), DEFAULT_MARGIN)?;
    let prep = |parts: &[EvalPart]| -> Result<Vec<Prepared>, MetricsError> {
        exec::map_slice(opts.exec, parts, |p| prepare(p, &t, opts)).into_iter().collect()
    };
    let (pp, gp) = (prep(&pred.parts)?, prep(&gt.parts)?);

    let ious: Vec<Vec<f64>> = pp.iter().map(|p| gp.iter().map(|g| iou(&p.grid, &g.grid)).collect()).collect();
    let assignment = max_score_assignment(&ious, gp.len());

    let pairs: Vec<(usize, usize)> = assignment.iter().enumerate().filter_map(|(p, g)| g.map(|g| (p, g))).collect();
    let cds = exec::map_slice(opts.exec, &pairs, |&(p, g)| chamfer(&pp[p].samples, &gp[g].samples, Exec::Sequential));
    let matches: Vec<MatchRecord> = pairs
        .iter()
        .zip(&cds)
        .map(|(&(p, g), &cd)| MatchRecord { pred: pred.parts[p].id, gt: gt.parts[g].id, iou: ious[p][g], cd })
        .collect();

    let unmatched_pred: Vec<usize> = (0..pred.parts.len()).filter(|&p| assignment[p].is_none()).collect();
    let unmatched_gt: Vec<usize> = (0..gt.parts.len()).filter(|&g| !pairs.iter().any(|&(_, mg)| mg == g)).collect();

    let joint_pairs: Vec<_> = pairs.iter().map(|&(p, g)| (pred.parts[p].joint.as_ref(), gt.parts[g].joint.as_ref())).collect();
    let extra: Vec<_> = unmatched_pred.iter().map(|&p| pred.parts[p].joint.as_ref()).collect();
    let joints = joint_metrics(&joint_pairs, &extra, unmatched_gt.len())?;

    let larger = pred.parts.len().max(gt.parts.len());
    Ok(PairReport {
        name: gt.name.clone(),
        category: String::new(),
        type_accuracy: joints.type_accuracy,
        axis_error: joints.axis_error,
        origin_error: joints.origin_error,
        origin_line_error: joints.origin_line_error,
        iou: matches.iter().map(|m| m.iou).sum::<f64>() / larger as f64,
        cd: matches.iter().map(|m| m.cd).sum::<f64>() / matches.len() as f64,
        matches,
        unmatched_pred: unmatched_pred.iter().map(|&p| pred.parts[p].id).collect(),
        unmatched_gt: unmatched_gt.iter().map(|&g| gt.parts[g].id).collect(),
        warnings: joints.warnings,
    })
}

/// One entry of a batch evaluation. An empty name keeps the ground-truth
/// asset's own name.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalJob {
    pub name: String,
    pub category: String,
    pub pred: AssetSource,
    pub gt: AssetSource,
}

/// Load and score every job, then aggregate. Jobs run concurrently under
/// `opts.exec`; each job scores sequentially inside.
pub fn evaluate_batch(jobs: &[EvalJob], opts: &EvalOptions) -> Result<EvaluationReport, MetricsError> {
    let inner = EvalOptions { exec: Exec::Sequential, ..*opts };
    let pairs: Vec<PairReport> = exec::map_slice(opts.exec, jobs, |job| {
        let pred = job.pred.load()?;
        let gt = job.gt.load()?;
        let mut r = evaluate(&pred, &gt, &inner)?;
        if !job.name.is_empty() {
            r.name = job.name.clone();
        }
        r.category = job.category.clone();
        Ok(r)
    })
    .into_iter()
    .collect::<Result<_, MetricsError>>()?;
    Ok(EvaluationReport::new(pairs))
}

/// Group reports by category, in name order.
pub fn by_category(pairs: &[PairReport]) -> BTreeMap<String, Vec<&PairReport>> {
    let mut out: BTreeMap<String, Vec<&PairReport>> = BTreeMap::new();
    for p in pairs {
        out.entry(p.category.clone()).or_default().push(p);
    }
    out
}
