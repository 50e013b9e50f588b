//! Subcommand bodies. Each one reads its inputs, calls the library, and
//! writes its outputs; nothing is cached between steps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use articulate_core::codec::{compression_stats, parse_tokens};
use articulate_core::metrics::{evaluate_batch, AssetSource, EvalJob, EvalOptions, MetricsError};
use articulate_core::pipeline::{run_pipeline, PipelineConfig};
use articulate_core::segment::{extract_seeds, labels_to_string, manifest_json, segment_mesh, split_mesh, write_parts, PartId, SegmentParams};
use articulate_core::shapes::fixture_suite;
use articulate_core::urdf::{build_kinematic_tree, emit_urdf, parse_metadata, DecodeOptions, PartGeometry, ScaleUnit, UrdfOptions};
use articulate_core::voxel::{normalization_for, normalize_mesh, OccupancyGrid, Voxelizer, DEFAULT_MARGIN, DEFAULT_RESOLUTION};
use articulate_core::vq::{train_vqvae, TrainConfig, VqModel};
use articulate_core::{Exec, Mesh};
use serde::Deserialize;
use serde_json::json;

use crate::config::FileConfig;
use crate::error::{bad_input, failed_output, CliError};
use crate::{
    Cli, Command, DecodeArgs, EncodeArgs, EvalArgs, GlobalArgs, PhysicsArgs, PipelineArgs, ReportFormat, SegmentArgs,
    TokensArgs, TrainArgs, UrdfArgs, VoxelizeArgs,
};

struct Ctx {
    file: FileConfig,
    flag_seed: Option<u64>,
    seed: u64,
    exec: Exec,
}

impl Ctx {
    fn new(global: &GlobalArgs, file: FileConfig) -> Result<Self, CliError> {
        let exec = match global.jobs.or(file.jobs) {
            Some(0) => return Err(CliError::Input("--jobs must be at least 1".into())),
            Some(1) => Exec::Sequential,
            Some(n) => {
                #[cfg(feature = "parallel")]
                {
                    // Only fails if a pool already exists, which is harmless.
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
                #[cfg(not(feature = "parallel"))]
                let _ = n;
                Exec::Parallel
            }
            None => Exec::Parallel,
        };
        Ok(Ctx { flag_seed: global.seed, seed: global.seed.or(file.seed).unwrap_or(0), exec, file })
    }

    fn resolution(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.resolution).unwrap_or(DEFAULT_RESOLUTION)
    }

    fn scale_unit(&self, flag: Option<&str>) -> Result<ScaleUnit, CliError> {
        match flag.or(self.file.scale_unit.as_deref()) {
            Some(s) => ScaleUnit::from_str(s).map_err(CliError::Input),
            None => Ok(ScaleUnit::default()),
        }
    }

    fn segment_params(&self, sigma: Option<f64>, alpha: Option<f64>, iterations: Option<usize>) -> SegmentParams {
        let d = SegmentParams::default();
        SegmentParams {
            sigma: sigma.or(self.file.sigma),
            alpha: alpha.or(self.file.alpha).unwrap_or(d.alpha),
            iterations: iterations.or(self.file.iterations).unwrap_or(d.iterations),
        }
    }

    fn urdf_options(&self, p: &PhysicsArgs) -> UrdfOptions {
        let d = UrdfOptions::default();
        UrdfOptions {
            mesh_unit_m: p.mesh_unit_m.or(self.file.mesh_unit_m).unwrap_or(d.mesh_unit_m),
            default_density: p.default_density.or(self.file.default_density).unwrap_or(d.default_density),
            default_friction: p.default_friction.or(self.file.default_friction).unwrap_or(d.default_friction),
            min_mass: self.file.min_mass.unwrap_or(d.min_mass),
            ..d
        }
    }

    fn checkpoint(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        flag.map(Path::to_path_buf).or_else(|| self.file.checkpoint.clone()).ok_or_else(|| {
            CliError::Input("no VQ checkpoint given (use --checkpoint or `checkpoint` in the config file)".into())
        })
    }

    fn model(&self, flag: Option<&Path>) -> Result<VqModel, CliError> {
        let p = self.checkpoint(flag)?;
        VqModel::load(&p).map_err(bad_input(&p))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let ctx = Ctx::new(&cli.global, file)?;
    match cli.command {
        Command::Voxelize(a) => voxelize(&ctx, a),
        Command::Tokens(a) => tokens(&ctx, a),
        Command::TrainVq(a) => train(&ctx, a),
        Command::Encode(a) => encode(&ctx, a),
        Command::Decode(a) => decode(&ctx, a),
        Command::Segment(a) => segment(&ctx, a),
        Command::Urdf(a) => urdf(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Pipeline(a) => pipeline(&ctx, a),
    }
}

fn load_mesh(path: &Path) -> Result<Mesh, CliError> {
    Mesh::load_obj(path).map_err(bad_input(path))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(bad_input(path))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(failed_output(dir))?;
    }
    std::fs::write(path, contents).map_err(failed_output(path))
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

fn voxelize_mesh(mesh: &Mesh, path: &Path, resolution: usize, exec: Exec) -> Result<OccupancyGrid, CliError> {
    let (normalized, _) = normalize_mesh(mesh, DEFAULT_MARGIN).map_err(bad_input(path))?;
    Voxelizer { exec, ..Voxelizer::default() }.voxelize(&normalized, resolution).map_err(bad_input(path))
}

fn voxelize(ctx: &Ctx, a: VoxelizeArgs) -> Result<(), CliError> {
    let mesh = load_mesh(&a.mesh)?;
    let res = ctx.resolution(a.resolution);
    let t = normalization_for(&mesh.vertices, DEFAULT_MARGIN).map_err(bad_input(&a.mesh))?;
    let grid = voxelize_mesh(&mesh, &a.mesh, res, ctx.exec)?;
    let mut bytes = Vec::new();
    grid.write_to(&mut bytes).map_err(failed_output(&a.out))?;
    write_file(&a.out, bytes)?;
    print_json(json!({
        "resolution": res,
        "occupied": grid.count(),
        "occupancy_fraction": grid.occupancy_fraction(),
        "transform": {"scale": t.scale, "translation": t.translation},
    }));
    Ok(())
}

fn tokens(ctx: &Ctx, a: TokensArgs) -> Result<(), CliError> {
    let profile = a.profile.or(ctx.file.profile).unwrap_or_default();
    let seq = parse_tokens(&read_text(&a.input)?, profile.codec()).map_err(bad_input(&a.input))?;
    if let Some(out) = &a.out {
        write_file(out, format!("{seq}\n"))?;
    }
    let s = compression_stats(&seq);
    print_json(json!({
        "profile": profile.name(),
        "sparse_tokens": s.sparse_tokens,
        "dense_tokens": s.dense_tokens,
        "reduction": s.reduction,
    }));
    Ok(())
}

fn grid_for_model(ctx: &Ctx, model: &VqModel, grid: Option<&Path>, mesh: Option<&Path>) -> Result<OccupancyGrid, CliError> {
    let dims = model.config.grid_dims;
    let g = match (grid, mesh) {
        (Some(p), _) => OccupancyGrid::load(p).map_err(bad_input(p))?,
        (None, Some(p)) => {
            if dims[0] != dims[1] || dims[1] != dims[2] {
                return Err(CliError::Input(format!("model grid {dims:?} is not cubic; pass a voxel grid")));
            }
            voxelize_mesh(&load_mesh(p)?, p, dims[0], ctx.exec)?
        }
        (None, None) => return Err(CliError::Input("give --grid or --mesh".into())),
    };
    if g.dims() != dims {
        return Err(CliError::Input(format!("grid is {:?}, the model expects {dims:?}", g.dims())));
    }
    Ok(g)
}

fn encode(ctx: &Ctx, a: EncodeArgs) -> Result<(), CliError> {
    let model = ctx.model(a.checkpoint.as_deref())?;
    let grid = grid_for_model(ctx, &model, a.grid.as_deref(), a.mesh.as_deref())?;
    let seq = model.tokens_for(&grid, ctx.exec).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&a.out, format!("{seq}\n"))?;
    let s = compression_stats(&seq);
    print_json(json!({"sparse_tokens": s.sparse_tokens, "dense_tokens": s.dense_tokens, "reduction": s.reduction}));
    Ok(())
}

fn decode(ctx: &Ctx, a: DecodeArgs) -> Result<(), CliError> {
    let model = ctx.model(a.checkpoint.as_deref())?;
    let seq = parse_tokens(&read_text(&a.tokens)?, model.codec()).map_err(bad_input(&a.tokens))?;
    let decoded = model.decode_tokens(&seq, ctx.exec).map_err(bad_input(&a.tokens))?;
    let mut bytes = Vec::new();
    decoded.grid.write_to(&mut bytes).map_err(failed_output(&a.out))?;
    write_file(&a.out, bytes)?;
    print_json(json!({"tokens": seq.len(), "occupied": decoded.grid.count()}));
    Ok(())
}

/// Training manifest: data paths relative to the manifest, plus an optional
/// `[train]` table of training options.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainManifest {
    #[serde(default)]
    data: Vec<PathBuf>,
    /// Add the built-in synthetic shape suite (spheres, boxes, brackets).
    #[serde(default)]
    synthetic: bool,
    #[serde(default)]
    train: toml::Table,
}

fn train_config(ctx: &Ctx, manifest: &TrainManifest, a: &TrainArgs, path: &Path) -> Result<TrainConfig, CliError> {
    let mut table = toml::Table::new();
    if let Some(seed) = ctx.file.seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    if let Some(p) = ctx.file.profile {
        table.insert("profile".into(), toml::Value::String(p.name().into()));
    }
    table.extend(manifest.train.clone());
    if let Some(seed) = ctx.flag_seed {
        table.insert("seed".into(), toml::Value::Integer(seed as i64));
    }
    if let Some(s) = a.steps {
        table.insert("steps".into(), toml::Value::Integer(s as i64));
    }
    if let Some(p) = a.profile {
        table.insert("profile".into(), toml::Value::String(p.name().into()));
    }
    if let Some(lr) = a.learning_rate {
        table.insert("learning_rate".into(), toml::Value::Float(lr));
    }
    TrainConfig::from_manifest(&table.to_string()).map_err(bad_input(path))
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<(), CliError> {
    let text = read_text(&a.manifest)?;
    let manifest: TrainManifest = toml::from_str(&text).map_err(bad_input(&a.manifest))?;
    let cfg = train_config(ctx, &manifest, &a, &a.manifest)?;
    let res = cfg.vq_config().grid_dims;
    let base = a.manifest.parent().unwrap_or(Path::new("."));

    let mut names = Vec::new();
    let mut grids = Vec::new();
    for rel in &manifest.data {
        let p = base.join(rel);
        let g = if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")) {
            voxelize_mesh(&load_mesh(&p)?, &p, res[0], ctx.exec)?
        } else {
            OccupancyGrid::load(&p).map_err(bad_input(&p))?
        };
        if g.dims() != res {
            return Err(CliError::Input(format!("{}: grid is {:?}, training expects {res:?}", p.display(), g.dims())));
        }
        names.push(rel.display().to_string());
        grids.push(g);
    }
    if manifest.synthetic {
        for (name, mesh) in fixture_suite() {
            grids.push(voxelize_mesh(&mesh, Path::new(&name), res[0], ctx.exec)?);
            names.push(name);
        }
    }
    if grids.is_empty() {
        return Err(CliError::Input(format!("{}: no training data (set `data` or `synthetic = true`)", a.manifest.display())));
    }

    let started = std::time::Instant::now();
    let out = train_vqvae(&grids, &cfg, ctx.exec).map_err(|e| CliError::Internal(format!("training: {e}")))?;
    let seconds = started.elapsed().as_secs_f64();
    out.model.save(&a.out).map_err(failed_output(&a.out))?;

    let window = out.trace.len().min(100);
    let mean = |s: &[articulate_core::vq::VqLoss]| s.iter().map(|l| l.total).sum::<f64>() / s.len().max(1) as f64;
    let first = mean(&out.trace[..window]);
    let last = mean(&out.trace[out.trace.len() - window..]);
    let model = out.model.rounded_to_f32();
    let mut shapes = Vec::new();
    for (name, g) in names.iter().zip(&grids) {
        let r = model.reconstruct(g, ctx.exec).map_err(|e| CliError::Internal(e.to_string()))?;
        let iou = articulate_core::voxel::grid_iou(g, &r.grid).map_err(|e| CliError::Internal(e.to_string()))?;
        let tokens = model.tokens_for(g, ctx.exec).map_err(|e| CliError::Internal(e.to_string()))?.len();
        shapes.push(json!({"name": name, "iou": iou, "tokens": tokens}));
    }
    let report = json!({
        "steps": cfg.steps,
        "seed": cfg.seed,
        "profile": cfg.profile.name(),
        "seconds": seconds,
        "first_window_loss": first,
        "last_window_loss": last,
        "final_loss": out.trace.last().map(|l| l.total),
        "shapes": shapes,
    });
    if let Some(p) = &a.report {
        write_file(p, format!("{}\n", serde_json::to_string_pretty(&report).expect("json")))?;
    }
    if let Some(p) = &a.trace {
        let mut csv = String::from("step,total,recon,codebook,commit\n");
        for (i, l) in out.trace.iter().enumerate() {
            let _ = writeln!(csv, "{i},{},{},{},{}", l.total, l.recon, l.codebook, l.commit);
        }
        write_file(p, csv)?;
    }
    print_json(json!({
        "checkpoint": a.out.display().to_string(),
        "steps": cfg.steps,
        "first_window_loss": first,
        "last_window_loss": last,
        "min_iou": shapes.iter().filter_map(|s| s["iou"].as_f64()).fold(f64::INFINITY, f64::min),
    }));
    Ok(())
}

fn parse_part_arg(s: &str) -> Result<(PartId, PathBuf), CliError> {
    let (id, path) = s.split_once('=').ok_or_else(|| CliError::Input(format!("--part {s:?}: expected ID=PATH")))?;
    let id = id.trim().parse().map_err(|_| CliError::Input(format!("--part {s:?}: {id:?} is not a part id")))?;
    Ok((id, PathBuf::from(path)))
}

fn segment(ctx: &Ctx, a: SegmentArgs) -> Result<(), CliError> {
    let mesh = load_mesh(&a.mesh)?;
    let t = normalization_for(&mesh.vertices, DEFAULT_MARGIN).map_err(bad_input(&a.mesh))?;
    let mut grids = Vec::new();
    for spec in &a.parts {
        let (id, p) = parse_part_arg(spec)?;
        grids.push((id, OccupancyGrid::load(&p).map_err(bad_input(&p))?));
    }
    let seeds = extract_seeds(&grids, &t).map_err(|e| CliError::Input(format!("seeds: {e}")))?;
    let params = ctx.segment_params(a.sigma, a.alpha, a.iterations);
    let labels = segment_mesh(&mesh, &seeds, &params, ctx.exec).map_err(bad_input(&a.mesh))?;
    let parts = split_mesh(&mesh, &labels).map_err(bad_input(&a.mesh))?;
    let manifest = write_parts(&a.out, &parts, &seeds).map_err(failed_output(&a.out))?;
    write_file(&a.out.join("manifest.json"), manifest_json(&manifest))?;
    if let Some(p) = &a.labels {
        write_file(p, labels_to_string(&labels))?;
    }
    let faces: BTreeMap<String, usize> = parts.iter().map(|(id, m)| (id.to_string(), m.faces.len())).collect();
    print_json(json!({"parts": faces}));
    Ok(())
}

/// `target` written relative to directory `from`, with `/` separators.
fn relative_path(target: &Path, from: &Path) -> String {
    let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let (t, f) = (abs(target), abs(from));
    let tc: Vec<Component> = t.components().collect();
    let fc: Vec<Component> = f.components().collect();
    let common = tc.iter().zip(&fc).take_while(|(a, b)| a == b).count();
    let mut parts: Vec<String> = vec!["..".into(); fc.len() - common];
    parts.extend(tc[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    parts.join("/")
}

fn urdf(ctx: &Ctx, a: UrdfArgs) -> Result<(), CliError> {
    let meta = parse_metadata(&read_text(&a.metadata)?).map_err(bad_input(&a.metadata))?;
    let mut meshes = BTreeMap::new();
    for &id in meta.parts.keys() {
        let p = a.parts.join(format!("part_{id}.obj"));
        meshes.insert(id, (load_mesh(&p)?, p));
    }
    let t = match &a.mesh {
        Some(p) => normalization_for(&load_mesh(p)?.vertices, DEFAULT_MARGIN).map_err(bad_input(p))?,
        None => {
            let all: Vec<_> = meshes.values().flat_map(|(m, _)| m.vertices.iter().copied()).collect();
            normalization_for(&all, DEFAULT_MARGIN).map_err(bad_input(&a.parts))?
        }
    };
    let decode = DecodeOptions { scale_unit: ctx.scale_unit(a.physics.scale_unit.as_deref())? };
    let tree = build_kinematic_tree(&meta, &t, decode).map_err(bad_input(&a.metadata))?;
    let out_dir = a.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let geometry: BTreeMap<PartId, PartGeometry> = meshes
        .iter()
        .map(|(id, (m, p))| (*id, PartGeometry::from_mesh(relative_path(p, out_dir), m)))
        .collect();
    let xml = emit_urdf(&tree, &meta, &geometry, &ctx.urdf_options(&a.physics))
        .map_err(|e| CliError::Internal(format!("urdf: {e}")))?;
    write_file(&a.out, &xml)?;
    print_json(json!({"links": tree.order.len(), "joints": tree.edges.len()}));
    Ok(())
}

fn parse_batch(path: &Path, decode: DecodeOptions) -> Result<Vec<EvalJob>, CliError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut jobs = Vec::new();
    for (n, line) in read_text(path)?.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let meta = |json: &str, parts: &str| AssetSource::Metadata {
            json: base.join(json),
            parts_dir: base.join(parts),
            decode,
        };
        let (pred, gt) = match f.len() {
            5 => (AssetSource::Urdf(base.join(f[2])), meta(f[3], f[4])),
            6 => (meta(f[2], f[3]), meta(f[4], f[5])),
            k => {
                return Err(CliError::Input(format!(
                    "{} line {}: expected 5 or 6 fields, found {k}",
                    path.display(),
                    n + 1
                )))
            }
        };
        let category = if f[1] == "-" { String::new() } else { f[1].to_string() };
        jobs.push(EvalJob { name: f[0].to_string(), category, pred, gt });
    }
    if jobs.is_empty() {
        return Err(CliError::Input(format!("{}: no jobs", path.display())));
    }
    Ok(jobs)
}

fn eval(ctx: &Ctx, a: EvalArgs) -> Result<(), CliError> {
    let decode = DecodeOptions { scale_unit: ctx.scale_unit(a.scale_unit.as_deref())? };
    let jobs = match &a.batch {
        Some(b) => parse_batch(b, decode)?,
        None => {
            let (gt, gt_parts) = a.gt.clone().zip(a.gt_parts.clone()).ok_or_else(|| {
                CliError::Input("--gt and --gt-parts are required without --batch".into())
            })?;
            let pred = match (&a.pred, &a.pred_meta, &a.pred_parts) {
                (Some(p), _, _) => AssetSource::Urdf(p.clone()),
                (None, Some(j), Some(d)) => AssetSource::Metadata { json: j.clone(), parts_dir: d.clone(), decode },
                _ => return Err(CliError::Input("give --pred, or --pred-meta with --pred-parts".into())),
            };
            vec![EvalJob {
                name: a.name.clone().unwrap_or_default(),
                category: a.category.clone().unwrap_or_default(),
                pred,
                gt: AssetSource::Metadata { json: gt, parts_dir: gt_parts, decode },
            }]
        }
    };
    let opts = EvalOptions {
        resolution: ctx.resolution(None),
        samples: a.samples.or(ctx.file.samples).unwrap_or(articulate_core::metrics::DEFAULT_SAMPLES),
        seed: ctx.seed,
        exec: ctx.exec,
    };
    let report = evaluate_batch(&jobs, &opts).map_err(|e| match e {
        MetricsError::Io { ref source, .. } if source.kind() != std::io::ErrorKind::NotFound => {
            CliError::Internal(e.to_string())
        }
        e => CliError::Input(e.to_string()),
    })?;
    let (json_text, text) = (report.to_json(), report.to_text());
    if let Some(p) = &a.json {
        write_file(p, &json_text)?;
    }
    if let Some(p) = &a.text {
        write_file(p, &text)?;
    }
    match a.format {
        ReportFormat::Text => print!("{text}"),
        ReportFormat::Json => print!("{json_text}"),
    }
    Ok(())
}

fn pipeline(ctx: &Ctx, a: PipelineArgs) -> Result<(), CliError> {
    let mut cfg = PipelineConfig::new(&a.mesh, &a.metadata, &a.out);
    cfg.checkpoint = a.checkpoint.clone().or_else(|| ctx.file.checkpoint.clone());
    cfg.part_meshes = a.part_meshes.clone();
    cfg.profile = a.profile.or(ctx.file.profile);
    cfg.resolution = ctx.resolution(a.resolution);
    cfg.segment = ctx.segment_params(a.sigma, a.alpha, a.iterations);
    cfg.scale_unit = ctx.scale_unit(a.physics.scale_unit.as_deref())?;
    cfg.urdf = ctx.urdf_options(&a.physics);
    cfg.seed = ctx.seed;
    cfg.exec = ctx.exec;
    let out = run_pipeline(&cfg).map_err(|e| {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    })?;
    print_json(json!({
        "out": a.out.display().to_string(),
        "parts": out.summary.parts.len(),
        "joints": out.summary.joints,
    }));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths() {
        assert_eq!(relative_path(Path::new("/a/b/parts/p.obj"), Path::new("/a/b")), "parts/p.obj");
        assert_eq!(relative_path(Path::new("/a/parts/p.obj"), Path::new("/a/b/c")), "../../parts/p.obj");
    }

    #[test]
    fn part_args() {
        assert_eq!(parse_part_arg("3=x/y.avgx").unwrap(), (3, PathBuf::from("x/y.avgx")));
        assert!(parse_part_arg("x.avgx").is_err());
        assert!(parse_part_arg("a=x.avgx").is_err());
    }

    #[test]
    fn profiles_parse_from_flags() {
        use articulate_core::codec::CodecProfile;
        assert_eq!("16x8x8".parse::<CodecProfile>().unwrap(), CodecProfile::Wide16x8x8);
    }
}
