//! `articulate`: mesh + metadata to articulated URDF assets, and the tools
//! around it.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use articulate_core::codec::CodecProfile;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "articulate", version, about = "Turn static meshes plus kinematic metadata into articulated URDF assets")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Configuration file (`key = value`); flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (training, k-means, surface sampling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a mesh into the unit cube and write its surface occupancy grid.
    Voxelize(VoxelizeArgs),
    /// Validate a token stream, print its statistics, optionally rewrite it canonically.
    Tokens(TokensArgs),
    /// Train the sparse VQ autoencoder and write a checkpoint.
    TrainVq(TrainArgs),
    /// Encode an occupancy grid (or mesh) into a token stream.
    Encode(EncodeArgs),
    /// Decode a token stream into an occupancy grid.
    Decode(DecodeArgs),
    /// Segment a mesh from per-part seed grids.
    Segment(SegmentArgs),
    /// Build a URDF from metadata and per-part meshes.
    Urdf(UrdfArgs),
    /// Score predicted assets against ground truth.
    Eval(EvalArgs),
    /// Run every stage: voxelize, decode part tokens, segment, split, emit URDF.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TokensArgs {
    /// Token text file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub profile: Option<CodecProfile>,
    /// Write the canonical (sorted, single-spaced) stream here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training manifest: `data = [...]`, `synthetic = true|false`, and an optional `[train]` table.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub profile: Option<CodecProfile>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// JSON report with loss summary and per-shape reconstruction IoU.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-step loss terms as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Occupancy grid file; use --mesh to voxelize on the fly instead.
    #[arg(long, conflicts_with = "mesh", required_unless_present = "mesh")]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// `ID=grid.avgx`, one per part; grids live in the mesh's normalized frame.
    #[arg(long = "part", required = true)]
    pub parts: Vec<String>,
    /// Output directory for part OBJs and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write one face label per line here.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct UrdfArgs {
    #[arg(long)]
    pub metadata: PathBuf,
    /// Directory of `part_<id>.obj` files.
    #[arg(long)]
    pub parts: PathBuf,
    /// Source mesh whose normalization places joint centres; defaults to the union of the parts.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub physics: PhysicsArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PhysicsArgs {
    /// Unit of the metadata `scale` value: mm, cm or m.
    #[arg(long)]
    pub scale_unit: Option<String>,
    /// Length of one mesh unit in metres.
    #[arg(long)]
    pub mesh_unit_m: Option<f64>,
    #[arg(long)]
    pub default_density: Option<f64>,
    #[arg(long)]
    pub default_friction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted asset: a URDF file or a pipeline output directory.
    #[arg(long, required_unless_present_any = ["batch", "pred_meta"])]
    pub pred: Option<PathBuf>,
    /// Predicted asset given as metadata JSON (with --pred-parts).
    #[arg(long, requires = "pred_parts", conflicts_with = "pred")]
    pub pred_meta: Option<PathBuf>,
    #[arg(long)]
    pub pred_parts: Option<PathBuf>,
    /// Ground-truth metadata JSON.
    #[arg(long, required_unless_present = "batch", requires = "gt_parts")]
    pub gt: Option<PathBuf>,
    /// Ground-truth directory of `part_<id>.obj` files.
    #[arg(long)]
    pub gt_parts: Option<PathBuf>,
    /// Batch file, one job per line: `name category pred gt_meta gt_parts`
    /// or `name category pred_meta pred_parts gt_meta gt_parts`.
    #[arg(long, conflicts_with_all = ["pred", "pred_meta", "gt"])]
    pub batch: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub category: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub scale_unit: Option<String>,
    /// Format printed on stdout.
    #[arg(long, value_enum, default_value = "text")]
    pub format: ReportFormat,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub text: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of per-part meshes used to derive part seeds.
    #[arg(long)]
    pub part_meshes: Option<PathBuf>,
    #[arg(long)]
    pub profile: Option<CodecProfile>,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[command(flatten)]
    pub physics: PhysicsArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

