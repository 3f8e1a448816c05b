//! Command-line orchestration of the reconstruction pipeline.
//!
//! Every subcommand is an ordinary function over parsed arguments so the
//! binary, the integration tests and other tools share one code path.

pub mod commands;
pub mod config;
pub mod error;
mod files;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "caricature", version, about = "Topology-consistent caricature head reconstruction")]
pub struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides CARICATURE_OUT and the config file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (overrides CARICATURE_THREADS and the config file).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Occupancy field to registered template mesh, writing every intermediate.
    Reconstruct(ReconstructArgs),
    /// Landmark-guided registration of the template onto a mesh.
    Register(RegisterArgs),
    /// PCA shape basis from a directory of topology-consistent meshes.
    BuildBasis(BuildBasisArgs),
    /// 3D landmarks from per-view 2D detections on a mesh.
    DetectLandmarks(DetectArgs),
    /// P2S (head and face) and MPJPE report.
    Eval(EvalArgs),
    /// Per-vertex shape variance, globally and per region.
    Variance(VarianceArgs),
    /// Linear blends of two topology-consistent meshes.
    Interpolate(InterpolateArgs),
    /// Synthetic corpus drawn from a generated basis.
    Synth(SynthArgs),
    /// Train the landmark refinement network on a synthetic corpus.
    TrainVcgcn(TrainArgs),
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("occupancy").required(true).args(["mesh", "grid"]))]
pub struct ReconstructArgs {
    /// Closed mesh used as an occupancy oracle.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Sampled occupancy grid file.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Landmark file; its 2D records are the detections, or its 3D records are
    /// projected through the stub detector when no 2D records are present.
    #[arg(long)]
    pub landmarks: PathBuf,
    /// Camera rig the 2D detections were made in; fitted to the extracted mesh when absent.
    #[arg(long)]
    pub rig: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub target: PathBuf,
    /// Landmark file with 3D records on the target.
    #[arg(long)]
    pub landmarks: PathBuf,
}

#[derive(Debug, Clone, Args)]
#[command(group = clap::ArgGroup::new("size").args(["components", "variance"]))]
pub struct BuildBasisArgs {
    /// Directory of `.obj` meshes, read in name order.
    #[arg(long)]
    pub meshes: PathBuf,
    #[arg(long)]
    pub components: Option<usize>,
    /// Keep components up to this fraction of the variance (default 0.99).
    #[arg(long)]
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub landmarks: PathBuf,
    #[arg(long)]
    pub rig: Option<PathBuf>,
    /// Emit the lifted landmarks without network refinement.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, requires = "gt_landmarks")]
    pub pred_landmarks: Option<PathBuf>,
    #[arg(long, requires = "pred_landmarks")]
    pub gt_landmarks: Option<PathBuf>,
    /// Skip the similarity alignment before measuring P2S.
    #[arg(long)]
    pub no_align: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VarianceArgs {
    #[arg(long)]
    pub meshes: PathBuf,
    /// Region mask file; the configured one when absent.
    #[arg(long)]
    pub masks: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Blend weights; values outside [0, 1] extrapolate.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Corpus directory written by `synth`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
}

/// Resolves the configuration (file, then environment, then flags), builds a
/// thread pool of the requested size and runs the command in it.
pub fn run(cli: Cli) -> CliResult<String> {
    run_with_env(cli, |k| std::env::var(k).ok())
}

pub fn run_with_env(cli: Cli, env: impl Fn(&str) -> Option<String>) -> CliResult<String> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.apply_overrides(cli.out.clone(), cli.threads, cli.seed, env)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| commands::dispatch(&config, &cli.command))
}
