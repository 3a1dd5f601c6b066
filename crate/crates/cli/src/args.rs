use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Global illumination by minimizing the rendering-equation residual of a
/// neural radiance field.
///
/// Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
/// Runs are bitwise reproducible for a given --seed only with --threads 1.
#[derive(Debug, Parser)]
#[command(name = "nrad", version)]
pub struct Cli {
    /// Worker threads (defaults to the machine's parallelism).
    #[arg(long, global = true, env = "NRAD_THREADS")]
    pub threads: Option<usize>,

    /// Log verbosity: error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a radiance field on a scene.
    Train(TrainArgs),
    /// Continue training a checkpoint on a modified scene.
    Finetune(FinetuneArgs),
    /// Render LHS, RHS or residual images from a checkpoint.
    Render(RenderArgs),
    /// Render a path-traced reference image.
    Pathtrace(PathtraceArgs),
    /// Print MSE and MAPE of an image against a reference.
    Compare(CompareArgs),
    /// Check residual-loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Print sparse-grid occupancy per level.
    GridStats(GridStatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Grid,
    Posenc,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Scattered radiance estimated with the field itself.
    #[value(name = "self")]
    SelfTrain,
    /// Scattered radiance replaced by path-traced estimates.
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizerArg {
    Mean,
    Lhs,
    Rhs,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RenderModeArg {
    Lhs,
    Rhs,
    Residual,
}

/// Optimization settings shared by `train` and `finetune`.
#[derive(Debug, Clone, Args)]
pub struct OptimArgs {
    /// Surface samples per step (N).
    #[arg(long)]
    pub n: Option<usize>,
    /// Incident samples per surface sample (M).
    #[arg(long)]
    pub m: Option<usize>,
    /// Training steps (S).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Base learning rate; decays by 0.33 at each third of the run.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Source of the scattered radiance in the residual.
    #[arg(long, value_enum, default_value = "self")]
    pub mode: ModeArg,
    /// Denominator of the relative residual.
    #[arg(long, value_enum, default_value = "mean")]
    pub normalizer: NormalizerArg,
    /// Stabilizer added to the residual normalizer.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Estimate emission by BSDF sampling only.
    #[arg(long)]
    pub no_emitter_sampling: bool,
    /// Write a checkpoint every K steps (default: max(1, S/10)).
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Samples per pixel of the final LHS preview.
    #[arg(long, default_value_t = 4)]
    pub preview_spp: usize,
    /// Arithmetic precision of training.
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: PrecisionArg,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Output directory for the log, checkpoints and preview.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Feature-grid levels (resolutions 2, 4, ..., 2^levels).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Feature vector length per grid vertex.
    #[arg(long, default_value_t = 16)]
    pub features: usize,
    /// MLP hidden width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Number of MLP linear layers.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Input encoding.
    #[arg(long, value_enum, default_value = "grid")]
    pub encoder: EncoderArg,
    /// Frequency bands of the positional encoding.
    #[arg(long, default_value_t = 6)]
    pub bands: usize,
    /// Omit normal and material inputs to the network.
    #[arg(long)]
    pub no_local_props: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    /// Modified scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Checkpoint trained on the original scene.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for the log, checkpoints and preview.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub optim: OptimArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scene the checkpoint was trained on.
    #[arg(long)]
    pub scene: PathBuf,
    /// Quantity to render.
    #[arg(long, value_enum, default_value = "lhs")]
    pub mode: RenderModeArg,
    /// Camera samples per pixel.
    #[arg(long, default_value_t = 1)]
    pub spp: usize,
    /// Incident samples per shading point; required for rhs and residual.
    #[arg(long, required_if_eq_any = [("mode", "rhs"), ("mode", "residual")])]
    pub m: Option<usize>,
    /// Output PFM; a PNG preview is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Preview exposure in stops.
    #[arg(long, default_value_t = 0.0)]
    pub exposure: f64,
    /// Override the scene camera's image width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Override the scene camera's image height.
    #[arg(long)]
    pub height: Option<usize>,
    /// Estimate emission by BSDF sampling only.
    #[arg(long)]
    pub no_emitter_sampling: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PathtraceArgs {
    /// Scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Camera samples per pixel.
    #[arg(long, default_value_t = 64)]
    pub spp: usize,
    /// Maximum bounces per path.
    #[arg(long, default_value_t = 64)]
    pub max_depth: usize,
    /// Output PFM; a PNG preview is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Preview exposure in stops.
    #[arg(long, default_value_t = 0.0)]
    pub exposure: f64,
    /// Override the scene camera's image width.
    #[arg(long)]
    pub width: Option<usize>,
    /// Override the scene camera's image height.
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Image to evaluate (PFM).
    pub image: PathBuf,
    /// Reference image (PFM).
    pub reference: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Coordinates probed per parameter tensor.
    #[arg(long, default_value_t = 24)]
    pub params_subsample: usize,
    /// Random seed of the frozen sample batch.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Scale weight gradients by 1.5 in the backward pass, to confirm the
    /// check detects a broken gradient.
    #[arg(long)]
    pub corrupt_backward: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridStatsArgs {
    /// Scene file.
    #[arg(long)]
    pub scene: PathBuf,
    /// Feature-grid levels.
    #[arg(long, default_value_t = 5)]
    pub levels: usize,
    /// Feature vector length per grid vertex.
    #[arg(long, default_value_t = 16)]
    pub features: usize,
}
