use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::gradcheck::GradMethod;
use crate::pooling::Method;
use crate::synth::DEFAULT_SPREAD;

#[derive(Debug, Parser)]
#[command(name = "cbp", version, about = "Compact bilinear pooling experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pool a descriptor grid file into global descriptors
    Pool(PoolArgs),
    /// Measure kernel approximation error against the exact kernel
    KernelSweep(SweepArgs),
    /// Compare analytic gradients with finite differences
    Gradcheck(GradcheckArgs),
    /// Time forward and backward passes
    Bench(BenchArgs),
    /// Generate synthetic descriptor grids and labels
    Synth(SynthArgs),
    /// Few-shot accuracy as a function of examples per class
    Fewshot(FewshotArgs),
    /// Train logistic regression on pooled descriptors
    Train(TrainArgs),
    /// Evaluate a trained model on pooled descriptors
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Output dimension (rm and ts only)
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Skip signed square root and l2 normalization
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long = "c", default_value_t = 32)]
    pub c: usize,
    #[arg(long = "h", default_value_t = 3)]
    pub h: usize,
    #[arg(long = "w", default_value_t = 3)]
    pub w: usize,
    /// Projection dimensions, comma separated
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "64,128,256,512,1024,2048,4096,8192"
    )]
    pub dim: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "rm,ts")]
    pub method: Vec<Method>,
    /// Random grid pairs
    #[arg(long, default_value_t = 4)]
    pub pairs: usize,
    /// Parameter draws per pair and dimension
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub method: GradMethod,
    #[arg(long = "c", default_value_t = 8)]
    pub c: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long = "h", default_value_t = 2)]
    pub h: usize,
    #[arg(long = "w", default_value_t = 2)]
    pub w: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative finite-difference step
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long = "c", default_value_t = 512)]
    pub c: usize,
    /// Output dimension (rm and ts only)
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "h", default_value_t = 13)]
    pub h: usize,
    #[arg(long = "w", default_value_t = 13)]
    pub w: usize,
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
    #[arg(long = "c", default_value_t = 32)]
    pub c: usize,
    #[arg(long = "h", default_value_t = 4)]
    pub h: usize,
    #[arg(long = "w", default_value_t = 4)]
    pub w: usize,
    /// Per-channel noise standard deviation
    #[arg(long, default_value_t = DEFAULT_SPREAD, allow_negative_numbers = true)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid file to write
    #[arg(long)]
    pub output: PathBuf,
    /// Label file to write
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct FewshotArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,7,14")]
    pub shots: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV destination; stdout when omitted
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Pooled descriptor file (h = w = 1)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Model file to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = cbp_core::postproc::logreg::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Class count; defaults to one past the largest label
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pooled descriptor file (h = w = 1)
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Model file written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Per-sample predictions CSV
    #[arg(long)]
    pub output: Option<PathBuf>,
}
