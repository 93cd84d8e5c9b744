use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phasefit::estimators::KernelMetric;
use phasefit::experiments::ReportFormat;

#[derive(Debug, Parser)]
#[command(
    name = "phasefit",
    version,
    about = "Estimate closed motion curves from gait-phase samples"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic trajectory and its segmentation from a config's curve.
    Synth(SynthArgs),
    /// Write a periodic stride segmentation for a trajectory.
    Segment(SegmentArgs),
    /// Fit a partition or kernel estimate.
    Fit(FitArgs),
    /// L2 projection of a config's curve onto a dyadic partition.
    Project(ProjectArgs),
    /// Monte-Carlo error study of the partition estimator over (n, m).
    RateStudy(StudyArgs),
    /// Partition and kernel fits at matching resolution across levels.
    CenterSweep(StudyArgs),
    /// Kernel fits with fixed centers across kernel widths.
    BetaSweep(StudyArgs),
    /// Evaluate two estimates on a grid and tabulate their gap.
    Compare(CompareArgs),
    /// Print the built-in experiment config.
    DefaultConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Partition,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Chordal,
    Geodesic,
}

impl From<MetricArg> for KernelMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Chordal => KernelMetric::Chordal,
            MetricArg::Geodesic => KernelMetric::Geodesic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Svg,
    All,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Svg => ReportFormat::Svg,
            FormatArg::All => ReportFormat::All,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Experiment config supplying curve, measure, noise and seed
    /// (built-in default if omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of frames (default: largest sample count in the config).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub strides: usize,
    /// Stride period T_p in seconds.
    #[arg(long, default_value_t = 1.0)]
    pub period: f64,
    /// Start time of the first stride.
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Start time t_p of the first stride.
    #[arg(long)]
    pub start: f64,
    /// Stride period T_p in seconds.
    #[arg(long)]
    pub period: f64,
    /// Number of strides (default: enough to reach the last frame).
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trajectory CSV; repeat to pool several recordings.
    #[arg(long)]
    pub trajectory: Vec<PathBuf>,
    /// Segmentation JSON, one per trajectory in the same order.
    #[arg(long)]
    pub segmentation: Vec<PathBuf>,
    /// Fit synthetic data drawn from this experiment config instead.
    #[arg(long, conflicts_with_all = ["trajectory", "segmentation"])]
    pub config: Option<PathBuf>,
    /// Seed for synthetic data (overrides the config).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Synthetic sample count (default: largest in the config).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Partition level n (2^n cells).
    #[arg(long)]
    pub level: Option<u32>,
    /// Number of equispaced kernel centers.
    #[arg(long)]
    pub centers: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, value_enum, default_value = "chordal")]
    pub metric: MetricArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub level: u32,
    /// Midpoint-rule resolution (default from the config or the level).
    #[arg(long)]
    pub quadrature: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Experiment config (built-in default if omitted).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub format: FormatArg,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Number of evaluation phases.
    #[arg(long, default_value_t = 4096)]
    pub grid: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub format: FormatArg,
}
