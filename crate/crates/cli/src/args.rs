use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "csq",
    version,
    about = "Stability, fluid, transform, branching and simulation analysis of a multiclass queue with class-dependent arrivals"
)]
pub struct Cli {
    /// Write outputs and manifest.json into this directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// Format printed on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a model file and list every problem found.
    Validate(ModelArg),
    /// Perron root of the offspring matrix and the stability verdict.
    Stability(StabilityArgs),
    /// Piecewise-linear fluid trajectory and drain time.
    Fluid(FluidArgs),
    /// Busy-period Laplace–Stieltjes transforms on a θ grid.
    Lst(LstArgs),
    /// Branching-tree sampling, extinction and busy-period expectations.
    Branching(BranchingArgs),
    /// Event-driven simulation of the queue.
    Simulate(SimulateArgs),
    /// Empirical busy-period tail against the heavy-tail constants.
    Tail(TailArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Stability(_) => "stability",
            Command::Fluid(_) => "fluid",
            Command::Lst(_) => "lst",
            Command::Branching(_) => "branching",
            Command::Simulate(_) => "simulate",
            Command::Tail(_) => "tail",
        }
    }

    pub fn model_path(&self) -> &PathBuf {
        match self {
            Command::Validate(a) => &a.model,
            Command::Stability(a) => &a.model.model,
            Command::Fluid(a) => &a.model.model,
            Command::Lst(a) => &a.model.model,
            Command::Branching(a) => &a.model.model,
            Command::Simulate(a) => &a.model.model,
            Command::Tail(a) => &a.model.model,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Branching(a) => Some(a.seed),
            Command::Simulate(a) => Some(a.seed),
            Command::Tail(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model file (JSON).
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Half-width of the boundary band around ρ = 1.
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FluidPolicy {
    StaticPriority,
    ServeInTurn,
}

#[derive(Debug, Args)]
pub struct FluidArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Initial fluid levels, one per class.
    #[arg(long, value_delimiter = ',', required = true)]
    pub q0: Vec<f64>,
    #[arg(long, value_enum, default_value_t = FluidPolicy::StaticPriority)]
    pub policy: FluidPolicy,
    /// Priority order of classes (1-based), highest first. Defaults to 1..K.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    /// Integration horizon. Defaults to twice the drain time when stable.
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LstArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 1e-3)]
    pub theta_min: f64,
    #[arg(long, default_value_t = 1e2)]
    pub theta_max: f64,
    #[arg(long, default_value_t = 64)]
    pub points: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct BranchingArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub seed: u64,
    /// Ancestor class (1-based). Defaults to every class.
    #[arg(long)]
    pub class: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    /// Generation cap per tree.
    #[arg(long, default_value_t = 10_000)]
    pub cap_gen: usize,
    /// Individual cap per tree.
    #[arg(long, default_value_t = 10_000_000)]
    pub cap_ind: u64,
    /// Also estimate E[B_{i;z}]/z for an initial service requirement z.
    #[arg(long)]
    pub z: Option<f64>,
    /// Regular-variation index for the tail constants.
    #[arg(long, requires = "c_tilde")]
    pub alpha: Option<f64>,
    /// Tail weights c̃_i, one per class.
    #[arg(long, value_delimiter = ',', requires = "alpha")]
    pub c_tilde: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimPolicyArg {
    Fifo,
    Preemptive,
    NonPreemptive,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = SimPolicyArg::Fifo)]
    pub policy: SimPolicyArg,
    /// Priority order of classes (1-based), highest first. Defaults to 1..K.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Stop after this many busy periods.
    #[arg(long)]
    pub busy_periods: Option<usize>,
    /// Stop at this time.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Start every busy period with one customer of this class (1-based)
    /// instead of running from λ₀; needs --busy-periods.
    #[arg(long, requires = "busy_periods", conflicts_with_all = ["trace", "probe"])]
    pub initiator: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub warmup: f64,
    /// Record Q, W and Y at this spacing.
    #[arg(long)]
    pub sample_interval: Option<f64>,
    #[arg(long, default_value_t = 1_000_000_000)]
    pub max_events: u64,
    /// Stream the event log to this file.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Sweep these multipliers of Λ instead of a single run; needs --horizon.
    #[arg(long, value_delimiter = ',', requires = "horizon")]
    pub probe: Option<Vec<f64>>,
    /// Idle fraction separating the two regimes in a sweep.
    #[arg(long, default_value_t = 0.01)]
    pub idle_threshold: f64,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long)]
    pub seed: u64,
    /// Initiating class (1-based).
    #[arg(long)]
    pub class: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub reps: usize,
    /// Probe points. Defaults to empirical quantiles 0.5, 0.9, 0.99, 0.999, 0.9999.
    #[arg(long, value_delimiter = ',')]
    pub x: Option<Vec<f64>>,
    #[command(flatten)]
    pub policy: PolicyArgs,
}
