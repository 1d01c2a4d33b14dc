use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "leapgrad",
    version,
    about = "Reversible ALF integration, gradient backends and studies",
    args_override_self = true,
    after_help = "Options may also come from a key=value file given with --config; \
                  flags on the command line win. LEAPGRAD_THREADS caps worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one initial value problem and write the trajectory.
    #[command(args_override_self = true)]
    Integrate(IntegrateArgs),
    /// Compute dL/dz0 and dL/dtheta for L = |z(T)|^2.
    #[command(args_override_self = true)]
    Grad(GradArgs),
    /// Run one of the studies.
    #[command(subcommand)]
    Study(Study),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldKind {
    /// dz/dt = alpha * z, componentwise.
    Linear,
    /// tanh MLP with time appended to the input.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormKind {
    Augmented,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mali,
    Adjoint,
    Aca,
    Naive,
    Fd,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct FieldArgs {
    #[arg(long, value_enum, default_value_t = FieldKind::Linear)]
    pub field: FieldKind,
    /// Rate of the linear field.
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    pub alpha: f64,
    /// Initial state, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "2",
        allow_negative_numbers = true
    )]
    pub z0: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t0: f64,
    /// Hidden widths of the MLP field.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub hidden: Vec<usize>,
    /// Seed for MLP initialisation.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Load MLP weights (.csv, anything else is read as binary).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Save the MLP weights in use (.csv or binary by extension).
    #[arg(long)]
    pub save_weights: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-5)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub atol: f64,
    /// Use fixed steps of this size instead of adaptive control.
    #[arg(long)]
    pub fixed_h: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub h_init: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub h_min: f64,
    #[arg(long, default_value_t = 1e3)]
    pub h_max: f64,
    #[arg(long, default_value_t = 20)]
    pub max_rejects: usize,
    /// Damping coefficient in (0.5, 1].
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = NormKind::Augmented)]
    pub norm: NormKind,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory for artifacts (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Key=value file of options; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    /// End time.
    #[arg(long = "T", allow_negative_numbers = true)]
    pub t_end: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GradArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long = "T", default_value_t = 1.0, allow_negative_numbers = true)]
    pub t_end: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Mali)]
    pub method: MethodArg,
    /// Do not propagate a_v through v0 = f(z0, t0).
    #[arg(long)]
    pub no_v0_coupling: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Subcommand)]
pub enum Study {
    /// Gradient errors of every backend on L = z(T)^2, dz/dt = alpha z.
    #[command(args_override_self = true)]
    Toy(ToyArgs),
    /// Truncation-order slopes on the linear field.
    #[command(args_override_self = true)]
    Order(OrderArgs),
    /// Stable set of damped ALF on the test equation.
    #[command(args_override_self = true)]
    Stability(StabilityArgs),
    /// Peak memory of every backend across tolerances.
    #[command(args_override_self = true)]
    Memory(MemoryArgs),
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.5",
        allow_negative_numbers = true
    )]
    pub alphas: Vec<f64>,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub z0: f64,
    #[arg(long = "T", value_delimiter = ',', default_value = "0.5,2,5,10")]
    pub t_list: Vec<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OrderArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub z0: f64,
    /// Added to the consistent v0 = alpha z0 (local study only).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub v0_offset: f64,
    /// Largest step is 2^-h_from.
    #[arg(long, default_value_t = 2)]
    pub h_from: i32,
    /// Smallest step is 2^-h_to.
    #[arg(long, default_value_t = 8)]
    pub h_to: i32,
    /// End-time errors of fixed-step runs on [0, T] instead of one-step errors.
    #[arg(long)]
    pub global: bool,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t_end: f64,
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.55,0.7,0.8,0.95,1.0")]
    pub eta: Vec<f64>,
    #[arg(long, default_value_t = 401)]
    pub resolution: usize,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub re_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub re_max: f64,
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    pub im_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub im_max: f64,
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct MemoryArgs {
    #[command(flatten)]
    pub field: FieldArgs,
    #[arg(long = "T", default_value_t = 5.0, allow_negative_numbers = true)]
    pub t_end: f64,
    /// Tolerance pairs rtol:atol, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1e-3:1e-4,1e-4:1e-5,1e-5:1e-6,1e-6:1e-7"
    )]
    pub tols: Vec<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}
