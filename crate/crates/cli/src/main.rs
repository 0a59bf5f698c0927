mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ContinuationOverrides, FileConfig, QuadratureOverrides};

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   sign mismatch against the reference table
  2   precision failure (quadrature refinement or plane checks)
  3   Newton failure during continuation (partial branch is still written)
  4   precondition refused (e.g. restricted kernel is not one-dimensional)
  5   I/O or configuration error
  64  usage error";

/// Bifurcation analysis of the planar Liouville system posed on the sphere.
#[derive(Parser)]
#[command(name = "liouville", version, after_help = EXIT_CODES)]
struct Cli {
    /// TOML file overriding the default numerical parameters.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for parallel work.
    #[arg(long, global = true, env = "LIOUVILLE_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Sign table of the curvature μ''(0), checked against the reference.
    Mu2Table(TableArgs),
    /// Continue the branch bifurcating at μ_n in the class X_{n,m}.
    Branch(BranchArgs),
    /// Kernel of the linearization at μ_n, full and restricted.
    Kernel(KernelArgs),
    /// Transfer a saved branch point to the plane and check it there.
    ValidatePlane(PlaneArgs),
    /// Evaluate P_n^m and its second-kind companion.
    Legendre(LegendreArgs),
}

#[derive(Args, Debug, Default)]
pub struct QuadratureFlags {
    /// Panels over [-1, 1].
    #[arg(long)]
    panels: Option<usize>,
    /// Gauss points per panel.
    #[arg(long)]
    points: Option<usize>,
    /// Window around each zero, as a fraction of the smallest zero gap.
    #[arg(long)]
    finite_part_radius: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
}

impl QuadratureFlags {
    fn overrides(&self) -> QuadratureOverrides {
        QuadratureOverrides {
            panel_count: self.panels,
            points_per_panel: self.points,
            finite_part_radius: self.finite_part_radius,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
        }
    }
}

#[derive(Args, Debug)]
pub struct TableArgs {
    #[arg(long, default_value_t = 3)]
    n_min: usize,
    #[arg(long, default_value_t = 10)]
    n_max: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(flatten)]
    quadrature: QuadratureFlags,
}

#[derive(Args, Debug)]
pub struct BranchArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Steps per direction.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    ds: Option<f64>,
    /// Largest degree kept in the expansion.
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    eps_max: Option<f64>,
    #[arg(long)]
    newton_tol: Option<f64>,
    #[arg(long)]
    max_newton_iters: Option<usize>,
    #[arg(long)]
    z_grid: Option<usize>,
    #[arg(long)]
    theta_grid: Option<usize>,
    /// Only points with |ε| up to this enter the curvature fit.
    #[arg(long, default_value_t = 0.03)]
    fit_window: f64,
    /// Branch JSON output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    quadrature: QuadratureFlags,
}

impl BranchArgs {
    fn overrides(&self) -> ContinuationOverrides {
        ContinuationOverrides {
            truncation: self.truncation,
            ds: self.ds,
            max_steps: self.steps,
            newton_tol: self.newton_tol,
            max_newton_iters: self.max_newton_iters,
            theta_grid: self.theta_grid,
            z_grid: self.z_grid,
            eps_max: self.eps_max,
        }
    }
}

#[derive(Args, Debug)]
pub struct KernelArgs {
    #[arg(long)]
    n: usize,
    /// Also report the kernel restricted to X_{n,m}.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
pub struct PlaneArgs {
    /// Branch JSON written by `branch`.
    #[arg(long)]
    branch: PathBuf,
    /// Step index of the point; the point with the largest |ε| when absent.
    #[arg(long, allow_negative_numbers = true)]
    step: Option<i64>,
    #[arg(long, default_value_t = 241)]
    radial_count: usize,
    #[arg(long, default_value_t = 96)]
    theta_count: usize,
    #[arg(long, default_value_t = 1e3)]
    r_max: f64,
    /// Write the plane samples here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
pub struct LegendreArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    /// Points in [-1, 1], comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    z: Vec<f64>,
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn io(err: anyhow::Error) -> Self {
        Self::new(5, format!("{err:#}"))
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let file = FileConfig::load(cli.config.as_deref()).map_err(Failure::io)?;
    if let Some(jobs) = cli.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(Failure::new(4, "--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::new(5, e.to_string()))?;
    }
    match cli.command {
        Command::Mu2Table(args) => {
            let spec = file.quadrature.resolve(&args.quadrature.overrides());
            commands::table(&args, &spec)
        }
        Command::Branch(args) => {
            let cfg = file.continuation.resolve(&args.overrides());
            let spec = file.quadrature.resolve(&args.quadrature.overrides());
            commands::branch(&args, &cfg, &spec)
        }
        Command::Kernel(args) => commands::kernel(&args),
        Command::ValidatePlane(args) => commands::validate_plane(&args),
        Command::Legendre(args) => commands::legendre(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
