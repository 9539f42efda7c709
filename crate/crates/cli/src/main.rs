//! `rieszwolff`: command-line front end for the rieszwolff library.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exit status for a run that finished but whose checks failed.
pub struct AssertionFailure(pub String);

impl std::fmt::Display for AssertionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::fmt::Debug for AssertionFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailure {}

#[derive(Parser, Debug)]
#[command(
    name = "rieszwolff",
    version,
    about = "Riesz transforms, Wolff potentials, scale sets, Cantor constructions and capacities of atomic measures"
)]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for every randomised step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a measure file: a Cantor measure or a lacunary fixture.
    Generate(GenerateArgs),
    /// Riesz transform at target points, as CSV.
    Riesz(RieszArgs),
    /// Superlevel scale sets, the weak-type curve and the exceptional set.
    Scales(ScalesArgs),
    /// Wolff potentials at target points, as CSV.
    Wolff(WolffArgs),
    /// Run the multi-level Cantor construction.
    Cantor(CantorArgs),
    /// Re-check a saved construction.
    Verify(VerifyArgs),
    /// Capacity lower bound from the natural measure on a set.
    Capacity(CapacityArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MeasureKind {
    Cantor,
    Lacunary,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = MeasureKind::Cantor)]
    pub kind: MeasureKind,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 1.5)]
    pub s: f64,
    /// Cantor depth (4^depth atoms in the plane); for lacunary, the depth of the leaf clusters.
    #[arg(long, default_value_t = 3)]
    pub depth: u32,
    /// Cantor contraction ratio (default 2^{-d/s}).
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Jitter atom positions using --seed.
    #[arg(long)]
    pub jitter: bool,
    /// Number of construction levels the lacunary fixture is laid out for.
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Direct,
    Fast,
}

#[derive(Args, Debug)]
pub struct RieszArgs {
    #[arg(long)]
    pub measure: PathBuf,
    /// A grid spec such as grid:16x16:margin=0.1, or a CSV file of points.
    #[arg(long)]
    pub targets: String,
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    pub mode: Mode,
    /// Error tolerance of the fast mode.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScalesArgs {
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    /// rmin,rmax (rmax may be inf).
    #[arg(long, default_value = "1e-3,1")]
    pub window: String,
    /// Comma-separated T values for the weak-type curve.
    #[arg(long = "T", default_value = "1,2,3,4,5,6")]
    pub ts: String,
    /// Depth q of the exceptional set.
    #[arg(long, default_value_t = 12)]
    pub q: u32,
    /// Include the scale intervals of sampled atoms.
    #[arg(long)]
    pub dump_intervals: bool,
    /// Number of atoms sampled for --dump-intervals.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct WolffArgs {
    #[arg(long)]
    pub measure: PathBuf,
    /// exp:beta=3, power:p=2 or V.
    #[arg(long, default_value = "exp:beta=3")]
    pub gauge: String,
    #[arg(long, default_value = "1e-3,inf")]
    pub window: String,
    /// `atoms`, a grid spec, or a CSV file of points.
    #[arg(long, default_value = "atoms")]
    pub targets: String,
    /// Also report the t^2 Wolff energy Σ μ({x}) W(x) over the atoms.
    #[arg(long)]
    pub energy: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CantorArgs {
    /// Measure file; its marked atoms form E (all atoms when none are marked).
    #[arg(long)]
    pub measure: PathBuf,
    /// JSON parameter file (N, epsilon, M, delta, Delta, q).
    #[arg(long)]
    pub params: PathBuf,
    /// Override the number of levels.
    #[arg(long = "N")]
    pub levels: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also compute energies, mean-zero residuals and Ψ diagnostics (quadratic in the atom count).
    #[arg(long)]
    pub harness: bool,
    /// Dilations A for the g-function norms of the harness report.
    #[arg(long, default_value = "2,4")]
    pub dilations: String,
}

#[derive(Args, Debug)]
pub struct CapacityArgs {
    /// Measure file whose atoms form the set E.
    #[arg(long)]
    pub set: PathBuf,
    #[arg(long, default_value = "exp:beta=3")]
    pub gauge: String,
    #[arg(long, default_value = "1e-4,inf")]
    pub window: String,
    /// Grid spec of off-support probes for the maximum-principle check.
    #[arg(long, default_value = "grid:32x32:margin=0.2")]
    pub probes: String,
    /// Add the singular-integral grid proxy and its ratio to the bound.
    #[arg(long)]
    pub compare: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// 1 for bad input, 2 for a failed construction, 3 for failed checks.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<AssertionFailure>().is_some() {
        return 3;
    }
    match err.downcast_ref::<rieszwolff::Error>() {
        Some(e) if e.is_construction_failure() => 2,
        Some(rieszwolff::Error::PropertyViolation { .. }) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RW_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
