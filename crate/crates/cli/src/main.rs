//! `weyl`: forward solves, inversion steps, round trips and the flat-tori lab.
//!
//! Exit codes: 0 on success, 2 for invalid input, 3 for numerical or stage
//! failures.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Output encoding for commands that have a tabular form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "weyl", version, about = "Local Weyl law forward and inverse solvers")]
pub struct Cli {
    /// Seed for every randomised option.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving output files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Writes a chart file (mesh and metric) from a round-trip config.
    Chart {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solves the forward problem and writes the eigensystem and local Weyl table.
    Forward(ForwardArgs),
    /// One step of the inverse procedure.
    Invert {
        #[command(subcommand)]
        step: InvertStep,
    },
    /// Forward solve, every inverse step and the consistency re-solve.
    Roundtrip {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exact spectra and isometries of flat tori.
    Tori {
        #[command(subcommand)]
        action: ToriAction,
    },
    /// Converts a sampled or event Weyl table into the event format.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = weyl_core::io::DEFAULT_JUMP_TOL)]
        jump_tol: f64,
    },
    /// Writes plot data as CSV.
    Plot {
        /// staircase, mu, metric-error-vs-k or tori.
        #[arg(long)]
        kind: String,
        /// Table (staircase), report (mu), array of reports (metric-error-vs-k)
        /// or comparison (tori).
        #[arg(long)]
        input: PathBuf,
        /// Vertex for the staircase.
        #[arg(long, default_value_t = 0)]
        vertex: usize,
    },
}

#[derive(Args, Debug)]
pub struct ForwardArgs {
    /// Chart file with a metric section.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub chart: Option<PathBuf>,
    /// Round-trip config; its mesh, metric, boundary condition and K are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of modes (required with --chart).
    #[arg(long)]
    pub k: Option<usize>,
    /// none, dirichlet or neumann; defaults to the natural condition of the chart.
    #[arg(long)]
    pub bc: Option<String>,
    /// Multiplies each eigenfunction by a seeded random sign.
    #[arg(long)]
    pub resign: bool,
    /// Vertex whose `(λ_j, E_j(x))` pairs are written with `--format csv`.
    #[arg(long, default_value_t = 0)]
    pub vertex: usize,
}

#[derive(Subcommand, Debug)]
pub enum InvertStep {
    /// Signed eigenfunctions from the table.
    Step1 {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        chart: PathBuf,
        #[arg(long, default_value_t = weyl_core::inversion::DEFAULT_ZERO_TOL)]
        zero_tol: f64,
        #[arg(long)]
        min_links: Option<usize>,
        #[arg(long, default_value_t = weyl_core::inversion::DEFAULT_GAP_TOL)]
        gap_tol: f64,
    },
    /// Volume density from signed eigenfunctions.
    Step2 {
        /// Output of step1, or an eigensystem file.
        #[arg(long)]
        step1: PathBuf,
        #[arg(long)]
        chart: PathBuf,
        /// Truncation; defaults to every mode in the input.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Metric at probe points.
    Step3 {
        #[arg(long)]
        step1: PathBuf,
        #[arg(long)]
        density: PathBuf,
        #[arg(long)]
        chart: PathBuf,
        /// Comma-separated chart coordinates; repeat for several probes.
        #[arg(long = "probe", required = true)]
        probes: Vec<String>,
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        fit_tol: f64,
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ToriAction {
    /// Distinct squared frequencies `4π²|ξ|²` of the torus, as dual norms up to B.
    Spectrum {
        #[arg(long)]
        gram: PathBuf,
        #[arg(long)]
        bound: String,
    },
    /// Compares two torus spectra up to B.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        bound: String,
    },
    /// Searches for `U` with `UᵀB U = A`.
    Isometry {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

/// Variable that selects a working OpenBLAS kernel; see the README.
const CORETYPE: &str = "OPENBLAS_CORETYPE";

#[cfg(unix)]
fn reexec_with_coretype() {
    use std::os::unix::process::CommandExt;
    if std::env::var_os(CORETYPE).is_some() {
        return;
    }
    let Ok(exe) = std::env::current_exe() else { return };
    let err = std::process::Command::new(exe).args(std::env::args_os().skip(1)).env(CORETYPE, "Haswell").exec();
    eprintln!("warning: could not re-execute with {CORETYPE} set: {err}");
}

#[cfg(not(unix))]
fn reexec_with_coretype() {}

fn main() -> ExitCode {
    reexec_with_coretype();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(summary) => {
            if !summary.is_empty() {
                println!("{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
