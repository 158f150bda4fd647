use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "slitflow", version, about = "Two-slit energy-flow lines and weak-measurement reconstruction")]
pub struct Cli {
    /// Config file path, or `paper-geometry` for the bundled configuration.
    #[arg(long, global = true, default_value = crate::config::BUILTIN_NAME)]
    pub config: String,

    /// Master seed for shot noise.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, global = true, default_value = "slitflow-out")]
    pub out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Only report errors.
    #[arg(long, global = true, conflicts_with = "verbose")]
    pub quiet: bool,

    /// Report per-stage details.
    #[arg(long, global = true)]
    pub verbose: bool,

    /// Record stage wall-clock times in the manifests (makes output trees
    /// differ between runs).
    #[arg(long, global = true)]
    pub timings: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Energy density and phase of the field.
    Field(FieldOpts),
    /// Exact energy-flow lines.
    Trace(TraceOpts),
    /// Simulated weak measurements on a set of planes.
    Measure(MeasureOpts),
    /// Trajectories reconstructed from a measured dataset.
    Reconstruct(ReconstructOpts),
    /// Every stage in turn, each in its own subdirectory.
    All,
}

#[derive(Debug, Default, Args)]
pub struct FieldOpts {
    /// Plane position [m] (default: z_max_m from the config).
    #[arg(long)]
    pub z: Option<f64>,
    /// Also write (x, z) maps from z = 0 to z_max.
    #[arg(long)]
    pub sweep: bool,
    /// Planes in the sweep (default: sweep_planes from the config).
    #[arg(long)]
    pub sweep_planes: Option<usize>,
    /// Transverse samples per sweep plane.
    #[arg(long, default_value_t = 400)]
    pub sweep_points: usize,
    /// Also write the complex field with its metadata sidecar.
    #[arg(long)]
    pub with_field: bool,
}

#[derive(Debug, Default, Args)]
pub struct TraceOpts {
    /// Comma-separated initial positions [m] (default: slit seeding).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Trajectories per slit for the default seeding.
    #[arg(long)]
    pub per_slit: Option<usize>,
    /// Starting plane [m].
    #[arg(long, default_value_t = 0.0)]
    pub z0: f64,
    /// Final plane [m] (default: z_max_m).
    #[arg(long)]
    pub z1: Option<f64>,
    /// RK4 steps (default: trace_steps).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Repeat with twice the steps and report end-point differences.
    #[arg(long)]
    pub convergence: bool,
}

#[derive(Debug, Default, Args)]
pub struct MeasureOpts {
    /// Planes as `N@Z0:Z1` (default: planes from the config).
    #[arg(long)]
    pub planes: Option<String>,
    /// Calcite coupling (default: zeta from the config).
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Calcite phase offset [rad] (default: phi0_rad from the config).
    #[arg(long, allow_hyphen_values = true)]
    pub phi0: Option<f64>,
    /// `noiseless` or a photon count per plane.
    #[arg(long)]
    pub photons: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    #[default]
    Bridge,
    Strict,
}

#[derive(Debug, Args)]
pub struct ReconstructOpts {
    /// Dataset directory written by `measure`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Gap handling: bridge short runs of masked points, or stop at the first.
    #[arg(long, value_enum, default_value_t = PolicyArg::Bridge)]
    pub policy: PolicyArg,
    /// Trajectories per slit (default: trajectories_per_slit).
    #[arg(long)]
    pub per_slit: Option<usize>,
    /// RK4 steps for the exact reference lines (default: trace_steps).
    #[arg(long)]
    pub exact_steps: Option<usize>,
}
