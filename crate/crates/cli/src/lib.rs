//! The `tetreg` command line.
//!
//! Every flag also reads an environment variable named `TETREG_` plus the
//! flag name in upper snake case, e.g. `TETREG_SEED` or `TETREG_LOG_LEVEL`.
//! Flags win over the environment, which wins over `--config`.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tetreg::pbm::RegistrationMode;

pub use commands::{run, RegisterReport, REPORT_SCHEMA_VERSION};
pub use config::CliConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "tetreg", version, about = "Biomechanically regularized non-rigid registration")]
pub struct Cli {
    /// Base seed (synthesis seeds are seed, seed+1, ...; also seeds network initialization).
    #[arg(long, global = true, env = "TETREG_SEED")]
    pub seed: Option<u64>,
    /// Worker threads for `serve`; the numerical engine itself is single-threaded.
    #[arg(long, global = true, env = "TETREG_THREADS")]
    pub threads: Option<usize>,
    /// error, warn, info, debug, trace or off.
    #[arg(long, global = true, env = "TETREG_LOG_LEVEL")]
    pub log_level: Option<String>,
    /// TOML file overriding built-in defaults (see `tetreg config`).
    #[arg(long, global = true, env = "TETREG_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic case bundles.
    Synth(SynthArgs),
    /// Register a case and write the field, deformed surface and report.
    Register(RegisterArgs),
    /// Recompute metrics for a stored field against a case bundle.
    Eval(EvalArgs),
    /// Run the HTTP/WebSocket session service.
    Serve(ServeArgs),
    /// Print the fully resolved configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// liver-beam, kidney-beam or prostate-beam.
    #[arg(long, env = "TETREG_PRESET", default_value = "liver-beam")]
    pub preset: String,
    #[arg(long, env = "TETREG_COUNT", default_value_t = 1)]
    pub count: usize,
    #[arg(long, env = "TETREG_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    /// Case bundle directory; alternative to the explicit inputs.
    #[arg(long, env = "TETREG_CASE", conflicts_with_all = ["mesh_node", "mesh_ele", "cloud"])]
    pub case: Option<PathBuf>,
    /// TetGen `.node` file.
    #[arg(long, env = "TETREG_MESH_NODE")]
    pub mesh_node: Option<PathBuf>,
    /// TetGen `.ele` file.
    #[arg(long, env = "TETREG_MESH_ELE")]
    pub mesh_ele: Option<PathBuf>,
    /// XYZ point cloud.
    #[arg(long, env = "TETREG_CLOUD")]
    pub cloud: Option<PathBuf>,
    /// `i j` pairs (boundary vertex, cloud point). Defaults to the bundle's
    /// pairs, or mutual nearest neighbours for explicit inputs.
    #[arg(long, env = "TETREG_CORRESPONDENCES")]
    pub correspondences: Option<PathBuf>,
    /// rigid, nofem, biompinn or biompinn-pbm.
    #[arg(long, env = "TETREG_MODE", default_value = "biompinn-pbm")]
    pub mode: RegistrationMode,
    #[arg(long, env = "TETREG_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

/// Per-run overrides of the pipeline settings.
#[derive(Debug, Default, Args)]
pub struct TuningArgs {
    #[arg(long, env = "TETREG_LEVELS")]
    pub levels: Option<usize>,
    #[arg(long, env = "TETREG_STEPS")]
    pub steps: Option<usize>,
    #[arg(long, env = "TETREG_WIDTH")]
    pub width: Option<usize>,
    #[arg(long, env = "TETREG_LR")]
    pub lr: Option<f64>,
    #[arg(long, env = "TETREG_LAMBDA1")]
    pub lambda1: Option<f64>,
    #[arg(long, env = "TETREG_LAMBDA2")]
    pub lambda2: Option<f64>,
    #[arg(long, env = "TETREG_BETA")]
    pub beta: Option<f64>,
    /// Skip the rigid pre-alignment.
    #[arg(long, env = "TETREG_NO_PREALIGN")]
    pub no_prealign: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Volumetric displacement field, one `ux uy uz` row per node.
    #[arg(long, env = "TETREG_FIELD")]
    pub field: PathBuf,
    #[arg(long, env = "TETREG_CASE")]
    pub case: PathBuf,
    /// Directory for report.json, errors.csv and jacobian_histogram.csv.
    #[arg(long, env = "TETREG_OUT")]
    pub out: Option<PathBuf>,
    /// Label stored in the report.
    #[arg(long, env = "TETREG_LABEL", default_value = "field")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TETREG_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "TETREG_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Directory of case bundles, plus an optional `ui/` static bundle.
    #[arg(long, env = "TETREG_ASSETS")]
    pub assets: PathBuf,
}
