use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

/// Type B free convolution predictions checked against random matrix simulations.
#[derive(Parser, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(name = "typeb", version)]
pub struct RunConfig {
    /// Directory for output files.
    #[arg(long, global = true, env = "TYPEB_OUT_DIR", default_value = "typeb-out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Predict the bulk law, its 1/N correction and the outliers.
    Predict(PredictArgs),
    /// Average eigenvalue histograms over seeded trials.
    Simulate(SimulateArgs),
    /// Compare a prediction against a simulated histogram.
    Compare(CompareArgs),
    /// Check a mixed moment (1/N) E Tr p(A, B, E) against its prediction.
    Moments(MomentsArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Base {
    Semicircle,
    GoeSemicircle,
    Atomic,
    Mp,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    Gue,
    Goe,
    Haar,
    Wishart,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictArgs {
    #[arg(long, value_enum)]
    pub base: Base,

    /// Atom locations of the atomic base law, equally weighted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub atoms: Vec<f64>,

    /// MP ratio for `--base mp`.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Spike eigenvalues; Σ-spikes for `--base mp`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub spikes: Vec<f64>,

    /// Matrix size the prediction is meant for.
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long, allow_hyphen_values = true)]
    pub grid_lo: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub grid_hi: Option<f64>,

    #[arg(long, default_value_t = 801)]
    pub grid_points: usize,
}

/// Ensemble flags shared by `simulate` and `moments`.
#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleArgs {
    #[arg(long, value_enum, default_value = "gue")]
    pub ensemble: Ensemble,

    #[arg(long, default_value_t = 100)]
    pub n: usize,

    #[arg(long, default_value_t = 40)]
    pub trials: usize,

    /// Drawn at random and echoed when absent.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Base eigenvalues of the Haar ensemble, repeated cyclically.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub pattern: Vec<f64>,

    #[arg(long)]
    pub lambda: Option<f64>,

    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub sigma_spikes: Vec<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub ensemble: EnsembleArgs,

    /// Additive spikes Σ θ_j E_jj.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub spikes: Vec<f64>,

    #[arg(long, default_value_t = 60)]
    pub bins: usize,

    #[arg(long, allow_hyphen_values = true)]
    pub range_lo: Option<f64>,

    #[arg(long, allow_hyphen_values = true)]
    pub range_hi: Option<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareArgs {
    /// Output directory of `predict`, or its law JSON.
    #[arg(long)]
    pub prediction: PathBuf,

    /// Output directory of `simulate`, or its histogram CSV.
    #[arg(long)]
    pub simulation: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsArgs {
    /// Polynomial in `a`, `b` and matrix units, e.g. `(a + 4 e11)^2`.
    #[arg(long)]
    pub word: String,

    #[command(flatten)]
    #[serde(flatten)]
    pub ensemble: EnsembleArgs,

    /// Diagonal of `b`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(default)]
    pub spikes: Vec<f64>,
}
