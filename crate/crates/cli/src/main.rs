//! `wafer-spr`: generate, filter, cluster, evaluate, render and compare wafer
//! bin maps.

mod commands;
mod error;
mod output;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wafer-spr", version, about = "Spatial pattern recognition for wafer bin maps")]
pub struct Cli {
    /// RNG seed for generation and clustering.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory. Without it the primary result goes to stdout and no
    /// manifest is written.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Wafer file format for reading and writing: ascii or csv.
    #[arg(long, global = true, default_value = "ascii")]
    pub format: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic wafer with known pattern labels.
    Generate(GenerateArgs),
    /// Separate systematic defects from noise.
    Filter(FilterArgs),
    /// Group the defective chips of a (filtered) wafer into sub-clusters.
    Cluster(ClusterArgs),
    /// Score an assignment file against reference labels.
    Evaluate(EvaluateArgs),
    /// Draw a wafer, optionally colored by cluster, as SVG.
    Render(RenderArgs),
    /// Compare AC-iWMM against CPF-iWMM over several wafers.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 38)]
    pub rows: usize,
    #[arg(long, default_value_t = 38)]
    pub cols: usize,
    /// Pattern as JSON, e.g. '{"kind":"donut","inner":0.2,"outer":0.45,"fill_rate":0.9}'.
    /// Repeatable; later patterns win overlapping truth labels.
    #[arg(long = "pattern")]
    pub patterns: Vec<String>,
    #[arg(long, default_value = "0.05", allow_hyphen_values = true)]
    pub noise: String,
    /// Write the twelve-wafer mixed-type suite instead (requires --out).
    #[arg(long)]
    pub suite: bool,
    /// Base name of the written files.
    #[arg(long, default_value = "wafer")]
    pub name: String,
}

#[derive(Debug, Args, Clone)]
pub struct FilterOpts {
    /// Separation cost u (decimal or p/q).
    #[arg(long, default_value = "1/2", allow_hyphen_values = true)]
    pub u: String,
    /// Deviation weight magnitude (decimal or p/q).
    #[arg(long = "w-mag", default_value = "1", allow_hyphen_values = true)]
    pub w_mag: String,
    /// CPF path-length threshold M.
    #[arg(long = "m", default_value = "5", allow_hyphen_values = true)]
    pub m: String,
    #[arg(long, default_value = "king")]
    pub neighborhood: String,
    /// CPF rule: path or component-size.
    #[arg(long = "cpf-mode", default_value = "path")]
    pub cpf_mode: String,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    pub input: PathBuf,
    #[arg(long, default_value = "ac")]
    pub method: String,
    #[command(flatten)]
    pub opts: FilterOpts,
}

#[derive(Debug, Args, Clone)]
pub struct IwmmOpts {
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long = "burn-in", default_value_t = 500)]
    pub burn_in: usize,
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub alpha: String,
    #[arg(long = "step-size", default_value = "0.01", allow_hyphen_values = true)]
    pub step_size: String,
    #[arg(long = "leapfrog-steps", default_value_t = 10)]
    pub leapfrog_steps: usize,
    /// Keep the HMC step size fixed during burn-in.
    #[arg(long = "no-adapt")]
    pub no_adapt: bool,
    #[arg(long = "signal-variance", default_value = "1", allow_hyphen_values = true)]
    pub signal_variance: String,
    #[arg(long = "length-scale", default_value = "1", allow_hyphen_values = true)]
    pub length_scale: String,
    #[arg(long, default_value = "1e-6", allow_hyphen_values = true)]
    pub jitter: String,
    /// Diagonal of the Gaussian-Wishart scale matrix R.
    #[arg(long = "prior-scale", default_value = "1", allow_hyphen_values = true)]
    pub prior_scale: String,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub iwmm: IwmmOpts,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Assignments JSON written by `cluster`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference: a truth sidecar from `generate` or another assignments file.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Wafer whose reconstructed ground truth is the reference.
    #[arg(long)]
    pub wafer: Option<PathBuf>,
    /// Use the reconstructed ground truth of --wafer.
    #[arg(long)]
    pub reconstruct: bool,
    /// Raw wafer: score external indices over all of its defective chips,
    /// with chips missing from --pred counted as label 0.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// NMI normalizer: sqrt, max, arithmetic or conditional.
    #[arg(long, default_value = "sqrt")]
    pub nmi: String,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub assignments: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Wafer files; a `<stem>.truth.json` next to a wafer supplies its labels.
    #[arg(required = true)]
    pub wafers: Vec<PathBuf>,
    #[arg(long, default_value = "1/2", allow_hyphen_values = true)]
    pub u: String,
    #[arg(long = "w-mag", default_value = "1", allow_hyphen_values = true)]
    pub w_mag: String,
    #[arg(long = "m-list", default_value = "5,10")]
    pub m_list: String,
    #[arg(long, default_value = "king")]
    pub neighborhood: String,
    #[arg(long = "cpf-mode", default_value = "path")]
    pub cpf_mode: String,
    /// iWMM runs per wafer and method; metrics are medians over seeds.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    #[arg(long, default_value = "sqrt")]
    pub nmi: String,
    #[command(flatten)]
    pub iwmm: IwmmOpts,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wafer-spr: {e}");
            e.exit_code()
        }
    }
}
