//! The `fewstep` experiment harness.
//!
//! Five subcommands cover the reproducible surface: `schedule` (discretization
//! tables), `sample` (solver runs), `truncation` (per-interval one-step RMSE),
//! `convergence` (empirical order fits), and `metrics` (Fréchet distance,
//! sliced W2, PRD between two sample files). Every output embeds its effective
//! configuration; every run is deterministic for a fixed (config, seed),
//! including with `--threads > 1`.

mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use config::ProcessSpec;

#[derive(Debug, Parser)]
#[command(
    name = "fewstep",
    version,
    about = "Few-step diffusion ODE sampling experiments on analytic oracle models"
)]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores). Results do
    /// not depend on this value.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a time discretization and write it as CSV.
    Schedule(ScheduleArgs),
    /// Draw samples by solving the probability-flow ODE over a schedule.
    Sample(SampleArgs),
    /// Per-interval one-step truncation RMSE on a uniform-sigma grid.
    Truncation(TruncationArgs),
    /// Empirical convergence order of solvers against the RK4 reference.
    Convergence(ConvergenceArgs),
    /// Compare two sample files: Frechet distance, sliced W2, PRD curve.
    Metrics(MetricsArgs),
}

/// VP process overrides shared by schedule-building subcommands.
#[derive(Debug, Args)]
pub struct ProcessArgs {
    #[arg(long, default_value_t = 0.1)]
    pub beta_min: f64,
    #[arg(long, default_value_t = 20.0)]
    pub beta_max: f64,
    /// Time range start (mutually exclusive with the sigma range).
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Sigma range start (mutually exclusive with the time range).
    #[arg(long)]
    pub sigma_min: Option<f64>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
}

impl ProcessArgs {
    fn to_spec(&self) -> ProcessSpec {
        ProcessSpec {
            beta_min: self.beta_min,
            beta_max: self.beta_max,
            t_min: self.t_min,
            t_max: self.t_max,
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// uniform | karras | improved | custom
    #[arg(long)]
    pub kind: String,
    /// Number of nodes.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Exponent for karras/improved kinds.
    #[arg(long)]
    pub p: Option<f64>,
    /// Custom-stop exponents and stop count.
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long)]
    pub stop: Option<u64>,
    /// Second schedule kind laid out side by side (built with its defaults).
    #[arg(long)]
    pub compare: Option<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub process: ProcessArgs,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config file's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output sample-set JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also dump per-node trajectories as CSV.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TruncationArgs {
    /// Model spec JSON path.
    #[arg(long)]
    pub model: PathBuf,
    /// Uniform-sigma grid size.
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// States per interval.
    #[arg(long, default_value_t = 256)]
    pub m_states: usize,
    /// RK4 sub-steps of the per-interval reference.
    #[arg(long, default_value_t = 200)]
    pub ref_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub process: ProcessArgs,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    /// Model spec JSON path.
    #[arg(long)]
    pub model: PathBuf,
    /// Solvers to measure (repeatable).
    #[arg(long, default_values_t = vec!["euler".to_string(), "dpmpp_2m".to_string()])]
    pub solver: Vec<String>,
    /// Increasing step counts, e.g. 8,16,32,64.
    #[arg(long, value_delimiter = ',', default_values_t = vec![8, 16, 32, 64])]
    pub steps: Vec<usize>,
    /// Exponent of the sigma-interpolated sweep grid.
    #[arg(long, default_value_t = 7.0)]
    pub grid_p: f64,
    /// Terminal draws averaged per resolution.
    #[arg(long, default_value_t = 16)]
    pub n_starts: usize,
    /// RK4 sub-steps of the reference transport.
    #[arg(long, default_value_t = 2048)]
    pub ref_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub process: ProcessArgs,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Reference sample set (P).
    #[arg(long)]
    pub a: PathBuf,
    /// Generated sample set (Q).
    #[arg(long)]
    pub b: PathBuf,
    /// Cluster count for PRD.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Angular resolution of the PRD sweep.
    #[arg(long, default_value_t = 1001)]
    pub num_angles: usize,
    /// Random projections for sliced W2.
    #[arg(long, default_value_t = 64)]
    pub n_proj: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Schedule(args) => commands::cmd_schedule(args),
        Command::Sample(args) => commands::cmd_sample(args),
        Command::Truncation(args) => commands::cmd_truncation(args),
        Command::Convergence(args) => commands::cmd_convergence(args),
        Command::Metrics(args) => commands::cmd_metrics(args),
    }
}

/// Parses argv, runs the selected command, and maps errors to exit codes:
/// 2 for configuration/domain problems, 1 for runtime failures.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(threads) if threads > 0 => {
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => pool.install(|| execute(&cli)),
                Err(e) => Err(Error::Config(format!("could not build thread pool: {e}"))),
            }
        }
        Some(_) => Err(Error::Config("--threads must be positive".to_string())),
        None => execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::Domain(_)
                | Error::Schedule(_)
                | Error::DegenerateStop(_) => 2,
                _ => 1,
            }
        }
    }
}
