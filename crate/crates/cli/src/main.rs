//! `gwil`: build environments, solve GW problems, train imitators and export their logs.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gwil_core::GwilError;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "gwil", version, about = "Gromov-Wasserstein imitation learning on tabular metric MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a GW problem between two spaces or trajectories (JSON).
    Gw(GwArgs),
    /// Train an imitator in the agent MDP from an expert trajectory.
    Imitate(ImitateArgs),
    /// Write a maze or chain MDP (and optionally its mirror image) as JSON.
    MakeEnv(MakeEnvArgs),
    /// Solve an MDP exactly and roll out an expert demonstration.
    Oracle(OracleArgs),
    /// Merge per-seed training logs of an `imitate` run into one CSV.
    Export(ExportArgs),
}

#[derive(Args, Serialize)]
pub struct GwArgs {
    /// First space: a metric measure space {"dist","mass"} or a trajectory {"steps"}.
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Entropic regularization; omit for the exact conditional-gradient solver.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Start from every permutation coupling (uniform spaces with at most 7 atoms).
    #[arg(long)]
    pub exhaustive: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Gw,
    Wasserstein,
}

#[derive(Args, Serialize)]
pub struct ImitateArgs {
    #[arg(long)]
    pub agent: PathBuf,
    #[arg(long)]
    pub expert: PathBuf,
    #[arg(long, value_enum, default_value_t = Baseline::Gw)]
    pub baseline: Baseline,
    /// Add `beta` times the environment reward to the pseudo-rewards.
    #[arg(long)]
    pub sparse: bool,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
    #[arg(long, default_value_t = 500)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seeds `seed, seed+1, …` are trained concurrently, capped by GWIL_THREADS.
    #[arg(long, default_value_t = 1)]
    pub num_seeds: u64,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temp: f64,
    #[arg(long, default_value_t = 0.05)]
    pub temp_final: f64,
    /// Keep the episode-length factor on the pseudo-rewards.
    #[arg(long)]
    pub include_t_a: bool,
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct MakeEnvArgs {
    /// ASCII maze: `#` wall, `S` start, `G` goal, `.` free.
    #[arg(long, conflicts_with = "chain")]
    pub maze: Option<PathBuf>,
    /// Push chain with this many states.
    #[arg(long, required_unless_present = "maze")]
    pub chain: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub pushes: usize,
    /// Reward only at the goal.
    #[arg(long)]
    pub sparse: bool,
    #[arg(long, default_value_t = 0.0)]
    pub slip: f64,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Also write the left-right mirror image and the isometry mapping onto it.
    #[arg(long)]
    pub reflect: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct OracleArgs {
    #[arg(long)]
    pub mdp: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize)]
pub struct ExportArgs {
    /// Output directory of an `imitate` run.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// 2 for bad input, 3 for infeasible problems, 4 for aborted training.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<GwilError>() {
            return match e {
                GwilError::Disconnected | GwilError::Marginals(_) | GwilError::Singular => 3,
                GwilError::Aborted(_) => 4,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gw(args) => commands::gw(&args),
        Command::Imitate(args) => commands::imitate(&args),
        Command::MakeEnv(args) => commands::make_env(&args),
        Command::Oracle(args) => commands::oracle(&args),
        Command::Export(args) => commands::export(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
