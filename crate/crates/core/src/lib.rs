//! Gromov-Wasserstein imitation learning on tabular metric MDPs.
//!
//! The crate compares empirical occupancy measures of agents that live in
//! different state-action spaces with the Gromov-Wasserstein (GW) distance,
//! turns the optimal coupling into per-step pseudo-rewards, and trains a
//! tabular soft-Q learner on them.

pub mod env;
pub mod error;
pub mod gw;
pub mod isometry;
pub mod mdp;
pub mod mmspace;
pub mod reward;
mod serde_nd;
pub mod trainer;
pub mod transport;

pub use env::{build_chain_env, build_maze, reflect_maze, MazeSpec};
pub use error::{GwilError, Result};
pub use gw::{gw_gradient, gw_objective, solve_gw, solve_gw_entropic, wasserstein_sq, GwSolveResult, SolveOptions};
pub use isometry::{is_isometric, IsometryCheck};
pub use mdp::{
    apply_isometry, gw_between_policies, occupancy, policy_space, rollout, value_iteration, OccupancyMeasure, Policy,
    TabularMetricMdp,
};
pub use mmspace::{product_metric, Dedup, Metric, MetricMeasureSpace, Step, Trajectory};
pub use reward::{combine_rewards, occupancy_rewards, trajectory_rewards, PseudoRewardAssignment};
pub use trainer::{evaluate, train_gwil, train_soft_q, train_wasserstein_baseline, EvalSummary, TrainConfig, TrainLog};
pub use transport::Coupling;
