//! Episodic imitation: collect an episode, couple it with the expert, turn the
//! coupling into per-step rewards, and take soft Q-learning steps on them.
//!
//! Rewards only exist for the episode whose coupling produced them, so every
//! update is on-policy and nothing is replayed across episodes.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GwilError, Result};
use crate::gw::{solve_gw, sq_euclidean_cost, SolveOptions};
use crate::mdp::{occupancy, rollout_episode, Episode, Policy, TabularMetricMdp};
use crate::mmspace::{Dedup, Metric, MetricMeasureSpace, Trajectory};
use crate::reward::{combine_rewards, trajectory_rewards, wasserstein_rewards};
use crate::transport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub learning_rate: f64,
    /// Boltzmann temperature at the first episode, decayed linearly to `entropy_temp_final`.
    pub entropy_temp: f64,
    pub entropy_temp_final: f64,
    /// Backward TD passes over each collected episode.
    pub td_sweeps: usize,
    pub gw_opts: SolveOptions,
    pub seed: u64,
    pub include_env_reward: bool,
    pub beta: f64,
    /// Evaluate the greedy policy every this many episodes (and after the last); 0 disables.
    pub eval_every: usize,
    /// Scale pseudo-rewards by the agent episode length.
    pub include_t_a: bool,
    pub dedup: Dedup,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            horizon: 200,
            learning_rate: 0.5,
            entropy_temp: 1.0,
            entropy_temp_final: 0.05,
            td_sweeps: 1,
            gw_opts: SolveOptions { restarts: 3, ..SolveOptions::default() },
            seed: 0,
            include_env_reward: false,
            beta: 1.0,
            eval_every: 10,
            include_t_a: false,
            dedup: Dedup::None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.horizon == 0 || self.td_sweeps == 0 {
            return Err(GwilError::Config("episodes, horizon and td_sweeps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(GwilError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.entropy_temp >= 0.0 && self.entropy_temp_final >= 0.0) {
            return Err(GwilError::Config("temperatures must be non-negative".into()));
        }
        if !self.beta.is_finite() {
            return Err(GwilError::Config("beta must be finite".into()));
        }
        Ok(())
    }

    /// Temperature used during episode `k`.
    pub fn temperature(&self, k: usize) -> f64 {
        if self.episodes <= 1 {
            return self.entropy_temp;
        }
        let frac = k as f64 / (self.episodes - 1) as f64;
        self.entropy_temp + (self.entropy_temp_final - self.entropy_temp) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub episode: usize,
    /// Sum of the imitation rewards, before any environment reward is mixed in.
    pub proxy_return: f64,
    /// Undiscounted environment reward collected in the episode.
    pub env_return: f64,
    /// Discrepancy to the expert (GW², or the Wasserstein value for the baseline).
    pub gw_sq: f64,
    /// Exact discounted return of the greedy policy, on evaluation episodes.
    pub eval_return: Option<f64>,
    /// Probability that the greedy policy is absorbed within the horizon, on evaluation episodes.
    pub eval_success: Option<f64>,
    pub episode_len: usize,
    pub reached_goal: bool,
    pub skipped: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

const CSV_HEADER: &str = "episode,proxy_return,env_return,gw_sq,eval_return,eval_success,episode_len,reached_goal,skipped";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainLog {
    /// CSV with one row per episode; timing is the optional last column.
    pub fn to_csv(&self, with_timing: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push_str(if with_timing { ",wall_ms\n" } else { "\n" });
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}",
                r.episode,
                r.proxy_return,
                r.env_return,
                r.gw_sq,
                opt(r.eval_return),
                opt(r.eval_success),
                r.episode_len,
                r.reached_goal,
                r.skipped
            ));
            if with_timing {
                out.push_str(&format!(",{:.3}", r.wall_ms));
            }
            out.push('\n');
        }
        out
    }

    pub fn best_proxy_return(&self) -> Option<f64> {
        self.records.iter().filter(|r| !r.skipped).map(|r| r.proxy_return).reduce(f64::max)
    }

    /// Mean proxy return over the last `k` episodes that were not skipped.
    pub fn final_mean_proxy_return(&self, k: usize) -> Option<f64> {
        let tail: Vec<f64> = self.records.iter().rev().filter(|r| !r.skipped).take(k).map(|r| r.proxy_return).collect();
        (!tail.is_empty()).then(|| tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// First evaluated episode whose greedy policy reaches the goal with probability one.
    pub fn first_greedy_success(&self) -> Option<usize> {
        self.records.iter().find(|r| r.eval_success.is_some_and(|p| p >= 1.0 - 1e-9)).map(|r| r.episode)
    }

    pub fn first_reached_goal(&self) -> Option<usize> {
        self.records.iter().find(|r| r.reached_goal).map(|r| r.episode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean_return: f64,
    pub std: f64,
    pub std_err: f64,
    pub success_rate: f64,
}

/// Monte-Carlo discounted return of `policy`; success means entering an absorbing state within `horizon`.
pub fn evaluate(mdp: &TabularMetricMdp, policy: &Policy, n_rollouts: usize, horizon: usize, seed: u64) -> Result<EvalSummary> {
    if n_rollouts == 0 || horizon == 0 {
        return Err(GwilError::Config("need at least one rollout of at least one step".into()));
    }
    mdp.check_policy(policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut returns = Vec::with_capacity(n_rollouts);
    let mut successes = 0usize;
    for _ in 0..n_rollouts {
        let ep = rollout_episode(mdp, policy, horizon, &mut rng);
        successes += usize::from(ep.terminated);
        returns.push(ep.discounted_return(mdp.gamma));
    }
    let n = n_rollouts as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if n_rollouts > 1 { returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(EvalSummary { mean_return: mean, std: var.sqrt(), std_err: (var / n).sqrt(), success_rate: successes as f64 / n })
}

/// Exact probability that `policy` enters an absorbing state within `horizon` steps.
pub fn success_probability(mdp: &TabularMetricMdp, policy: &Policy, horizon: usize) -> Result<f64> {
    mdp.check_policy(policy)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut mass = mdp.initial.clone();
    let mut absorbed = 0.0;
    let mut collect = |mass: &mut Array1<f64>| {
        for &g in &mdp.absorbing {
            absorbed += mass[g];
            mass[g] = 0.0;
        }
    };
    collect(&mut mass);
    for _ in 0..horizon {
        let mut next = Array1::zeros(ns);
        for s in 0..ns {
            if mass[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = mass[s] * policy.probs()[[s, a]];
                if w > 0.0 {
                    next.scaled_add(w, &mdp.transitions.slice(ndarray::s![s, a, ..]));
                }
            }
        }
        mass = next;
        collect(&mut mass);
    }
    Ok(absorbed.min(1.0))
}

/// `τ·log mean_a exp(q_a/τ)`, which is `max q` at `τ = 0`.
///
/// The mean (rather than the sum) keeps the value below the best action, so
/// no entropy bonus accrues for simply staying in the episode.
pub fn soft_value(q: ArrayView1<'_, f64>, temperature: f64) -> f64 {
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if temperature <= 0.0 {
        return max;
    }
    let mean = q.iter().map(|&x| ((x - max) / temperature).exp()).sum::<f64>() / q.len() as f64;
    max + temperature * mean.ln()
}

enum Imitation {
    Gw(MetricMeasureSpace),
    Wasserstein(Vec<Vec<f64>>),
    EnvOnly,
}

struct Proxy {
    rewards: Vec<f64>,
    discrepancy: f64,
}

impl Imitation {
    fn rewards(&self, traj: &Trajectory, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Proxy> {
        match self {
            Imitation::Gw(expert) => {
                let agent = MetricMeasureSpace::from_trajectory(traj, Metric::Euclidean, cfg.dedup)?;
                let opts = cfg.gw_opts.clone().with_seed(rng.gen());
                let solved = solve_gw(expert, &agent, &opts)?;
                let assignment = trajectory_rewards(expert, &agent, &solved.coupling, cfg.include_t_a)?;
                Ok(Proxy { rewards: assignment.rewards, discrepancy: assignment.gw_sq })
            }
            Imitation::Wasserstein(expert_rows) => {
                let rows = traj.feature_rows(cfg.dedup);
                let cost = sq_euclidean_cost(expert_rows, &rows)?;
                let a = Array1::from_elem(expert_rows.len(), 1.0 / expert_rows.len() as f64);
                let b = Array1::from_elem(rows.len(), 1.0 / rows.len() as f64);
                let sol = transport::solve_exact(&a, &b, &cost)?;
                let assignment = wasserstein_rewards(&cost, &sol.coupling, cfg.include_t_a)?;
                Ok(Proxy { rewards: assignment.rewards, discrepancy: sol.cost.max(0.0) })
            }
            Imitation::EnvOnly => Ok(Proxy { rewards: vec![0.0; traj.len()], discrepancy: 0.0 }),
        }
    }
}

fn td_update(q: &mut Array2<f64>, mdp: &TabularMetricMdp, ep: &Episode, rewards: &[f64], cfg: &TrainConfig, temp: f64) {
    for _ in 0..cfg.td_sweeps {
        for t in (0..ep.len()).rev() {
            let (s, a) = (ep.states[t], ep.actions[t]);
            let next = if t + 1 < ep.len() { ep.states[t + 1] } else { ep.final_state };
            let bootstrap = if mdp.is_absorbing(next) { 0.0 } else { mdp.gamma * soft_value(q.row(next), temp) };
            let target = rewards[t] + bootstrap;
            q[[s, a]] += cfg.learning_rate * (target - q[[s, a]]);
        }
    }
}

fn train(mdp: &TabularMetricMdp, imitation: Imitation, cfg: &TrainConfig) -> Result<(Policy, TrainLog)> {
    cfg.validate()?;
    mdp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = Array2::<f64>::zeros((mdp.n_states(), mdp.n_actions()));
    let mut log = TrainLog::default();

    for k in 0..cfg.episodes {
        let started = Instant::now();
        let temp = cfg.temperature(k);
        let behaviour = Policy::boltzmann(&q, temp);
        let ep = rollout_episode(mdp, &behaviour, cfg.horizon, &mut rng);
        let env_return: f64 = ep.rewards.iter().sum();
        let mut record = TrainRecord {
            episode: k,
            proxy_return: 0.0,
            env_return,
            gw_sq: 0.0,
            eval_return: None,
            eval_success: None,
            episode_len: ep.len(),
            reached_goal: ep.terminated,
            skipped: false,
            wall_ms: 0.0,
        };

        let proxy = if ep.is_empty() {
            Err(GwilError::InvalidTrajectory("episode started in an absorbing state".into()))
        } else {
            ep.to_trajectory(mdp).and_then(|traj| imitation.rewards(&traj, cfg, &mut rng))
        };
        match proxy {
            Ok(proxy) => {
                record.proxy_return = proxy.rewards.iter().sum();
                record.gw_sq = proxy.discrepancy;
                let rewards =
                    if cfg.include_env_reward { combine_rewards(&proxy.rewards, &ep.rewards, cfg.beta)? } else { proxy.rewards };
                td_update(&mut q, mdp, &ep, &rewards, cfg, temp);
            }
            Err(_) => record.skipped = true,
        }

        let last = k + 1 == cfg.episodes;
        if cfg.eval_every > 0 && ((k + 1) % cfg.eval_every == 0 || last) {
            let greedy = Policy::greedy(&q);
            record.eval_return = Some(occupancy(mdp, &greedy)?.expected_return(mdp));
            record.eval_success = Some(success_probability(mdp, &greedy, cfg.horizon)?);
        }
        record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        log.records.push(record);
    }

    if log.records.iter().all(|r| r.skipped) {
        return Err(GwilError::Aborted(format!("all {} episodes were skipped", cfg.episodes)));
    }
    Ok((Policy::greedy(&q), log))
}

/// Cross-domain imitation from a single expert trajectory; the expert space is built once.
pub fn train_gwil(agent_mdp: &TabularMetricMdp, expert: &Trajectory, cfg: &TrainConfig) -> Result<(Policy, TrainLog)> {
    expert.validate()?;
    if expert.is_empty() {
        return Err(GwilError::InvalidTrajectory("expert trajectory is empty".into()));
    }
    let space = MetricMeasureSpace::from_trajectory(expert, Metric::Euclidean, cfg.dedup)?;
    train(agent_mdp, Imitation::Gw(space), cfg)
}

/// Same-domain baseline: exact optimal transport on squared Euclidean step costs.
pub fn train_wasserstein_baseline(agent_mdp: &TabularMetricMdp, expert: &Trajectory, cfg: &TrainConfig) -> Result<(Policy, TrainLog)> {
    expert.validate()?;
    if expert.is_empty() {
        return Err(GwilError::InvalidTrajectory("expert trajectory is empty".into()));
    }
    let (ds, da) = (agent_mdp.state_feature(0).len(), agent_mdp.action_feature(0).len());
    if expert.state_dim() != ds || expert.action_dim() != da {
        return Err(GwilError::Dimension(format!(
            "expert features are {}+{}, agent features are {ds}+{da}",
            expert.state_dim(),
            expert.action_dim()
        )));
    }
    train(agent_mdp, Imitation::Wasserstein(expert.feature_rows(cfg.dedup)), cfg)
}

/// Plain soft Q-learning on the environment reward.
pub fn train_soft_q(agent_mdp: &TabularMetricMdp, cfg: &TrainConfig) -> Result<(Policy, TrainLog)> {
    let cfg = TrainConfig { include_env_reward: true, beta: 1.0, ..cfg.clone() };
    train(agent_mdp, Imitation::EnvOnly, &cfg)
}
