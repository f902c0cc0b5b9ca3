//! Pseudo-rewards from an optimal coupling.
//!
//! With `L(i,i',j,j') = |d_E(i,i') − d_A(j,j')|²`, agent atom `j` receives
//! `−w_j · Σ_{i,i',j'} L·θ[i][j]·θ[i'][j']`. That inner sum is half the GW
//! gradient contracted with column `j` of the coupling, so summing the
//! rewards weighted by `1/w_j` recovers `−GW²` exactly.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{GwilError, Result};
use crate::gw::GwProblem;
use crate::mmspace::MetricMeasureSpace;
use crate::transport::Coupling;

const UNIFORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoRewardAssignment {
    pub rewards: Vec<f64>,
    pub gw_sq: f64,
    pub includes_t_a_factor: bool,
}

impl PseudoRewardAssignment {
    pub fn total(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,reward\n");
        for (t, r) in self.rewards.iter().enumerate() {
            out.push_str(&format!("{t},{r}\n"));
        }
        out
    }
}

/// `Σ_{i,i',j'} L·θ[i][j]·θ[i'][j']` for every agent atom `j`, plus their total.
///
/// Summed directly over the nonzero entries of the coupling, so a coupling
/// that aligns equal distances gives exact zeros. Dense couplings fall back to
/// the gradient contraction, which costs `O(n²m + nm²)` instead of `O(nnz²)`.
fn per_atom_distortion(expert: &MetricMeasureSpace, agent: &MetricMeasureSpace, theta: &Coupling) -> (Array1<f64>, f64) {
    let (dx, dy) = (expert.dist(), agent.dist());
    let support: Vec<(usize, usize, f64)> =
        theta.plan().indexed_iter().filter(|(_, &v)| v > 0.0).map(|((i, j), &v)| (i, j, v)).collect();
    let (n, m) = theta.shape();
    let per_atom = if support.len() * support.len() <= 4 * (n * n * m + n * m * m) {
        let mut out = Array1::zeros(m);
        for &(i, j, v) in &support {
            let mut acc = 0.0;
            for &(k, l, w) in &support {
                let diff = dx[[i, k]] - dy[[j, l]];
                acc += diff * diff * w;
            }
            out[j] += v * acc;
        }
        out
    } else {
        let grad = GwProblem::new(dx, dy).gradient(theta.plan());
        ((theta.plan() * &grad).sum_axis(Axis(0)) * 0.5).mapv(|d: f64| d.max(0.0))
    };
    let total = per_atom.sum();
    (per_atom, total)
}

/// Per-step rewards for an agent trajectory against an expert trajectory.
///
/// With `include_t_a` the rewards carry the `T_A` factor and their mean is
/// `−GW²`; without it their sum is `−GW²`.
pub fn trajectory_rewards(
    expert: &MetricMeasureSpace,
    agent: &MetricMeasureSpace,
    theta: &Coupling,
    include_t_a: bool,
) -> Result<PseudoRewardAssignment> {
    if !expert.is_uniform(UNIFORM_TOL) || !agent.is_uniform(UNIFORM_TOL) {
        return Err(GwilError::InvalidMeasure("trajectory rewards need uniform measures".into()));
    }
    theta.check_marginals(expert.mass(), agent.mass())?;
    let (per_atom, gw_sq) = per_atom_distortion(expert, agent, theta);
    let factor = if include_t_a { agent.len() as f64 } else { 1.0 };
    let rewards = per_atom.iter().map(|&d| 0.0 - factor * d).collect();
    Ok(PseudoRewardAssignment { rewards, gw_sq, includes_t_a_factor: include_t_a })
}

/// Rewards over agent atoms for a general occupancy `rho_agent`: `r(z) = −distortion(z) / ρ(z)`.
pub fn occupancy_rewards(
    expert: &MetricMeasureSpace,
    agent: &MetricMeasureSpace,
    u: &Coupling,
    rho_agent: &Array1<f64>,
) -> Result<Vec<f64>> {
    u.check_marginals(expert.mass(), agent.mass())?;
    if rho_agent.len() != agent.len() {
        return Err(GwilError::Dimension(format!(
            "{} occupancy entries for {} agent atoms",
            rho_agent.len(),
            agent.len()
        )));
    }
    if let Some(j) = rho_agent.iter().position(|&r| !(r > 0.0)) {
        return Err(GwilError::InvalidMeasure(format!("agent atom {j} has zero occupancy")));
    }
    let (per_atom, _) = per_atom_distortion(expert, agent, u);
    Ok(per_atom.iter().zip(rho_agent).map(|(&d, &r)| -d / r).collect())
}

/// Elementwise `proxy + beta · env`.
pub fn combine_rewards(proxy: &[f64], env: &[f64], beta: f64) -> Result<Vec<f64>> {
    if proxy.len() != env.len() {
        return Err(GwilError::Dimension(format!("{} proxy rewards vs {} env rewards", proxy.len(), env.len())));
    }
    Ok(proxy.iter().zip(env).map(|(p, e)| p + beta * e).collect())
}

/// Linear analogue for a Wasserstein plan: `r_j = −w · Σ_i cost[i][j]·plan[i][j]`.
pub fn wasserstein_rewards(cost: &Array2<f64>, plan: &Coupling, include_t_a: bool) -> Result<PseudoRewardAssignment> {
    if cost.dim() != plan.shape() {
        return Err(GwilError::Dimension(format!("cost {:?} vs plan {:?}", cost.dim(), plan.shape())));
    }
    let per_atom = (cost * plan.plan()).sum_axis(Axis(0));
    let value = per_atom.sum();
    let factor = if include_t_a { plan.shape().1 as f64 } else { 1.0 };
    Ok(PseudoRewardAssignment {
        rewards: per_atom.iter().map(|&c| -factor * c).collect(),
        gw_sq: value,
        includes_t_a_factor: include_t_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_point(d: f64) -> MetricMeasureSpace {
        MetricMeasureSpace::from_distance_matrix(array![[0.0, d], [d, 0.0]], array![0.5, 0.5]).unwrap()
    }

    #[test]
    fn identical_trajectories_get_zero() {
        let x = two_point(2.0);
        let r = trajectory_rewards(&x, &x, &Coupling::identity(2), true).unwrap();
        assert!(r.rewards.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let x = MetricMeasureSpace::from_distance_matrix(
            array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]],
            Array1::from_elem(3, 1.0 / 3.0),
        )
        .unwrap();
        let y = two_point(3.0);
        let u = Coupling::product(x.mass(), y.mass());
        let (sparse, total) = per_atom_distortion(&x, &y, &u);
        let problem = GwProblem::new(x.dist(), y.dist());
        let dense = (u.plan() * &problem.gradient(u.plan())).sum_axis(Axis(0)) * 0.5;
        for (a, b) in sparse.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((total - problem.objective(u.plan())).abs() < 1e-12);
    }

    #[test]
    fn two_point_rewards_with_and_without_factor() {
        let (x, y) = (two_point(1.0), two_point(3.0));
        let theta = Coupling::identity(2);
        // each j: only i'≠i, j'≠j contribute (1−3)²·½·½ = 1
        let with = trajectory_rewards(&x, &y, &theta, true).unwrap();
        assert!(with.rewards.iter().all(|&r| (r + 2.0).abs() < 1e-12));
        assert!((with.rewards.iter().sum::<f64>() / 2.0 + with.gw_sq).abs() < 1e-12);
        let without = trajectory_rewards(&x, &y, &theta, false).unwrap();
        assert!(without.rewards.iter().all(|&r| (r + 1.0).abs() < 1e-12));
        assert!((without.total() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_uniform_measures_rejected() {
        let x = two_point(1.0);
        let y = MetricMeasureSpace::from_distance_matrix(array![[0.0, 1.0], [1.0, 0.0]], array![0.25, 0.75]).unwrap();
        let u = Coupling::product(x.mass(), y.mass());
        assert!(trajectory_rewards(&x, &y, &u, false).is_err());
        assert!(occupancy_rewards(&x, &y, &u, y.mass()).is_ok());
    }

    #[test]
    fn uniform_occupancy_matches_trajectory_convention() {
        let (x, y) = (two_point(1.0), two_point(3.0));
        let u = Coupling::product(x.mass(), y.mass());
        let occ = occupancy_rewards(&x, &y, &u, y.mass()).unwrap();
        let traj = trajectory_rewards(&x, &y, &u, true).unwrap();
        for (a, b) in occ.iter().zip(&traj.rewards) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_occupancy_rejected() {
        let x = two_point(1.0);
        let u = Coupling::identity(2);
        assert!(occupancy_rewards(&x, &x, &u, &array![0.5, 0.0]).is_err());
        assert!(occupancy_rewards(&x, &x, &u, &array![1.0]).is_err());
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_rewards(&[-1.0, -2.0], &[0.0, 10.0], 0.0).unwrap(), vec![-1.0, -2.0]);
        assert_eq!(combine_rewards(&[0.0, 0.0], &[0.0, 10.0], 1.0).unwrap(), vec![0.0, 10.0]);
        assert_eq!(combine_rewards(&[-1.0, -2.0], &[0.0, 10.0], 0.5).unwrap(), vec![-1.0, 3.0]);
        assert!(combine_rewards(&[1.0], &[], 1.0).is_err());
    }

    #[test]
    fn wasserstein_rewards_sum_to_minus_value() {
        let cost = array![[0.0, 4.0], [1.0, 0.5]];
        let a = array![0.5, 0.5];
        let sol = crate::transport::solve_exact(&a, &a, &cost).unwrap();
        let r = wasserstein_rewards(&cost, &sol.coupling, false).unwrap();
        assert!((r.total() + sol.cost).abs() < 1e-12);
        let r2 = wasserstein_rewards(&cost, &sol.coupling, true).unwrap();
        assert!((r2.total() + 2.0 * sol.cost).abs() < 1e-12);
    }
}
