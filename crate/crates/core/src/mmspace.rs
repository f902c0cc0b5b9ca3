//! Finite metric measure spaces and the trajectories they are built from.
//!
//! A [`MetricMeasureSpace`] is a dense symmetric distance matrix paired with a
//! probability vector. Spaces built from a [`Trajectory`] carry the uniform
//! empirical measure over its steps.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{GwilError, Result};
use crate::serde_nd;

/// Inputs closer than this to symmetric / normalized are repaired instead of rejected.
pub const REPAIR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpace", into = "RawSpace")]
pub struct MetricMeasureSpace {
    dist: Array2<f64>,
    mass: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    dist: Vec<Vec<f64>>,
    mass: Vec<f64>,
}

impl TryFrom<RawSpace> for MetricMeasureSpace {
    type Error = GwilError;

    fn try_from(raw: RawSpace) -> Result<Self> {
        let dist = serde_nd::from_rows(&raw.dist).map_err(GwilError::Dimension)?;
        MetricMeasureSpace::from_distance_matrix(dist, Array1::from(raw.mass))
    }
}

impl From<MetricMeasureSpace> for RawSpace {
    fn from(s: MetricMeasureSpace) -> Self {
        RawSpace { dist: serde_nd::to_rows(&s.dist), mass: s.mass.to_vec() }
    }
}

impl MetricMeasureSpace {
    /// Validates a distance matrix and measure, repairing round-off within [`REPAIR_TOL`].
    pub fn from_distance_matrix(dist: Array2<f64>, mass: Array1<f64>) -> Result<Self> {
        let n = dist.nrows();
        if dist.ncols() != n {
            return Err(GwilError::Dimension(format!(
                "distance matrix is {}x{}, expected square",
                n,
                dist.ncols()
            )));
        }
        if mass.len() != n {
            return Err(GwilError::Dimension(format!(
                "{} atoms in distance matrix but {} masses",
                n,
                mass.len()
            )));
        }
        if n == 0 {
            return Err(GwilError::Dimension("space has no atoms".into()));
        }
        let mut dist = dist;
        for i in 0..n {
            for j in 0..n {
                let d = dist[[i, j]];
                if !d.is_finite() {
                    return Err(GwilError::InvalidDistance(format!("non-finite entry at ({i}, {j})")));
                }
                if d < 0.0 {
                    return Err(GwilError::InvalidDistance(format!("negative entry {d} at ({i}, {j})")));
                }
            }
            if dist[[i, i]] > REPAIR_TOL {
                return Err(GwilError::InvalidDistance(format!(
                    "nonzero diagonal {} at {i}",
                    dist[[i, i]]
                )));
            }
            dist[[i, i]] = 0.0;
            for j in (i + 1)..n {
                let (a, b) = (dist[[i, j]], dist[[j, i]]);
                if (a - b).abs() > REPAIR_TOL {
                    return Err(GwilError::InvalidDistance(format!(
                        "asymmetry {} at ({i}, {j}) exceeds tolerance",
                        (a - b).abs()
                    )));
                }
                let avg = 0.5 * (a + b);
                dist[[i, j]] = avg;
                dist[[j, i]] = avg;
            }
        }

        if mass.iter().any(|m| !m.is_finite()) {
            return Err(GwilError::InvalidMeasure("non-finite mass".into()));
        }
        if let Some(m) = mass.iter().find(|&&m| m < 0.0) {
            return Err(GwilError::InvalidMeasure(format!("negative mass {m}")));
        }
        let total = mass.sum();
        if total == 0.0 {
            return Err(GwilError::InvalidMeasure("all masses are zero".into()));
        }
        if (total - 1.0).abs() > REPAIR_TOL {
            return Err(GwilError::InvalidMeasure(format!("masses sum to {total}, expected 1")));
        }
        let mass = mass / total;
        Ok(Self { dist, mass })
    }

    /// Builds the uniform empirical space of a trajectory.
    pub fn from_trajectory(traj: &Trajectory, metric: Metric, dedup: Dedup) -> Result<Self> {
        traj.validate()?;
        let features = traj.feature_rows(dedup);
        let n = features.len();
        let mut dist = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let d = metric.distance(&features[i], &features[j]);
                dist[[i, j]] = d;
                dist[[j, i]] = d;
            }
        }
        let mass = Array1::from_elem(n, 1.0 / n as f64);
        Ok(Self { dist, mass })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn dist(&self) -> &Array2<f64> {
        &self.dist
    }

    pub fn mass(&self) -> &Array1<f64> {
        &self.mass
    }

    pub fn max_distance(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// True when every atom carries mass `1/n` up to `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.mass.iter().all(|m| (m - u).abs() <= tol)
    }

    /// Largest violation of `d(i,k) <= d(i,j) + d(j,k)`; zero for a metric.
    pub fn triangle_violation(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = self.dist[[i, k]] - self.dist[[i, j]] - self.dist[[j, k]];
                    worst = worst.max(v);
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
}

impl Metric {
    pub fn distance(self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
        }
    }
}

/// How repeated state-action pairs are kept apart when building a space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Dedup {
    #[default]
    None,
    /// Appends `t * weight` to the state features.
    AppendTimestep { weight: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_reward: Option<f64>,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    steps: Vec<Step>,
}

impl TryFrom<RawTrajectory> for Trajectory {
    type Error = GwilError;

    fn try_from(raw: RawTrajectory) -> Result<Self> {
        Trajectory::new(raw.steps)
    }
}

impl Trajectory {
    pub fn new(steps: Vec<Step>) -> Result<Self> {
        let traj = Self { steps };
        traj.validate()?;
        Ok(traj)
    }

    /// Builds a trajectory from `(state, action, reward)` records, numbering steps from 0.
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<f64>, Vec<f64>, Option<f64>)>,
    {
        let steps = records
            .into_iter()
            .enumerate()
            .map(|(t, (state, action, env_reward))| Step { state, action, env_reward, t })
            .collect();
        Self::new(steps)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .steps
            .first()
            .ok_or_else(|| GwilError::InvalidTrajectory("trajectory is empty".into()))?;
        if first.t != 0 {
            return Err(GwilError::InvalidTrajectory("step indices must start at 0".into()));
        }
        let (ds, da) = (first.state.len(), first.action.len());
        for w in self.steps.windows(2) {
            if w[1].t <= w[0].t {
                return Err(GwilError::InvalidTrajectory(format!(
                    "step index {} does not increase after {}",
                    w[1].t, w[0].t
                )));
            }
        }
        for s in &self.steps {
            if s.state.len() != ds || s.action.len() != da {
                return Err(GwilError::InvalidTrajectory(format!(
                    "step {} has state/action dims {}/{}, expected {ds}/{da}",
                    s.t,
                    s.state.len(),
                    s.action.len()
                )));
            }
            if s.state.iter().chain(&s.action).any(|x| !x.is_finite()) {
                return Err(GwilError::InvalidTrajectory(format!("non-finite feature at step {}", s.t)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.state.len())
    }

    pub fn action_dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.action.len())
    }

    /// Undiscounted sum of recorded environment rewards.
    pub fn env_return(&self) -> f64 {
        self.steps.iter().filter_map(|s| s.env_reward).sum()
    }

    pub fn env_rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.env_reward.unwrap_or(0.0)).collect()
    }

    /// Concatenated `state ‖ [t·w] ‖ action` feature vectors.
    pub fn feature_rows(&self, dedup: Dedup) -> Vec<Vec<f64>> {
        self.steps
            .iter()
            .map(|s| {
                let mut f = Vec::with_capacity(s.state.len() + s.action.len() + 1);
                f.extend_from_slice(&s.state);
                if let Dedup::AppendTimestep { weight } = dedup {
                    f.push(s.t as f64 * weight);
                }
                f.extend_from_slice(&s.action);
                f
            })
            .collect()
    }
}

/// Sum metric on state-action pairs, indexed row-major as `s * nA + a`.
pub fn product_metric(ds: &Array2<f64>, da: &Array2<f64>) -> Array2<f64> {
    let (ns, na) = (ds.nrows(), da.nrows());
    Array2::from_shape_fn((ns * na, ns * na), |(p, q)| {
        let (s, a) = (p / na, p % na);
        let (t, b) = (q / na, q % na);
        ds[[s, t]] + da[[a, b]]
    })
}
