//! Finite metric MDPs: exact occupancy measures, value iteration, isometric
//! relabelings, and the GW distance between policies.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GwilError, Result};
use crate::gw::{solve_gw, GwSolveResult, SolveOptions};
use crate::mmspace::{MetricMeasureSpace, Step, Trajectory};
use crate::serde_nd;

/// Tolerance for rows of `P`, `p0` and policies summing to one.
pub const PROB_TOL: f64 = 1e-12;
/// Occupancy atoms lighter than this are dropped before GW.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct TabularMetricMdp {
    /// `transitions[[s, a, s']] = P(s' | s, a)`
    pub transitions: Array3<f64>,
    pub rewards: Array2<f64>,
    pub initial: Array1<f64>,
    pub gamma: f64,
    pub state_metric: Array2<f64>,
    pub action_metric: Array2<f64>,
    pub state_features: Option<Array2<f64>>,
    pub action_features: Option<Array2<f64>>,
    /// Goal states; rollouts stop on entering one.
    pub absorbing: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawMdp {
    #[serde(rename = "nS")]
    n_states: usize,
    #[serde(rename = "nA")]
    n_actions: usize,
    #[serde(rename = "P", with = "serde_nd::tensor3")]
    transitions: Array3<f64>,
    #[serde(rename = "R", with = "serde_nd::matrix")]
    rewards: Array2<f64>,
    p0: Vec<f64>,
    gamma: f64,
    #[serde(rename = "dS", with = "serde_nd::matrix")]
    state_metric: Array2<f64>,
    #[serde(rename = "dA", with = "serde_nd::matrix")]
    action_metric: Array2<f64>,
    #[serde(default, with = "serde_nd::opt_matrix")]
    state_features: Option<Array2<f64>>,
    #[serde(default, with = "serde_nd::opt_matrix")]
    action_features: Option<Array2<f64>>,
    #[serde(default)]
    absorbing: Vec<usize>,
}

impl TryFrom<RawMdp> for TabularMetricMdp {
    type Error = GwilError;

    fn try_from(raw: RawMdp) -> Result<Self> {
        let mdp = TabularMetricMdp {
            transitions: raw.transitions,
            rewards: raw.rewards,
            initial: Array1::from(raw.p0),
            gamma: raw.gamma,
            state_metric: raw.state_metric,
            action_metric: raw.action_metric,
            state_features: raw.state_features,
            action_features: raw.action_features,
            absorbing: raw.absorbing,
        };
        if mdp.n_states() != raw.n_states || mdp.n_actions() != raw.n_actions {
            return Err(GwilError::InvalidMdp(format!(
                "declared nS={} nA={} but tensors are {:?}",
                raw.n_states,
                raw.n_actions,
                mdp.transitions.dim()
            )));
        }
        mdp.validate()?;
        Ok(mdp)
    }
}

impl From<TabularMetricMdp> for RawMdp {
    fn from(m: TabularMetricMdp) -> Self {
        RawMdp {
            n_states: m.n_states(),
            n_actions: m.n_actions(),
            transitions: m.transitions,
            rewards: m.rewards,
            p0: m.initial.to_vec(),
            gamma: m.gamma,
            state_metric: m.state_metric,
            action_metric: m.action_metric,
            state_features: m.state_features,
            action_features: m.action_features,
            absorbing: m.absorbing,
        }
    }
}

fn check_distribution(p: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    for x in p {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(GwilError::InvalidMdp(format!("{what} has a negative or non-finite entry")));
        }
        total += x;
    }
    if (total - 1.0).abs() > PROB_TOL {
        return Err(GwilError::InvalidMdp(format!("{what} sums to {total}")));
    }
    Ok(())
}

fn check_metric(d: &Array2<f64>, n: usize, what: &str) -> Result<()> {
    if d.dim() != (n, n) {
        return Err(GwilError::InvalidMdp(format!("{what} is {:?}, expected {n}x{n}", d.dim())));
    }
    for i in 0..n {
        if d[[i, i]] != 0.0 {
            return Err(GwilError::InvalidMdp(format!("{what} has nonzero diagonal at {i}")));
        }
        for j in 0..n {
            if d[[i, j]] < 0.0 || !d[[i, j]].is_finite() || d[[i, j]] != d[[j, i]] {
                return Err(GwilError::InvalidMdp(format!("{what} is not a symmetric nonnegative matrix at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

impl TabularMetricMdp {
    pub fn n_states(&self) -> usize {
        self.transitions.dim().0
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.dim().1
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na, ns2) = self.transitions.dim();
        if ns == 0 || na == 0 || ns2 != ns {
            return Err(GwilError::InvalidMdp(format!("transition tensor has shape {:?}", self.transitions.dim())));
        }
        for s in 0..ns {
            for a in 0..na {
                check_distribution(self.transitions.slice(ndarray::s![s, a, ..]).iter().copied(), &format!("P[{s}][{a}]"))?;
            }
        }
        if self.rewards.dim() != (ns, na) || self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(GwilError::InvalidMdp(format!("reward table has shape {:?}", self.rewards.dim())));
        }
        if self.initial.len() != ns {
            return Err(GwilError::InvalidMdp("p0 length differs from nS".into()));
        }
        check_distribution(self.initial.iter().copied(), "p0")?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(GwilError::InvalidMdp(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        check_metric(&self.state_metric, ns, "dS")?;
        check_metric(&self.action_metric, na, "dA")?;
        if let Some(f) = &self.state_features {
            if f.nrows() != ns {
                return Err(GwilError::InvalidMdp("state_features row count differs from nS".into()));
            }
        }
        if let Some(f) = &self.action_features {
            if f.nrows() != na {
                return Err(GwilError::InvalidMdp("action_features row count differs from nA".into()));
            }
        }
        if let Some(&s) = self.absorbing.iter().find(|&&s| s >= ns) {
            return Err(GwilError::InvalidMdp(format!("absorbing state {s} out of range")));
        }
        Ok(())
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        self.absorbing.contains(&s)
    }

    pub fn state_feature(&self, s: usize) -> Vec<f64> {
        match &self.state_features {
            Some(f) => f.row(s).to_vec(),
            None => one_hot(s, self.n_states()),
        }
    }

    pub fn action_feature(&self, a: usize) -> Vec<f64> {
        match &self.action_features {
            Some(f) => f.row(a).to_vec(),
            None => one_hot(a, self.n_actions()),
        }
    }

    /// State-to-state kernel under `policy`.
    fn policy_kernel(&self, policy: &Policy) -> Array2<f64> {
        let (ns, na) = (self.n_states(), self.n_actions());
        let mut k = Array2::zeros((ns, ns));
        for s in 0..ns {
            for a in 0..na {
                let p = policy.pi[[s, a]];
                if p == 0.0 {
                    continue;
                }
                for t in 0..ns {
                    k[[s, t]] += p * self.transitions[[s, a, t]];
                }
            }
        }
        k
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.pi.dim() != (self.n_states(), self.n_actions()) {
            return Err(GwilError::InvalidPolicy(format!(
                "policy is {:?}, MDP has {} states and {} actions",
                policy.pi.dim(),
                self.n_states(),
                self.n_actions()
            )));
        }
        Ok(())
    }
}

fn one_hot(k: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct Policy {
    pi: Array2<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPolicy {
    pi: Vec<Vec<f64>>,
}

impl TryFrom<RawPolicy> for Policy {
    type Error = GwilError;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        Policy::new(serde_nd::from_rows(&raw.pi).map_err(GwilError::InvalidPolicy)?)
    }
}

impl From<Policy> for RawPolicy {
    fn from(p: Policy) -> Self {
        RawPolicy { pi: serde_nd::to_rows(&p.pi) }
    }
}

impl Policy {
    pub fn new(pi: Array2<f64>) -> Result<Self> {
        for (s, row) in pi.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(GwilError::InvalidPolicy(format!("row {s} has a negative or non-finite entry")));
            }
            let total = row.sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(GwilError::InvalidPolicy(format!("row {s} sums to {total}")));
            }
        }
        Ok(Self { pi })
    }

    pub fn uniform(ns: usize, na: usize) -> Self {
        Self { pi: Array2::from_elem((ns, na), 1.0 / na as f64) }
    }

    pub fn deterministic(actions: &[usize], na: usize) -> Result<Self> {
        let mut pi = Array2::zeros((actions.len(), na));
        for (s, &a) in actions.iter().enumerate() {
            if a >= na {
                return Err(GwilError::InvalidPolicy(format!("action {a} out of range at state {s}")));
            }
            pi[[s, a]] = 1.0;
        }
        Ok(Self { pi })
    }

    /// Boltzmann policy `∝ exp(q / temperature)`; zero temperature is greedy.
    pub fn boltzmann(q: &Array2<f64>, temperature: f64) -> Self {
        if temperature <= 0.0 {
            return Self::greedy(q);
        }
        let mut pi = Array2::zeros(q.dim());
        for (s, row) in q.rows().into_iter().enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = row.iter().map(|&x| ((x - max) / temperature).exp()).collect();
            let z: f64 = w.iter().sum();
            for (a, wa) in w.iter().enumerate() {
                pi[[s, a]] = wa / z;
            }
        }
        Self { pi }
    }

    /// Deterministic argmax policy; ties go to the lowest action index.
    pub fn greedy(q: &Array2<f64>) -> Self {
        let actions: Vec<usize> = q.rows().into_iter().map(|row| argmax_lowest(row.iter().copied())).collect();
        Self::deterministic(&actions, q.ncols()).expect("argmax is in range")
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.pi
    }

    pub fn n_states(&self) -> usize {
        self.pi.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.pi.ncols()
    }

    /// Mode of each row (lowest index on ties).
    pub fn greedy_actions(&self) -> Vec<usize> {
        self.pi.rows().into_iter().map(|row| argmax_lowest(row.iter().copied())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_index(self.pi.row(s).iter().copied(), rng)
    }

    /// Relabels states and actions: the new policy plays `psi(a)` at `phi(s)` when this one plays `a` at `s`.
    pub fn permuted(&self, phi: &[usize], psi: &[usize]) -> Result<Self> {
        check_permutation(phi, self.n_states(), "state map")?;
        check_permutation(psi, self.n_actions(), "action map")?;
        let mut pi = Array2::zeros(self.pi.dim());
        for s in 0..self.n_states() {
            for a in 0..self.n_actions() {
                pi[[phi[s], psi[a]]] = self.pi[[s, a]];
            }
        }
        Ok(Self { pi })
    }
}

fn argmax_lowest(values: impl Iterator<Item = f64> + Clone) -> usize {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    let tie = 1e-10 * max.abs().max(1.0);
    values.enumerate().find(|&(_, v)| v >= max - tie).map_or(0, |(i, _)| i)
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last_positive
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    #[serde(with = "serde_nd::matrix")]
    pub rho: Array2<f64>,
}

impl OccupancyMeasure {
    pub fn total(&self) -> f64 {
        self.rho.sum()
    }

    /// Max violation of the Bellman flow equations.
    pub fn flow_residual(&self, mdp: &TabularMetricMdp) -> f64 {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        (0..ns)
            .map(|s| {
                let inflow: f64 = (0..ns)
                    .flat_map(|t| (0..na).map(move |a| (t, a)))
                    .map(|(t, a)| mdp.transitions[[t, a, s]] * self.rho[[t, a]])
                    .sum();
                (self.rho.row(s).sum() - mdp.initial[s] - mdp.gamma * inflow).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Expected discounted return `Σ ρ·R`.
    pub fn expected_return(&self, mdp: &TabularMetricMdp) -> f64 {
        (&self.rho * &mdp.rewards).sum()
    }
}

/// Discounted state-action occupancy by a direct solve of the flow equations.
pub fn occupancy(mdp: &TabularMetricMdp, policy: &Policy) -> Result<OccupancyMeasure> {
    mdp.check_policy(policy)?;
    let ns = mdp.n_states();
    let k = mdp.policy_kernel(policy);
    // (I − γ Kᵀ) d = p0
    let a = DMatrix::from_fn(ns, ns, |i, j| (if i == j { 1.0 } else { 0.0 }) - mdp.gamma * k[[j, i]]);
    let b = DVector::from_iterator(ns, mdp.initial.iter().copied());
    let d = a.lu().solve(&b).ok_or(GwilError::Singular)?;
    if d.iter().any(|x| !x.is_finite()) {
        return Err(GwilError::Singular);
    }
    let rho = Array2::from_shape_fn(policy.pi.dim(), |(s, a)| d[s].max(0.0) * policy.pi[[s, a]]);
    Ok(OccupancyMeasure { rho })
}

#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub policy: Policy,
    pub expected_return: f64,
    pub q: Array2<f64>,
    pub values: Array1<f64>,
    pub bellman_residual: f64,
}

fn q_from_values(mdp: &TabularMetricMdp, v: &Array1<f64>) -> Array2<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    Array2::from_shape_fn((ns, na), |(s, a)| {
        let next: f64 = (0..ns).map(|t| mdp.transitions[[s, a, t]] * v[t]).sum();
        mdp.rewards[[s, a]] + mdp.gamma * next
    })
}

/// Optimal deterministic policy (ties to the lowest action) and its exact expected return.
pub fn value_iteration(mdp: &TabularMetricMdp, tol: f64) -> Result<ValueIterationResult> {
    let ns = mdp.n_states();
    let mut v = Array1::<f64>::zeros(ns);
    let mut residual = f64::INFINITY;
    for _ in 0..10_000_000 {
        let q = q_from_values(mdp, &v);
        let next = q.map_axis(ndarray::Axis(1), |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        residual = (&next - &v).iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        v = next;
        if residual <= tol {
            break;
        }
    }
    let q = q_from_values(mdp, &v);
    let policy = Policy::greedy(&q);
    let expected_return = occupancy(mdp, &policy)?.expected_return(mdp);
    Ok(ValueIterationResult { policy, expected_return, q, values: v, bellman_residual: residual })
}

fn check_permutation(p: &[usize], n: usize, what: &str) -> Result<()> {
    if p.len() != n {
        return Err(GwilError::NotBijective(format!("{what} has {} entries, expected {n}", p.len())));
    }
    let mut seen = vec![false; n];
    for &x in p {
        if x >= n || std::mem::replace(&mut seen[x], true) {
            return Err(GwilError::NotBijective(format!("{what} {p:?} is not a permutation")));
        }
    }
    Ok(())
}

/// `x ↦ linear·x + translation` with orthogonal `linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidMap {
    pub linear: Array2<f64>,
    pub translation: Array1<f64>,
}

impl RigidMap {
    pub fn new(linear: Array2<f64>, translation: Array1<f64>) -> Result<Self> {
        let k = linear.nrows();
        if linear.ncols() != k || translation.len() != k {
            return Err(GwilError::Dimension("rigid map shapes disagree".into()));
        }
        let gram = linear.t().dot(&linear);
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[[i, j]] - target).abs() > 1e-9 {
                    return Err(GwilError::Config("rigid map is not orthogonal".into()));
                }
            }
        }
        Ok(Self { linear, translation })
    }

    /// Mirror of the first coordinate about `x = axis`.
    pub fn mirror_x(dim: usize, axis: f64) -> Self {
        let mut linear = Array2::eye(dim);
        linear[[0, 0]] = -1.0;
        let mut translation = Array1::zeros(dim);
        translation[0] = 2.0 * axis;
        Self { linear, translation }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let x = Array1::from(x.to_vec());
        (self.linear.dot(&x) + &self.translation).to_vec()
    }

    /// The map on displacement vectors, which ignore the translation.
    pub fn apply_linear(&self, v: &[f64]) -> Vec<f64> {
        self.linear.dot(&Array1::from(v.to_vec())).to_vec()
    }
}

/// Relabels an MDP through state and action bijections, so `phi` and `psi` are isometries by construction.
///
/// State features go through the full rigid map. Action features are treated
/// as displacements and only see its linear part, when the dimensions agree.
pub fn apply_isometry(mdp: &TabularMetricMdp, phi: &[usize], psi: &[usize], feature_map: Option<&RigidMap>) -> Result<TabularMetricMdp> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    check_permutation(phi, ns, "state map")?;
    check_permutation(psi, na, "action map")?;
    let mut transitions = Array3::zeros((ns, na, ns));
    let mut rewards = Array2::zeros((ns, na));
    for s in 0..ns {
        for a in 0..na {
            rewards[[phi[s], psi[a]]] = mdp.rewards[[s, a]];
            for t in 0..ns {
                transitions[[phi[s], psi[a], phi[t]]] = mdp.transitions[[s, a, t]];
            }
        }
    }
    let mut initial = Array1::zeros(ns);
    let mut state_metric = Array2::zeros((ns, ns));
    for s in 0..ns {
        initial[phi[s]] = mdp.initial[s];
        for t in 0..ns {
            state_metric[[phi[s], phi[t]]] = mdp.state_metric[[s, t]];
        }
    }
    let mut action_metric = Array2::zeros((na, na));
    for a in 0..na {
        for b in 0..na {
            action_metric[[psi[a], psi[b]]] = mdp.action_metric[[a, b]];
        }
    }
    let state_features = mdp.state_features.as_ref().map(|f| {
        let mut out = Array2::zeros(f.dim());
        for s in 0..ns {
            let row = f.row(s).to_vec();
            let mapped = feature_map.map_or(row.clone(), |m| m.apply(&row));
            out.row_mut(phi[s]).assign(&Array1::from(mapped));
        }
        out
    });
    let action_features = mdp.action_features.as_ref().map(|f| {
        let mut out = Array2::zeros(f.dim());
        for a in 0..na {
            let row = f.row(a).to_vec();
            let mapped = match feature_map {
                Some(m) if m.linear.nrows() == row.len() => m.apply_linear(&row),
                _ => row,
            };
            out.row_mut(psi[a]).assign(&Array1::from(mapped));
        }
        out
    });
    let mut absorbing: Vec<usize> = mdp.absorbing.iter().map(|&s| phi[s]).collect();
    absorbing.sort_unstable();
    Ok(TabularMetricMdp {
        transitions,
        rewards,
        initial,
        gamma: mdp.gamma,
        state_metric,
        action_metric,
        state_features,
        action_features,
        absorbing,
    })
}

/// The normalized occupancy of a policy as a metric measure space over its support.
#[derive(Debug, Clone)]
pub struct PolicySpace {
    /// `(state, action)` of each atom.
    pub atoms: Vec<(usize, usize)>,
    pub space: MetricMeasureSpace,
}

/// Occupancy scaled by `(1 − γ)`, atoms below [`SUPPORT_TOL`] pruned, metric `dS + dA`.
pub fn policy_space(mdp: &TabularMetricMdp, policy: &Policy) -> Result<PolicySpace> {
    let rho = occupancy(mdp, policy)?;
    let scale = 1.0 - mdp.gamma;
    let mut atoms = Vec::new();
    let mut mass = Vec::new();
    for ((s, a), &r) in rho.rho.indexed_iter() {
        let m = r * scale;
        if m >= SUPPORT_TOL {
            atoms.push((s, a));
            mass.push(m);
        }
    }
    let total: f64 = mass.iter().sum();
    let mass = Array1::from(mass) / total;
    let dist = Array2::from_shape_fn((atoms.len(), atoms.len()), |(p, q)| {
        let ((s, a), (t, b)) = (atoms[p], atoms[q]);
        mdp.state_metric[[s, t]] + mdp.action_metric[[a, b]]
    });
    let space = MetricMeasureSpace::from_distance_matrix(dist, mass)?;
    Ok(PolicySpace { atoms, space })
}

pub fn gw_between_policies(
    mdp_e: &TabularMetricMdp,
    pi_e: &Policy,
    mdp_a: &TabularMetricMdp,
    pi_a: &Policy,
    opts: &SolveOptions,
) -> Result<GwSolveResult> {
    let x = policy_space(mdp_e, pi_e)?;
    let y = policy_space(mdp_a, pi_a)?;
    solve_gw(&x.space, &y.space, opts)
}

/// One sampled episode with both index and feature views.
#[derive(Debug, Clone)]
pub struct Episode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    /// State after the last recorded step.
    pub final_state: usize,
    /// True when the episode ended by entering an absorbing state.
    pub terminated: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
    }

    pub fn to_trajectory(&self, mdp: &TabularMetricMdp) -> Result<Trajectory> {
        let steps = self
            .states
            .iter()
            .zip(&self.actions)
            .zip(&self.rewards)
            .enumerate()
            .map(|(t, ((&s, &a), &r))| Step {
                state: mdp.state_feature(s),
                action: mdp.action_feature(a),
                env_reward: Some(r),
                t,
            })
            .collect();
        Trajectory::new(steps)
    }
}

/// Samples up to `horizon` steps, stopping early on entering an absorbing state.
pub fn rollout_episode<R: Rng + ?Sized>(mdp: &TabularMetricMdp, policy: &Policy, horizon: usize, rng: &mut R) -> Episode {
    let mut s = sample_index(mdp.initial.iter().copied(), rng);
    let mut ep = Episode { states: Vec::new(), actions: Vec::new(), rewards: Vec::new(), final_state: s, terminated: false };
    for _ in 0..horizon {
        if mdp.is_absorbing(s) {
            ep.terminated = true;
            break;
        }
        let a = policy.sample(s, rng);
        let next = sample_index(mdp.transitions.slice(ndarray::s![s, a, ..]).iter().copied(), rng);
        ep.states.push(s);
        ep.actions.push(a);
        ep.rewards.push(mdp.rewards[[s, a]]);
        s = next;
    }
    if mdp.is_absorbing(s) {
        ep.terminated = true;
    }
    ep.final_state = s;
    ep
}

/// Seeded rollout exported as a feature trajectory.
pub fn rollout(mdp: &TabularMetricMdp, policy: &Policy, horizon: usize, seed: u64) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(GwilError::Config("horizon must be at least 1".into()));
    }
    mdp.check_policy(policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rollout_episode(mdp, policy, horizon, &mut rng).to_trajectory(mdp)
}
