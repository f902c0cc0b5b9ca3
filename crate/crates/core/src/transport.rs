//! Couplings and an exact solver for the linear transport problem.
//!
//! The solver is the transportation simplex (network simplex on the complete
//! bipartite graph): a spanning-tree basis of `n + m - 1` cells, potentials
//! from the tree, Dantzig pricing with lexicographic tie-breaking, and Bland's
//! rule once a run of degenerate pivots is detected. Basic flows are recomputed
//! from the marginals after every pivot so no drift accumulates.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GwilError, Result};
use crate::serde_nd;

/// Tolerance on coupling marginals.
pub const MARGINAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoupling", into = "RawCoupling")]
pub struct Coupling {
    plan: Array2<f64>,
    row_mass: Array1<f64>,
    col_mass: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCoupling {
    u: Vec<Vec<f64>>,
    row_mass: Vec<f64>,
    col_mass: Vec<f64>,
}

impl TryFrom<RawCoupling> for Coupling {
    type Error = GwilError;

    fn try_from(raw: RawCoupling) -> Result<Self> {
        let plan = serde_nd::from_rows(&raw.u).map_err(GwilError::Dimension)?;
        Coupling::new(plan, Array1::from(raw.row_mass), Array1::from(raw.col_mass))
    }
}

impl From<Coupling> for RawCoupling {
    fn from(c: Coupling) -> Self {
        RawCoupling { u: serde_nd::to_rows(&c.plan), row_mass: c.row_mass.to_vec(), col_mass: c.col_mass.to_vec() }
    }
}

impl Coupling {
    pub fn new(plan: Array2<f64>, row_mass: Array1<f64>, col_mass: Array1<f64>) -> Result<Self> {
        if plan.dim() != (row_mass.len(), col_mass.len()) {
            return Err(GwilError::Dimension(format!(
                "plan is {:?} but marginals have lengths {} and {}",
                plan.dim(),
                row_mass.len(),
                col_mass.len()
            )));
        }
        if plan.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(GwilError::Marginals("plan has negative or non-finite entries".into()));
        }
        let c = Self { plan, row_mass, col_mass };
        let err = c.marginal_error();
        if err > MARGINAL_TOL {
            return Err(GwilError::Marginals(format!("marginal error {err:e} exceeds {MARGINAL_TOL:e}")));
        }
        Ok(c)
    }

    /// The independent coupling `a ⊗ b`.
    pub fn product(a: &Array1<f64>, b: &Array1<f64>) -> Self {
        let plan = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j]);
        Self { plan, row_mass: a.clone(), col_mass: b.clone() }
    }

    /// Permutation coupling between uniform measures on `n` atoms: row `i` sends `1/n` to column `perm[i]`.
    pub fn from_permutation(perm: &[usize]) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(GwilError::NotBijective(format!("{perm:?} is not a permutation")));
            }
        }
        let w = 1.0 / n as f64;
        let mut plan = Array2::zeros((n, n));
        for (i, &j) in perm.iter().enumerate() {
            plan[[i, j]] = w;
        }
        let uniform = Array1::from_elem(n, w);
        Ok(Self { plan, row_mass: uniform.clone(), col_mass: uniform })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_permutation(&(0..n).collect::<Vec<_>>()).expect("identity is a permutation")
    }

    /// Builds a coupling from a plan whose marginals define the measures (no check).
    pub(crate) fn from_plan_unchecked(plan: Array2<f64>, row_mass: Array1<f64>, col_mass: Array1<f64>) -> Self {
        Self { plan, row_mass, col_mass }
    }

    pub fn plan(&self) -> &Array2<f64> {
        &self.plan
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }

    pub fn row_mass(&self) -> &Array1<f64> {
        &self.row_mass
    }

    pub fn col_mass(&self) -> &Array1<f64> {
        &self.col_mass
    }

    pub fn shape(&self) -> (usize, usize) {
        self.plan.dim()
    }

    pub fn transpose(&self) -> Self {
        Self {
            plan: self.plan.t().to_owned(),
            row_mass: self.col_mass.clone(),
            col_mass: self.row_mass.clone(),
        }
    }

    /// Max absolute deviation of the plan's row and column sums from the target marginals.
    pub fn marginal_error(&self) -> f64 {
        let rows = self.plan.sum_axis(ndarray::Axis(1));
        let cols = self.plan.sum_axis(ndarray::Axis(0));
        let r = rows.iter().zip(&self.row_mass).map(|(a, b)| (a - b).abs());
        let c = cols.iter().zip(&self.col_mass).map(|(a, b)| (a - b).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    /// Checks that the coupling's marginals match the given measures.
    pub fn check_marginals(&self, a: &Array1<f64>, b: &Array1<f64>) -> Result<()> {
        if self.plan.dim() != (a.len(), b.len()) {
            return Err(GwilError::Dimension(format!(
                "coupling is {:?}, spaces have {} and {} atoms",
                self.plan.dim(),
                a.len(),
                b.len()
            )));
        }
        let rows = self.plan.sum_axis(ndarray::Axis(1));
        let cols = self.plan.sum_axis(ndarray::Axis(0));
        let err = rows
            .iter()
            .zip(a)
            .chain(cols.iter().zip(b))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if err > MARGINAL_TOL {
            return Err(GwilError::Marginals(format!("marginal error {err:e} exceeds {MARGINAL_TOL:e}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub coupling: Coupling,
    pub cost: f64,
    pub pivots: usize,
}

/// Solves `min <cost, u>` over couplings of `a` and `b` exactly.
pub fn solve_exact(a: &Array1<f64>, b: &Array1<f64>, cost: &Array2<f64>) -> Result<TransportSolution> {
    let (n, m) = (a.len(), b.len());
    if cost.dim() != (n, m) {
        return Err(GwilError::Dimension(format!("cost is {:?}, marginals have lengths {n} and {m}", cost.dim())));
    }
    if n == 0 || m == 0 {
        return Err(GwilError::Dimension("empty marginal".into()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(GwilError::Dimension("non-finite cost".into()));
    }
    let mut basis = Basis::northwest(a, b);
    let scale = cost.iter().fold(1.0_f64, |s, c| s.max(c.abs()));
    let tol = 1e-12 * scale;
    let max_pivots = 50 * (n + m) * (n + m) + 1000;
    let mut degenerate_run = 0usize;
    let mut pivots = 0usize;

    loop {
        basis.compute_flows(a, b);
        basis.compute_potentials(cost);
        let bland = degenerate_run > 2 * (n + m);
        let Some((ei, ej)) = basis.entering(cost, tol, bland) else { break };
        if pivots >= max_pivots {
            return Err(GwilError::Config(format!("transport simplex exceeded {max_pivots} pivots")));
        }
        let theta = basis.pivot(ei, ej);
        pivots += 1;
        if theta <= 1e-15 {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }

    let mut plan = Array2::zeros((n, m));
    for (e, &(i, j)) in basis.cells.iter().enumerate() {
        plan[[i, j]] = basis.flow[e].max(0.0);
    }
    let cost_value = (&plan * cost).sum();
    Ok(TransportSolution {
        coupling: Coupling::from_plan_unchecked(plan, a.clone(), b.clone()),
        cost: cost_value,
        pivots,
    })
}

/// A random vertex of the transport polytope: the optimum for a random cost.
pub fn random_vertex<R: Rng + ?Sized>(a: &Array1<f64>, b: &Array1<f64>, rng: &mut R) -> Result<Coupling> {
    let cost = Array2::from_shape_fn((a.len(), b.len()), |_| rng.gen::<f64>());
    Ok(solve_exact(a, b, &cost)?.coupling)
}

/// Spanning-tree basis. Nodes `0..n` are rows, `n..n+m` are columns.
struct Basis {
    n: usize,
    m: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    /// Basis edge ids incident to each node.
    adj: Vec<Vec<usize>>,
    is_basic: Vec<bool>,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Basis {
    fn northwest(a: &Array1<f64>, b: &Array1<f64>) -> Self {
        let (n, m) = (a.len(), b.len());
        let mut cells = Vec::with_capacity(n + m - 1);
        let (mut i, mut j) = (0, 0);
        let (mut ra, mut rb) = (a[0], b[0]);
        loop {
            cells.push((i, j));
            if i == n - 1 && j == m - 1 {
                break;
            }
            let x = ra.min(rb);
            if (ra <= rb && i < n - 1) || j == m - 1 {
                rb -= x;
                i += 1;
                ra = a[i];
            } else {
                ra -= x;
                j += 1;
                rb = b[j];
            }
        }
        let mut basis = Self {
            n,
            m,
            flow: vec![0.0; cells.len()],
            adj: vec![Vec::new(); n + m],
            is_basic: vec![false; n * m],
            cells: Vec::new(),
            u: vec![0.0; n],
            v: vec![0.0; m],
        };
        for (e, &(i, j)) in cells.iter().enumerate() {
            basis.adj[i].push(e);
            basis.adj[n + j].push(e);
            basis.is_basic[i * m + j] = true;
        }
        basis.cells = cells;
        basis
    }

    fn other(&self, e: usize, node: usize) -> usize {
        let (i, j) = self.cells[e];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    /// Basic flows by repeatedly eliminating leaves of the tree.
    fn compute_flows(&mut self, a: &Array1<f64>, b: &Array1<f64>) {
        let total = self.n + self.m;
        let mut rem: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
        let mut deg: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        let mut used = vec![false; self.cells.len()];
        let mut stack: Vec<usize> = (0..total).rev().filter(|&k| deg[k] == 1).collect();
        while let Some(node) = stack.pop() {
            if deg[node] != 1 {
                continue;
            }
            let e = *self.adj[node].iter().find(|&&e| !used[e]).expect("leaf has an edge");
            used[e] = true;
            let f = rem[node];
            self.flow[e] = f;
            let other = self.other(e, node);
            rem[other] -= f;
            rem[node] = 0.0;
            deg[node] = 0;
            deg[other] -= 1;
            if deg[other] == 1 {
                stack.push(other);
            }
        }
    }

    fn compute_potentials(&mut self, cost: &Array2<f64>) {
        let total = self.n + self.m;
        let mut known = vec![false; total];
        let mut stack = vec![0usize];
        known[0] = true;
        self.u[0] = 0.0;
        while let Some(node) = stack.pop() {
            for &e in &self.adj[node] {
                let other = self.other(e, node);
                if known[other] {
                    continue;
                }
                let (i, j) = self.cells[e];
                if other < self.n {
                    self.u[i] = cost[[i, j]] - self.v[j];
                } else {
                    self.v[j] = cost[[i, j]] - self.u[i];
                }
                known[other] = true;
                stack.push(other);
            }
        }
    }

    fn entering(&self, cost: &Array2<f64>, tol: f64, bland: bool) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut best_rc = -tol;
        for i in 0..self.n {
            for j in 0..self.m {
                if self.is_basic[i * self.m + j] {
                    continue;
                }
                let rc = cost[[i, j]] - self.u[i] - self.v[j];
                if rc < best_rc {
                    if bland {
                        return Some((i, j));
                    }
                    best_rc = rc;
                    best = Some((i, j));
                }
            }
        }
        best
    }

    /// Tree path from row node `i` to column node `n + j`, as edge ids in order.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let total = self.n + self.m;
        let target = self.n + j;
        let mut parent_edge = vec![usize::MAX; total];
        let mut visited = vec![false; total];
        let mut stack = vec![i];
        visited[i] = true;
        while let Some(node) = stack.pop() {
            if node == target {
                break;
            }
            for &e in &self.adj[node] {
                let other = self.other(e, node);
                if !visited[other] {
                    visited[other] = true;
                    parent_edge[other] = e;
                    stack.push(other);
                }
            }
        }
        let mut edges = Vec::new();
        let mut node = target;
        while node != i {
            let e = parent_edge[node];
            edges.push(e);
            node = self.other(e, node);
        }
        edges.reverse();
        edges
    }

    /// Brings cell `(i, j)` into the basis; returns the step length.
    fn pivot(&mut self, i: usize, j: usize) -> f64 {
        let path = self.path(i, j);
        // Edges at even positions lose flow when (i, j) gains it.
        let leave = path
            .iter()
            .step_by(2)
            .copied()
            .min_by(|&x, &y| {
                self.flow[x]
                    .partial_cmp(&self.flow[y])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| self.cells[x].cmp(&self.cells[y]))
            })
            .expect("cycle has a decreasing edge");
        let theta = self.flow[leave].max(0.0);

        let (li, lj) = self.cells[leave];
        self.adj[li].retain(|&e| e != leave);
        self.adj[self.n + lj].retain(|&e| e != leave);
        self.is_basic[li * self.m + lj] = false;

        self.cells[leave] = (i, j);
        self.adj[i].push(leave);
        self.adj[self.n + j].push(leave);
        self.is_basic[i * self.m + j] = true;
        theta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use itertools::Itertools;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_by_one() {
        let s = solve_exact(&array![1.0], &array![1.0], &array![[2.5]]).unwrap();
        assert_eq!(s.cost, 2.5);
    }

    #[test]
    fn two_by_two_picks_cheaper_permutation() {
        let a = array![0.5, 0.5];
        let s = solve_exact(&a, &a, &array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(s.cost, 0.0);
        let s = solve_exact(&a, &a, &array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(s.cost, 0.0);
        assert_eq!(s.coupling.plan()[[0, 1]], 0.5);
    }

    #[test]
    fn matches_permutation_enumeration_on_uniform_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            for _ in 0..10 {
                let cost = Array2::from_shape_fn((n, n), |_| rng.gen::<f64>());
                let a = Array1::from_elem(n, 1.0 / n as f64);
                let s = solve_exact(&a, &a, &cost).unwrap();
                // Birkhoff: the optimum is attained at a permutation.
                let brute = (0..n)
                    .permutations(n)
                    .map(|p| p.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum::<f64>() / n as f64)
                    .fold(f64::INFINITY, f64::min);
                assert!((s.cost - brute).abs() <= 1e-12, "n={n}: {} vs {brute}", s.cost);
                assert!(s.coupling.marginal_error() <= 1e-12);
            }
        }
    }

    #[test]
    fn dual_certificate_on_rectangular_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, m) in &[(3, 7), (8, 40), (12, 5), (1, 9)] {
            let mut a = Array1::from_shape_fn(n, |_| rng.gen::<f64>() + 0.05);
            a /= a.sum();
            let mut b = Array1::from_shape_fn(m, |_| rng.gen::<f64>() + 0.05);
            b /= b.sum();
            let cost = Array2::from_shape_fn((n, m), |_| rng.gen::<f64>() * 10.0);
            let s = solve_exact(&a, &b, &cost).unwrap();
            assert!(s.coupling.marginal_error() <= 1e-12);
            assert!(s.coupling.plan().iter().all(|&x| x >= 0.0));
            // Every other vertex we can reach by random costs is no cheaper.
            for _ in 0..20 {
                let v = random_vertex(&a, &b, &mut rng).unwrap();
                assert!((v.plan() * &cost).sum() >= s.cost - 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_uniform_marginals() {
        // Equal marginals make the northwest basis highly degenerate.
        let a = Array1::from_elem(8, 1.0 / 8.0);
        let b = Array1::from_elem(16, 1.0 / 16.0);
        let cost = Array2::from_shape_fn((8, 16), |(i, j)| ((i as f64) - (j as f64) / 2.0).powi(2));
        let s = solve_exact(&a, &b, &cost).unwrap();
        // odd columns sit halfway between two rows: 8 * (1/16) * 0.25
        assert!((s.cost - 0.125).abs() <= 1e-12, "{}", s.cost);
        assert!(s.coupling.marginal_error() <= 1e-12);
    }

    #[test]
    fn coupling_validation() {
        assert!(Coupling::new(array![[0.5, 0.0], [0.0, 0.5]], array![0.5, 0.5], array![0.5, 0.5]).is_ok());
        assert!(Coupling::new(array![[0.5, 0.1], [0.0, 0.5]], array![0.5, 0.5], array![0.5, 0.5]).is_err());
        assert!(Coupling::new(array![[0.6, -0.1], [-0.1, 0.6]], array![0.5, 0.5], array![0.5, 0.5]).is_err());
        assert!(Coupling::from_permutation(&[0, 0]).is_err());
        let c = Coupling::from_permutation(&[1, 0]).unwrap();
        let back: Coupling = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
