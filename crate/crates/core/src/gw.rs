//! Squared-loss Gromov-Wasserstein between finite metric measure spaces.
//!
//! For the squared loss the objective at a plan `u` with row sums `r` and
//! column sums `c` factorizes as
//!
//! ```text
//! f(u) = rᵀ(Dx∘Dx)r + cᵀ(Dy∘Dy)c − 2⟨u, Dx·u·Dy⟩
//! ```
//!
//! which costs `O(n²m + nm²)` instead of the `O(n²m²)` quadruple sum. `f` is a
//! homogeneous quadratic, so its restriction to a Frank-Wolfe segment has
//! closed-form coefficients and the line search is exact.

use itertools::Itertools;
use ndarray::{Array1, Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GwilError, Result};
use crate::mmspace::MetricMeasureSpace;
use crate::transport::{self, Coupling};

/// Largest `n` for which all `n!` permutation starts may be requested.
pub const MAX_EXHAUSTIVE_ATOMS: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Product coupling plus `restarts - 1` seeded random vertices.
    pub restarts: usize,
    pub seed: u64,
    /// Start from every permutation coupling when both measures are uniform with `n = m <= 7`.
    pub exhaustive: bool,
    /// Also start from the identity coupling when `n = m` and both measures are uniform.
    pub include_identity: bool,
    /// Sinkhorn budget for the entropic solver.
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tol: f64,
    /// Caller-supplied starting couplings, tried before the generated ones.
    #[serde(skip)]
    pub initial: Vec<Coupling>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-9,
            restarts: 5,
            seed: 0,
            exhaustive: false,
            include_identity: false,
            sinkhorn_max_iters: 5000,
            sinkhorn_tol: 1e-11,
            initial: Vec::new(),
        }
    }
}

impl SolveOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn exhaustive(mut self) -> Self {
        self.exhaustive = true;
        self
    }

    pub fn with_identity(mut self) -> Self {
        self.include_identity = true;
        self
    }

    pub fn with_initial(mut self, initial: Vec<Coupling>) -> Self {
        self.initial = initial;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwSolveResult {
    pub coupling: Coupling,
    pub gw_sq: f64,
    pub objective_history: Vec<f64>,
    pub restarts_run: usize,
    pub converged: bool,
}

impl GwSolveResult {
    /// `iteration,objective` rows for the returned run.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("iteration,objective\n");
        for (k, f) in self.objective_history.iter().enumerate() {
            out.push_str(&format!("{k},{f}\n"));
        }
        out
    }
}

/// Precomputed pieces of the quadratic form for one pair of spaces.
#[derive(Debug, Clone)]
pub struct GwProblem<'a> {
    dx: &'a Array2<f64>,
    dy: &'a Array2<f64>,
    dx2: Array2<f64>,
    dy2: Array2<f64>,
}

impl<'a> GwProblem<'a> {
    pub fn new(dx: &'a Array2<f64>, dy: &'a Array2<f64>) -> Self {
        Self { dx, dy, dx2: dx.mapv(|d| d * d), dy2: dy.mapv(|d| d * d) }
    }

    /// Objective at an arbitrary plan; marginals are taken from the plan itself.
    pub fn objective(&self, plan: &Array2<f64>) -> f64 {
        let r = plan.sum_axis(ndarray::Axis(1));
        let c = plan.sum_axis(ndarray::Axis(0));
        let cross = self.dx.dot(plan).dot(self.dy);
        r.dot(&self.dx2.dot(&r)) + c.dot(&self.dy2.dot(&c)) - 2.0 * (plan * &cross).sum()
    }

    /// Entrywise partial derivatives of [`GwProblem::objective`].
    pub fn gradient(&self, plan: &Array2<f64>) -> Array2<f64> {
        let r = plan.sum_axis(ndarray::Axis(1));
        let c = plan.sum_axis(ndarray::Axis(0));
        let row_term = self.dx2.dot(&r);
        let col_term = self.dy2.dot(&c);
        let mut grad = self.dx.dot(plan).dot(self.dy);
        Zip::indexed(&mut grad).for_each(|(i, j), g| {
            *g = 2.0 * (row_term[i] + col_term[j] - 2.0 * *g);
        });
        grad
    }
}

fn check_coupling(x: &MetricMeasureSpace, y: &MetricMeasureSpace, u: &Coupling) -> Result<()> {
    u.check_marginals(x.mass(), y.mass())
}

pub fn gw_objective(x: &MetricMeasureSpace, y: &MetricMeasureSpace, u: &Coupling) -> Result<f64> {
    check_coupling(x, y, u)?;
    Ok(GwProblem::new(x.dist(), y.dist()).objective(u.plan()))
}

pub fn gw_gradient(x: &MetricMeasureSpace, y: &MetricMeasureSpace, u: &Coupling) -> Result<Array2<f64>> {
    check_coupling(x, y, u)?;
    Ok(GwProblem::new(x.dist(), y.dist()).gradient(u.plan()))
}

/// Starting couplings in the order they are tried.
fn restart_set(x: &MetricMeasureSpace, y: &MetricMeasureSpace, opts: &SolveOptions) -> Result<Vec<Coupling>> {
    let (n, m) = (x.len(), y.len());
    let mut starts: Vec<Coupling> = Vec::new();
    for c in &opts.initial {
        c.check_marginals(x.mass(), y.mass())?;
        starts.push(c.clone());
    }
    let uniform_square = n == m && x.is_uniform(1e-12) && y.is_uniform(1e-12);
    if opts.include_identity && uniform_square {
        starts.push(Coupling::identity(n));
    }
    if opts.exhaustive && uniform_square && n <= MAX_EXHAUSTIVE_ATOMS {
        for perm in (0..n).permutations(n) {
            starts.push(Coupling::from_permutation(&perm)?);
        }
        return Ok(starts);
    }
    if opts.restarts > 0 {
        starts.push(Coupling::product(x.mass(), y.mass()));
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 1..opts.restarts {
            starts.push(transport::random_vertex(x.mass(), y.mass(), &mut rng)?);
        }
    }
    if starts.is_empty() {
        starts.push(Coupling::product(x.mass(), y.mass()));
    }
    Ok(starts)
}

struct Run {
    plan: Array2<f64>,
    value: f64,
    history: Vec<f64>,
    converged: bool,
}

fn frank_wolfe(problem: &GwProblem<'_>, a: &Array1<f64>, b: &Array1<f64>, start: Array2<f64>, opts: &SolveOptions) -> Result<Run> {
    let mut plan = start;
    let mut value = problem.objective(&plan);
    let mut history = vec![value];
    let mut converged = false;

    for _ in 0..opts.max_iters {
        let grad = problem.gradient(&plan);
        let vertex = transport::solve_exact(a, b, &grad)?.coupling.into_plan();
        let direction = &vertex - &plan;
        // Linear coefficient is minus the Frank-Wolfe gap.
        let slope = (&grad * &direction).sum();
        let scale = value.abs().max(f64::MIN_POSITIVE);
        if slope >= -opts.rel_tol * scale || value <= 0.0 {
            converged = true;
            break;
        }
        let curvature = problem.objective(&direction);
        let step = if curvature > 0.0 { (-slope / (2.0 * curvature)).min(1.0) } else { 1.0 };
        plan.zip_mut_with(&vertex, |p, &v| *p = (1.0 - step) * *p + step * v);
        let next = problem.objective(&plan);
        history.push(next);
        let decrease = value - next;
        value = next;
        if decrease <= opts.rel_tol * scale {
            converged = true;
            break;
        }
    }
    Ok(Run { plan, value, history, converged })
}

fn best_of(runs: impl IntoIterator<Item = Result<Run>>) -> Result<(Run, usize)> {
    let mut best: Option<Run> = None;
    let mut count = 0;
    for run in runs {
        let run = run?;
        count += 1;
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }
    Ok((best.expect("restart set is never empty"), count))
}

/// Conditional-gradient GW solve with restarts. Returns the best local minimum found.
pub fn solve_gw(x: &MetricMeasureSpace, y: &MetricMeasureSpace, opts: &SolveOptions) -> Result<GwSolveResult> {
    let problem = GwProblem::new(x.dist(), y.dist());
    let starts = restart_set(x, y, opts)?;
    let (best, count) = best_of(
        starts
            .into_iter()
            .map(|s| frank_wolfe(&problem, x.mass(), y.mass(), s.into_plan(), opts)),
    )?;
    Ok(GwSolveResult {
        coupling: Coupling::from_plan_unchecked(best.plan, x.mass().clone(), y.mass().clone()),
        gw_sq: best.value.max(0.0),
        objective_history: best.history,
        restarts_run: count,
        converged: best.converged,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Projects `exp(log_kernel)` onto the couplings of `a` and `b` in the log domain.
fn sinkhorn_log(log_kernel: &Array2<f64>, a: &Array1<f64>, b: &Array1<f64>, max_iters: usize, tol: f64) -> (Array2<f64>, bool) {
    let (n, m) = log_kernel.dim();
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut converged = false;
    for _ in 0..max_iters {
        for i in 0..n {
            let row = log_kernel.row(i);
            f[i] = if a[i] > 0.0 { log_a[i] - log_sum_exp(row.iter().zip(&g).map(|(k, gj)| k + gj)) } else { f64::NEG_INFINITY };
        }
        for j in 0..m {
            let col = log_kernel.column(j);
            g[j] = if b[j] > 0.0 { log_b[j] - log_sum_exp(col.iter().zip(&f).map(|(k, fi)| k + fi)) } else { f64::NEG_INFINITY };
        }
        let row_err = (0..n)
            .map(|i| {
                let s: f64 = (0..m).map(|j| (log_kernel[[i, j]] + f[i] + g[j]).exp()).sum();
                (s - a[i]).abs()
            })
            .fold(0.0, f64::max);
        if row_err <= tol {
            converged = true;
            break;
        }
    }
    let plan = Array2::from_shape_fn((n, m), |(i, j)| {
        let v = log_kernel[[i, j]] + f[i] + g[j];
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    });
    (plan, converged)
}

/// Entropic mirror descent: `u ← Sinkhorn(u ⊙ exp(−∇f(u)/ε))` until a fixed point.
///
/// `gw_sq` is the unregularized objective at the returned coupling. Restarts
/// are the product coupling plus seeded random interior couplings.
pub fn solve_gw_entropic(x: &MetricMeasureSpace, y: &MetricMeasureSpace, epsilon: f64, opts: &SolveOptions) -> Result<GwSolveResult> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(GwilError::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let problem = GwProblem::new(x.dist(), y.dist());
    let (a, b) = (x.mass(), y.mass());
    let mut starts: Vec<Array2<f64>> = opts.initial.iter().map(|c| c.plan().clone()).collect();
    starts.push(Coupling::product(a, b).into_plan());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 1..opts.restarts.max(1) {
        let log_k = Array2::from_shape_fn((a.len(), b.len()), |_| rng.gen_range(-1.0..1.0));
        starts.push(sinkhorn_log(&log_k, a, b, opts.sinkhorn_max_iters, opts.sinkhorn_tol).0);
    }

    let runs = starts.into_iter().map(|mut plan| {
        let mut history = vec![problem.objective(&plan)];
        let mut converged = false;
        for _ in 0..opts.max_iters {
            let grad = problem.gradient(&plan);
            let log_k = Array2::from_shape_fn(plan.dim(), |(i, j)| plan[[i, j]].ln() - grad[[i, j]] / epsilon);
            let (next, sinkhorn_ok) = sinkhorn_log(&log_k, a, b, opts.sinkhorn_max_iters, opts.sinkhorn_tol);
            let change = (&next - &plan).iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
            plan = next;
            history.push(problem.objective(&plan));
            if !sinkhorn_ok {
                break;
            }
            if change <= opts.rel_tol {
                converged = true;
                break;
            }
        }
        let value = problem.objective(&plan);
        Ok(Run { plan, value, history, converged })
    });
    let (best, count) = best_of(runs)?;
    Ok(GwSolveResult {
        coupling: Coupling::from_plan_unchecked(best.plan, a.clone(), b.clone()),
        gw_sq: best.value.max(0.0),
        objective_history: best.history,
        restarts_run: count,
        converged: best.converged,
    })
}

/// Exact linear optimal transport between the measures of `x` and `y` under `cost`.
pub fn wasserstein_sq(x: &MetricMeasureSpace, y: &MetricMeasureSpace, cost: &Array2<f64>) -> Result<(f64, Coupling)> {
    if cost.dim() != (x.len(), y.len()) {
        return Err(GwilError::Dimension(format!(
            "cost is {:?}, spaces have {} and {} atoms",
            cost.dim(),
            x.len(),
            y.len()
        )));
    }
    let sol = transport::solve_exact(x.mass(), y.mass(), cost)?;
    Ok((sol.cost, sol.coupling))
}

/// Squared Euclidean cross-cost between two sets of feature rows.
pub fn sq_euclidean_cost(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Array2<f64>> {
    let dx = xs.first().map_or(0, Vec::len);
    let dy = ys.first().map_or(0, Vec::len);
    if dx != dy || xs.iter().any(|r| r.len() != dx) || ys.iter().any(|r| r.len() != dy) {
        return Err(GwilError::Dimension(format!("feature dimensions differ: {dx} vs {dy}")));
    }
    Ok(Array2::from_shape_fn((xs.len(), ys.len()), |(i, j)| {
        xs[i].iter().zip(&ys[j]).map(|(a, b)| (a - b) * (a - b)).sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn naive(dx: &Array2<f64>, dy: &Array2<f64>, u: &Array2<f64>) -> f64 {
        let (n, m) = u.dim();
        let mut s = 0.0;
        for i in 0..n {
            for k in 0..n {
                for j in 0..m {
                    for l in 0..m {
                        s += (dx[[i, k]] - dy[[j, l]]).powi(2) * u[[i, j]] * u[[k, l]];
                    }
                }
            }
        }
        s
    }

    fn two_point(d: f64) -> MetricMeasureSpace {
        MetricMeasureSpace::from_distance_matrix(array![[0.0, d], [d, 0.0]], array![0.5, 0.5]).unwrap()
    }

    /// `[[t, ½−t], [½−t, t]]`
    fn family(t: f64) -> Coupling {
        Coupling::new(array![[t, 0.5 - t], [0.5 - t, t]], array![0.5, 0.5], array![0.5, 0.5]).unwrap()
    }

    #[test]
    fn identical_spaces_identity_coupling() {
        let x = two_point(1.0);
        assert_eq!(gw_objective(&x, &x, &Coupling::identity(2)).unwrap(), 0.0);
    }

    #[test]
    fn two_point_family_closed_form() {
        let (x, y) = (two_point(1.0), two_point(3.0));
        for &t in &[0.0, 0.1, 0.25, 0.4, 0.5] {
            let u = family(t);
            let closed = 2.0 + 24.0 * t * (0.5 - t);
            let fast = gw_objective(&x, &y, &u).unwrap();
            assert!((fast - closed).abs() < 1e-12, "t={t}: {fast} vs {closed}");
            assert!((naive(x.dist(), y.dist(), u.plan()) - closed).abs() < 1e-12);
        }
        // product coupling and the permutation vertices
        assert!((gw_objective(&x, &y, &family(0.25)).unwrap() - 3.5).abs() < 1e-12);
        assert!((gw_objective(&x, &y, &family(0.5)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_mismatch_is_an_error() {
        let x = two_point(1.0);
        let y = MetricMeasureSpace::from_distance_matrix(array![[0.0, 1.0], [1.0, 0.0]], array![0.9, 0.1]).unwrap();
        assert!(matches!(gw_objective(&x, &y, &Coupling::identity(2)), Err(GwilError::Marginals(_))));
        assert!(gw_gradient(&x, &y, &Coupling::identity(2)).is_err());
    }

    #[test]
    fn singleton_gradient_is_zero() {
        let x = MetricMeasureSpace::from_distance_matrix(array![[0.0]], array![1.0]).unwrap();
        let g = gw_gradient(&x, &x, &Coupling::identity(1)).unwrap();
        assert_eq!(g, array![[0.0]]);
    }

    #[test]
    fn solve_two_point() {
        let (x, y) = (two_point(1.0), two_point(3.0));
        let r = solve_gw(&x, &y, &SolveOptions::default()).unwrap();
        assert!((r.gw_sq - 2.0).abs() < 1e-9, "{}", r.gw_sq);
        let p = r.coupling.plan();
        assert!(p.iter().all(|&v| v.abs() < 1e-12 || (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn self_distance_with_identity_start() {
        let x = MetricMeasureSpace::from_distance_matrix(
            array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]],
            Array1::from_elem(3, 1.0 / 3.0),
        )
        .unwrap();
        let r = solve_gw(&x, &x, &SolveOptions::default().with_identity()).unwrap();
        assert!(r.gw_sq <= 1e-12);
    }

    #[test]
    fn history_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_space(&mut rng, 6);
            let y = random_space(&mut rng, 9);
            let r = solve_gw(&x, &y, &SolveOptions::default()).unwrap();
            for w in r.objective_history.windows(2) {
                assert!(w[1] - w[0] <= 1e-12);
            }
            assert!(r.coupling.marginal_error() <= 1e-8);
        }
    }

    fn random_space(rng: &mut ChaCha8Rng, n: usize) -> MetricMeasureSpace {
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.gen(), rng.gen()]).collect();
        let d = Array2::from_shape_fn((n, n), |(i, j)| {
            ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt()
        });
        MetricMeasureSpace::from_distance_matrix(d, Array1::from_elem(n, 1.0 / n as f64)).unwrap()
    }

    #[test]
    fn entropic_large_epsilon_stays_at_product() {
        let (x, y) = (two_point(1.0), two_point(3.0));
        let opts = SolveOptions::default().with_restarts(1);
        let r = solve_gw_entropic(&x, &y, 1e6, &opts).unwrap();
        let prod = Coupling::product(x.mass(), y.mass());
        let diff = (r.coupling.plan() - prod.plan()).iter().fold(0.0_f64, |a, d| a.max(d.abs()));
        assert!(diff <= 1e-6);
    }

    #[test]
    fn entropic_two_point_near_exact() {
        let (x, y) = (two_point(1.0), two_point(3.0));
        let r = solve_gw_entropic(&x, &y, 0.01, &SolveOptions::default()).unwrap();
        assert!((r.gw_sq - 2.0).abs() <= 0.05, "{}", r.gw_sq);
        assert!(r.coupling.marginal_error() <= 1e-8);
    }

    #[test]
    fn entropic_self_distance_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_space(&mut rng, 5);
        let r = solve_gw_entropic(&x, &x, 0.01, &SolveOptions::default()).unwrap();
        assert!(r.gw_sq <= 0.05 * x.max_distance().powi(2), "{}", r.gw_sq);
    }

    #[test]
    fn entropic_rejects_bad_epsilon() {
        let x = two_point(1.0);
        assert!(solve_gw_entropic(&x, &x, 0.0, &SolveOptions::default()).is_err());
    }

    #[test]
    fn wasserstein_examples() {
        let x = two_point(1.0);
        let cost = x.dist().mapv(|d| d * d);
        assert_eq!(wasserstein_sq(&x, &x, &cost).unwrap().0, 0.0);
        let one = MetricMeasureSpace::from_distance_matrix(array![[0.0]], array![1.0]).unwrap();
        assert_eq!(wasserstein_sq(&one, &one, &array![[4.0]]).unwrap().0, 4.0);
        // both permutation plans of [[0,1],[1,0]]: identity costs 0, swap costs 1
        let (v, plan) = wasserstein_sq(&x, &x, &array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(plan.plan()[[0, 0]], 0.5);
        assert!(wasserstein_sq(&x, &one, &array![[0.0, 1.0]]).is_err());
    }

    #[test]
    fn history_csv_format() {
        let x = two_point(1.0);
        let r = solve_gw(&x, &x, &SolveOptions::default().with_identity()).unwrap();
        assert!(r.history_csv().starts_with("iteration,objective\n0,0\n"));
    }
}
