//! Exact isometry search between finite metric spaces.
//!
//! Backtracking assigns atoms of `x` one at a time and prunes any partial map
//! that distorts a distance by more than `tol`. Candidates are pre-filtered by
//! sorted distance profiles. The search is capped at `9!` visited nodes; past
//! that the GW value of the supports decides.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gw::{solve_gw, SolveOptions, MAX_EXHAUSTIVE_ATOMS};
use crate::mmspace::MetricMeasureSpace;

pub const SEARCH_BUDGET: usize = 362_880;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsometryMethod {
    BruteForce,
    GwProxy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryCheck {
    pub isometric: bool,
    /// `witness[i]` is the atom of `y` matched to atom `i` of `x`.
    pub witness: Option<Vec<usize>>,
    pub method: IsometryMethod,
}

fn profile(d: &ndarray::Array2<f64>, i: usize) -> Vec<f64> {
    let mut row = d.row(i).to_vec();
    row.sort_by(f64::total_cmp);
    row
}

fn profiles_match(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

struct Search<'a> {
    dx: &'a ndarray::Array2<f64>,
    dy: &'a ndarray::Array2<f64>,
    candidates: Vec<Vec<usize>>,
    order: Vec<usize>,
    assign: Vec<usize>,
    used: Vec<bool>,
    tol: f64,
    visited: usize,
}

enum Outcome {
    Found,
    Exhausted,
    OverBudget,
}

impl Search<'_> {
    fn run(&mut self, depth: usize) -> Outcome {
        if depth == self.order.len() {
            return Outcome::Found;
        }
        let i = self.order[depth];
        for k in 0..self.candidates[i].len() {
            let j = self.candidates[i][k];
            if self.used[j] {
                continue;
            }
            self.visited += 1;
            if self.visited > SEARCH_BUDGET {
                return Outcome::OverBudget;
            }
            let consistent = self.order[..depth]
                .iter()
                .all(|&p| (self.dx[[i, p]] - self.dy[[j, self.assign[p]]]).abs() <= self.tol);
            if !consistent {
                continue;
            }
            self.assign[i] = j;
            self.used[j] = true;
            match self.run(depth + 1) {
                Outcome::Exhausted => {}
                done => return done,
            }
            self.used[j] = false;
        }
        Outcome::Exhausted
    }
}

/// Looks for a bijection between the supports of `x` and `y` preserving every distance within `tol`.
///
/// Masses only define the supports (atoms with positive mass).
pub fn is_isometric(x: &MetricMeasureSpace, y: &MetricMeasureSpace, tol: f64) -> Result<IsometryCheck> {
    let sx: Vec<usize> = (0..x.len()).filter(|&i| x.mass()[i] > 0.0).collect();
    let sy: Vec<usize> = (0..y.len()).filter(|&j| y.mass()[j] > 0.0).collect();
    let not_found = IsometryCheck { isometric: false, witness: None, method: IsometryMethod::BruteForce };
    if sx.len() != sy.len() {
        return Ok(not_found);
    }
    let dx = x.dist().select(ndarray::Axis(0), &sx).select(ndarray::Axis(1), &sx);
    let dy = y.dist().select(ndarray::Axis(0), &sy).select(ndarray::Axis(1), &sy);
    let n = sx.len();

    let px: Vec<Vec<f64>> = (0..n).map(|i| profile(&dx, i)).collect();
    let py: Vec<Vec<f64>> = (0..n).map(|j| profile(&dy, j)).collect();
    let candidates: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| profiles_match(&px[i], &py[j], tol)).collect())
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return Ok(not_found);
    }
    // Most constrained atoms first.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (candidates[i].len(), i));

    let mut search = Search {
        dx: &dx,
        dy: &dy,
        candidates,
        order,
        assign: vec![usize::MAX; n],
        used: vec![false; n],
        tol,
        visited: 0,
    };
    match search.run(0) {
        Outcome::Found => {
            let witness = (0..n)
                .map(|i| sy[search.assign[i]])
                .collect::<Vec<_>>();
            // Re-express over the full index set of x: atom sx[i] -> witness[i].
            let mut full = vec![usize::MAX; x.len()];
            for (i, &xi) in sx.iter().enumerate() {
                full[xi] = witness[i];
            }
            Ok(IsometryCheck { isometric: true, witness: Some(full), method: IsometryMethod::BruteForce })
        }
        Outcome::Exhausted => Ok(not_found),
        Outcome::OverBudget => {
            let opts = if n <= MAX_EXHAUSTIVE_ATOMS {
                SolveOptions::default().exhaustive()
            } else {
                SolveOptions::default().with_restarts(50)
            };
            let r = solve_gw(x, y, &opts)?;
            Ok(IsometryCheck { isometric: r.gw_sq <= tol, witness: None, method: IsometryMethod::GwProxy })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn planar(points: &[[f64; 2]]) -> MetricMeasureSpace {
        let n = points.len();
        let d = Array2::from_shape_fn((n, n), |(i, j)| {
            ((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt()
        });
        MetricMeasureSpace::from_distance_matrix(d, Array1::from_elem(n, 1.0 / n as f64)).unwrap()
    }

    #[test]
    fn self_is_isometric_with_identity() {
        let x = planar(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0]]);
        let r = is_isometric(&x, &x, 1e-9).unwrap();
        assert!(r.isometric);
        assert_eq!(r.witness, Some(vec![0, 1, 2, 3]));
    }

    #[test]
    fn rotation_by_quarter_turn() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 1.0], [2.5, -1.0]];
        let rotated: Vec<[f64; 2]> = pts.iter().rev().map(|p| [-p[1], p[0]]).collect();
        let r = is_isometric(&planar(&pts), &planar(&rotated), 1e-9).unwrap();
        assert!(r.isometric);
        assert_eq!(r.witness, Some(vec![4, 3, 2, 1, 0]));
    }

    #[test]
    fn different_scales_are_not_isometric() {
        let a = MetricMeasureSpace::from_distance_matrix(array![[0.0, 1.0], [1.0, 0.0]], array![0.5, 0.5]).unwrap();
        let b = MetricMeasureSpace::from_distance_matrix(array![[0.0, 3.0], [3.0, 0.0]], array![0.5, 0.5]).unwrap();
        assert!(!is_isometric(&a, &b, 1e-6).unwrap().isometric);
    }

    #[test]
    fn support_size_mismatch() {
        let a = planar(&[[0.0, 0.0], [1.0, 0.0]]);
        let b = planar(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!(!is_isometric(&a, &b, 1e-6).unwrap().isometric);
    }

    #[test]
    fn zero_mass_atoms_are_outside_the_support() {
        let a = MetricMeasureSpace::from_distance_matrix(
            array![[0.0, 1.0, 5.0], [1.0, 0.0, 5.0], [5.0, 5.0, 0.0]],
            array![0.5, 0.5, 0.0],
        )
        .unwrap();
        let b = MetricMeasureSpace::from_distance_matrix(array![[0.0, 1.0], [1.0, 0.0]], array![0.3, 0.7]).unwrap();
        let r = is_isometric(&a, &b, 1e-9).unwrap();
        assert!(r.isometric);
        assert_eq!(r.witness.unwrap()[..2], [0, 1]);
    }

    #[test]
    fn hexagon_vs_two_triangles() {
        // every atom has two neighbours at distance 1 in both, but the profiles differ beyond that
        let hex = Array2::from_shape_fn((6, 6), |(i, j)| {
            let k = (i as i64 - j as i64).rem_euclid(6).min((j as i64 - i as i64).rem_euclid(6));
            k as f64
        });
        let tri = Array2::from_shape_fn((6, 6), |(i, j)| {
            if i == j {
                0.0
            } else if i / 3 == j / 3 {
                1.0
            } else {
                2.0
            }
        });
        let u = Array1::from_elem(6, 1.0 / 6.0);
        let a = MetricMeasureSpace::from_distance_matrix(hex, u.clone()).unwrap();
        let b = MetricMeasureSpace::from_distance_matrix(tri, u).unwrap();
        assert!(!is_isometric(&a, &b, 1e-9).unwrap().isometric);
    }
}
