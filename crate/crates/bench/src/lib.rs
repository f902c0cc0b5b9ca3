//! Deterministic inputs shared by the benchmarks.

use gwil_core::MetricMeasureSpace;
use ndarray::{Array1, Array2};

/// `n` points on a spiral with uniform mass; distances are Euclidean.
pub fn spiral(n: usize, turns: f64) -> MetricMeasureSpace {
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let t = k as f64 / n as f64;
            let angle = t * turns * std::f64::consts::TAU;
            (t * angle.cos(), t * angle.sin())
        })
        .collect();
    let dist = Array2::from_shape_fn((n, n), |(i, j)| (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1));
    MetricMeasureSpace::from_distance_matrix(dist, Array1::from_elem(n, 1.0 / n as f64)).expect("valid spiral")
}

/// Squared distance between positions on two offset lines.
pub fn line_cost(n: usize, m: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, m), |(i, j)| {
        let d = i as f64 / n as f64 - j as f64 / m as f64 + 0.1;
        d * d
    })
}
