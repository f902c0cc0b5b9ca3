use approx::assert_abs_diff_eq;
use gwil_core::transport::random_vertex;
use gwil_core::{
    gw_objective, occupancy_rewards, solve_gw, solve_gw_entropic, trajectory_rewards, Coupling, MetricMeasureSpace,
    SolveOptions,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space(pts: &[(f64, f64)], weights: &[f64]) -> MetricMeasureSpace {
    let n = pts.len();
    let dist = Array2::from_shape_fn((n, n), |(i, j)| (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1));
    let total: f64 = weights.iter().sum();
    let mass = weights.iter().map(|w| w / total).collect::<Array1<f64>>();
    MetricMeasureSpace::from_distance_matrix(dist, mass).unwrap()
}

fn cloud(max: usize) -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<f64>)> {
    (1..=max).prop_flat_map(|n| {
        (prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n), prop::collection::vec(0.1..1.0f64, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_output_is_feasible_and_nonnegative((px, wx) in cloud(7), (py, wy) in cloud(7), seed in 0u64..1000) {
        let (x, y) = (space(&px, &wx), space(&py, &wy));
        let r = solve_gw(&x, &y, &SolveOptions::default().with_seed(seed)).unwrap();
        prop_assert!(r.gw_sq >= 0.0);
        prop_assert!(r.coupling.check_marginals(x.mass(), y.mass()).is_ok());
        prop_assert!(r.coupling.plan().iter().all(|&v| v >= 0.0));
        let recomputed = gw_objective(&x, &y, &r.coupling).unwrap();
        prop_assert!((recomputed - r.gw_sq).abs() <= 1e-10 * recomputed.max(1.0));
    }

    #[test]
    fn solver_never_worse_than_product((px, wx) in cloud(6), (py, wy) in cloud(6)) {
        let (x, y) = (space(&px, &wx), space(&py, &wy));
        let r = solve_gw(&x, &y, &SolveOptions::default()).unwrap();
        let product = gw_objective(&x, &y, &Coupling::product(x.mass(), y.mass())).unwrap();
        prop_assert!(r.gw_sq <= product + 1e-12);
    }

    #[test]
    fn history_is_monotone((px, wx) in cloud(6), (py, wy) in cloud(6)) {
        let (x, y) = (space(&px, &wx), space(&py, &wy));
        let r = solve_gw(&x, &y, &SolveOptions::default().with_restarts(1)).unwrap();
        for pair in r.objective_history.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn occupancy_rewards_recover_objective((px, wx) in cloud(6), (py, wy) in cloud(6), seed in 0u64..1000) {
        let (x, y) = (space(&px, &wx), space(&py, &wy));
        let u = random_vertex(x.mass(), y.mass(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let r = occupancy_rewards(&x, &y, &u, y.mass()).unwrap();
        let weighted: f64 = r.iter().zip(y.mass()).map(|(r, w)| r * w).sum();
        let value = gw_objective(&x, &y, &u).unwrap();
        prop_assert!((weighted + value).abs() <= 1e-9);
        prop_assert!(r.iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn trajectory_rewards_mean_with_factor(px in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..8),
                                           py in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..8)) {
        let (x, y) = (space(&px, &vec![1.0; px.len()]), space(&py, &vec![1.0; py.len()]));
        let u = Coupling::product(x.mass(), y.mass());
        let r = trajectory_rewards(&x, &y, &u, true).unwrap();
        let mean = r.total() / r.rewards.len() as f64;
        prop_assert!((mean + r.gw_sq).abs() <= 1e-9);
    }
}

#[test]
fn identical_clouds_have_zero_distance() {
    let pts = [(0.0, 0.0), (1.0, 0.5), (-2.0, 1.0), (0.3, -1.7)];
    let x = space(&pts, &[0.1, 0.2, 0.3, 0.4]);
    let r = solve_gw(&x, &x, &SolveOptions::default().with_identity()).unwrap();
    assert_abs_diff_eq!(r.gw_sq, 0.0, epsilon = 1e-12);
}

#[test]
fn entropic_value_bounds_exact_from_above() {
    let x = space(&[(0.0, 0.0), (1.0, 0.0), (0.0, 2.0)], &[1.0, 1.0, 1.0]);
    let y = space(&[(0.0, 0.0), (3.0, 0.0), (0.0, 1.0), (1.0, 1.0)], &[1.0, 2.0, 1.0, 1.0]);
    let exact = solve_gw(&x, &y, &SolveOptions::default()).unwrap();
    let entropic = solve_gw_entropic(&x, &y, 0.05, &SolveOptions::default()).unwrap();
    assert!(entropic.coupling.check_marginals(x.mass(), y.mass()).is_ok());
    assert!(entropic.gw_sq >= exact.gw_sq - 1e-9);
}
