use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gwil_bench::{line_cost, spiral};
use gwil_core::transport::solve_exact;
use gwil_core::{solve_gw, solve_gw_entropic, SolveOptions};
use ndarray::Array1;
use std::hint::black_box;

fn gw(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_gw");
    for n in [10, 30, 60] {
        let (x, y) = (spiral(n, 1.5), spiral(n, 2.5));
        let opts = SolveOptions::default().with_restarts(1);
        group.bench_with_input(BenchmarkId::new("conditional_gradient", n), &n, |b, _| {
            b.iter(|| solve_gw(black_box(&x), black_box(&y), &opts).unwrap())
        });
        // the mirror-descent solver needs many Sinkhorn passes; keep it to small sizes
        if n <= 30 {
            group.bench_with_input(BenchmarkId::new("entropic", n), &n, |b, _| {
                b.iter(|| solve_gw_entropic(black_box(&x), black_box(&y), 0.05, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_exact");
    for n in [20, 60, 120] {
        let a = Array1::from_elem(n, 1.0 / n as f64);
        let cost = line_cost(n, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_exact(black_box(&a), black_box(&a), black_box(&cost)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gw, transport);
criterion_main!(benches);
