use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use stiefel_ekf::linalg::matrix_exp;
use stiefel_ekf::rng::rng_from_seed;
use stiefel_ekf::stats::eta_monte_carlo;
use stiefel_ekf::stiefel::{exp_map, log_map, project, random_tangent};
use stiefel_ekf_bench::{gaussian, random_antisymmetric, random_point};

const SHAPES: [(usize, usize); 3] = [(3, 1), (4, 2), (8, 3)];

fn dense(c: &mut Criterion) {
    let mut rng = rng_from_seed(1);
    let mut group = c.benchmark_group("dense");
    for n in [3, 4, 8] {
        let a = random_antisymmetric(n, &mut rng) * 0.1;
        group.bench_with_input(BenchmarkId::new("matrix_exp", n), &a, |b, a| {
            b.iter(|| matrix_exp(black_box(a)).unwrap())
        });
    }
    for (n, k) in SHAPES {
        let x = gaussian(n, k, &mut rng);
        group.bench_with_input(BenchmarkId::new("project", format!("{n}x{k}")), &x, |b, x| {
            b.iter(|| project(black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn geodesics(c: &mut Criterion) {
    let mut rng = rng_from_seed(2);
    let mut group = c.benchmark_group("geodesics");
    for (n, k) in SHAPES {
        let x = random_point(n, k, &mut rng);
        let v = random_tangent(&x, 0.3, &mut rng).unwrap();
        let y = exp_map(&v);
        let label = format!("St({n},{k})");
        group.bench_function(BenchmarkId::new("exp", &label), |b| b.iter(|| exp_map(black_box(&v))));
        group.bench_function(BenchmarkId::new("log", &label), |b| {
            b.iter(|| log_map(black_box(&x), black_box(&y)).unwrap())
        });
    }
    group.finish();
}

fn eta(c: &mut Criterion) {
    let mut group = c.benchmark_group("eta_monte_carlo_1000");
    group.sample_size(20);
    for (n, k) in SHAPES {
        group.bench_function(format!("St({n},{k})"), |b| {
            let mut rng = rng_from_seed(3);
            b.iter(|| eta_monte_carlo(n, k, 0.2, 1_000, &mut rng).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dense, geodesics, eta);
criterion_main!(benches);
