use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use stiefel_ekf::ekf::{predict, update};
use stiefel_ekf::experiment::{resolve_eta, simulate_realization, single_seed, ExperimentConfig, Mode};
use stiefel_ekf::rng::rng_from_seed;
use stiefel_ekf::stiefel::{exp_map, random_tangent};
use stiefel_ekf::FilterConfig;

fn filter_config(st42: bool) -> (ExperimentConfig, FilterConfig) {
    let mut cfg = if st42 {
        ExperimentConfig::st42(Mode::SingleRun)
    } else {
        ExperimentConfig::s2(Mode::SingleRun)
    };
    cfg.eta.samples = 5_000;
    let eta = resolve_eta(&cfg).unwrap();
    let filter = FilterConfig::new(cfg.system_model().unwrap(), eta, cfg.filter.log_failure).unwrap();
    (cfg, filter)
}

fn steps(c: &mut Criterion) {
    let mut rng = rng_from_seed(4);
    for (st42, name) in [(false, "S2"), (true, "St(4,2)")] {
        let (_, filter) = filter_config(st42);
        let belief = filter.initial_belief().unwrap();
        let pred = predict(&belief, 0.05, &filter).unwrap();
        let z = exp_map(&random_tangent(&pred.mean, 0.1, &mut rng).unwrap());
        c.bench_function(&format!("predict/{name}"), |b| {
            b.iter(|| predict(black_box(&belief), 0.05, &filter).unwrap())
        });
        c.bench_function(&format!("update/{name}"), |b| {
            b.iter(|| update(black_box(&pred), black_box(&z), &filter).unwrap())
        });
    }
}

fn realization(c: &mut Criterion) {
    let mut group = c.benchmark_group("realization");
    group.sample_size(10);
    for (st42, name) in [(false, "S2"), (true, "St(4,2)")] {
        let (cfg, filter) = filter_config(st42);
        group.bench_function(name, |b| {
            b.iter(|| {
                simulate_realization(&filter, &cfg.simulation, cfg.model.noise_mode, single_seed(cfg.seed))
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, steps, realization);
criterion_main!(benches);
