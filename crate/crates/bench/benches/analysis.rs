use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use csq_bench::{block_matrix, dense_model};
use csq_core::branching::{self, TreeCaps};
use csq_core::sim::{self, SimConfig, SimPolicy};
use csq_core::lst;
use csq_core::model::spectral_radius;

fn spectral(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_radius");
    for k in [2, 8, 32, 128] {
        let m = block_matrix(k);
        group.bench_with_input(BenchmarkId::from_parameter(k), &m, |b, m| b.iter(|| spectral_radius(black_box(m))));
    }
    group.finish();
}

fn lst_grid(c: &mut Criterion) {
    let thetas = lst::geometric_grid(1e-3, 1e2, 32);
    let mut group = c.benchmark_group("lst_fixed_point");
    group.sample_size(10);
    for k in [2, 6] {
        let model = dense_model(k, 0.7);
        group.bench_with_input(BenchmarkId::from_parameter(k), &model, |b, m| {
            b.iter(|| lst::solve_fixed_point(m, &thetas, lst::DEFAULT_TOL, lst::DEFAULT_MAX_ITER))
        });
    }
    group.finish();
}

fn trees(c: &mut Criterion) {
    let model = dense_model(4, 0.8);
    c.bench_function("sample_trees/1000", |b| {
        b.iter(|| branching::sample_trees(&model, 0, TreeCaps::default(), 1000, black_box(7)))
    });
}

fn simulation(c: &mut Criterion) {
    let model = dense_model(4, 0.8);
    let mut group = c.benchmark_group("simulate_10k_busy_periods");
    group.sample_size(10);
    for (name, policy) in [
        ("fifo", SimPolicy::FifoHeadOfLine),
        ("preemptive", SimPolicy::PriorityPreemptiveResume(vec![3, 2, 1, 0])),
    ] {
        let mut cfg = SimConfig::new(11);
        cfg.policy = policy;
        cfg.busy_period_target = Some(10_000);
        group.bench_function(name, |b| b.iter(|| sim::run(&model, &cfg, None)));
    }
    group.finish();
}

criterion_group!(benches, spectral, lst_grid, trees, simulation);
criterion_main!(benches);
