use std::time::Duration;

use aoi_core::sim::simulate;
use aoi_core::{
    build_kernel, evaluate_stationary, rvi_solve, DeterministicPolicy, Execution, ModelParams,
    RviConfig, SimConfig, SimPolicy,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn params() -> ModelParams {
    ModelParams::new(0.3, 0.3, 0.3).unwrap()
}

fn bench_rvi(c: &mut Criterion) {
    let kernel = build_kernel(&params()).unwrap();
    let mut group = c.benchmark_group("rvi");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(10));
    for (name, execution) in MODES {
        let cfg = RviConfig {
            execution,
            ..RviConfig::default().with_lambda(5.0)
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| rvi_solve(&kernel, &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_stationary(c: &mut Criterion) {
    let kernel = build_kernel(&params()).unwrap();
    let policy = rvi_solve(&kernel, &RviConfig::default().with_lambda(5.0))
        .unwrap()
        .policy;
    let mut group = c.benchmark_group("stationary");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(10));
    for (name, execution) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_stationary(&kernel, &policy, None, execution).unwrap())
        });
    }
    group.finish();
}

fn bench_simulation(c: &mut Criterion) {
    let params = params();
    let policy = DeterministicPolicy::from_fn(params.space(), |s| s.age >= 3);
    let mut group = c.benchmark_group("simulate");
    group
        .sample_size(10)
        .measurement_time(Duration::from_secs(10));
    for (name, execution) in MODES {
        let cfg = SimConfig {
            trials: 64,
            horizon: 10_000,
            execution,
            ..SimConfig::new(params)
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate(&SimPolicy::Deterministic(&policy), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_rvi, bench_stationary, bench_simulation);
criterion_main!(benches);
