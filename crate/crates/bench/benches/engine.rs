use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fedsa_bench::regression_fixture;
use fedsa_core::engine::FederatedState;
use fedsa_core::experiment::{build_regression, run_regression};
use fedsa_core::ode;

fn round(c: &mut Criterion) {
    let cfg = regression_fixture(1, 0);
    let setup = build_regression(&cfg).unwrap();
    let mut state = FederatedState::new(
        setup.inits.clone(),
        setup.schedules.clone(),
        cfg.period,
        cfg.algorithm,
        cfg.seed,
    )
    .unwrap();
    state.aggregate().unwrap();
    c.bench_function("run_round L=10 N=5 m=50", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| s.run_round(&setup.clients, cfg.batch_size, None).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn full_run(c: &mut Criterion) {
    let cfg = regression_fixture(1, 2000);
    let mut g = c.benchmark_group("experiment");
    g.sample_size(10);
    g.bench_function("regression 2000 rounds", |b| {
        b.iter(|| run_regression::<Vec<u8>>(&cfg, None).unwrap())
    });
    g.finish();
}

fn tracking(c: &mut Criterion) {
    let cfg = regression_fixture(1, 600);
    let run = run_regression::<Vec<u8>>(&cfg, None).unwrap();
    let path = run.path().unwrap();
    let tasks = run.setup.tasks();
    let m = ode::horizon_rounds(&run.times, 100, 1.0);
    c.bench_function("tracking_error from round 100, T=1", |b| {
        b.iter(|| ode::tracking_error(&path, &run.setup.weights, &tasks, 100, m, ode::DEFAULT_H_MAX).unwrap())
    });
}

criterion_group!(benches, round, full_run, tracking);
criterion_main!(benches);
