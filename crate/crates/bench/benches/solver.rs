use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use chc_bench::Fixture;
use chc_core::velocity::stream_to_velocity;
use chc_core::NoiseModel;

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral");
    for n in [32, 64, 128] {
        let fx = Fixture::new(n, 1, NoiseModel::off());
        let sp = fx.solver.spectral();
        group.bench_with_input(BenchmarkId::new("round_trip", n), &fx.phi0, |b, f| {
            b.iter(|| sp.from_spectral(&sp.to_spectral(black_box(f))))
        });
        group.bench_with_input(BenchmarkId::new("gradient", n), &fx.phi0, |b, f| {
            b.iter(|| sp.gradient(black_box(f)))
        });
    }
    group.finish();
}

fn forward_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_step");
    for n in [32, 64, 128] {
        let fx = Fixture::new(n, 1, NoiseModel::conservative_multiplicative(vec![0.3, 0.2, 0.1]).unwrap());
        let u = stream_to_velocity(&fx.ctrl, 0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &fx, |b, fx| {
            b.iter(|| fx.solver.step(black_box(&fx.phi0), &u, fx.noise.row(0)).unwrap())
        });
    }
    group.finish();
}

fn trajectory(c: &mut Criterion) {
    let mut group = c.benchmark_group("trajectory_64x64_100_steps");
    group.sample_size(10);
    let fx = Fixture::new(64, 100, NoiseModel::off());
    group.bench_function("forward", |b| {
        b.iter(|| fx.solver.solve_states(&fx.phi0, &fx.ctrl, &fx.noise).unwrap())
    });
    let problem = fx.problem(1);
    group.bench_function("cost_and_gradient", |b| b.iter(|| problem.cost_and_gradient(&fx.ctrl).unwrap()));
    let capped = fx.problem(1).with_memory_cap(16);
    group.bench_function("cost_and_gradient_checkpointed", |b| {
        b.iter(|| capped.cost_and_gradient(&fx.ctrl).unwrap())
    });
    group.finish();
}

criterion_group!(benches, transforms, forward_step, trajectory);
criterion_main!(benches);
