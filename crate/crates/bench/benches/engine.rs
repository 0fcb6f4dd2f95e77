use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vawalk_core::engine::{evolve, tv_distance, tv_to_gaussian};
use vawalk_core::measure::make_pi_rho;
use vawalk_core::spectral::GaussianOnGroup;
use vawalk_core::{EngineConfig, FiniteMeasure, Matrix, Mode, Prob};

fn float_evolution(c: &mut Criterion) {
    let mut g = c.benchmark_group("evolve_float");
    g.sample_size(10);
    let cfg = EngineConfig::default();
    for (name, n) in [("Dinf:lsrw", 1000), ("Z:lazy", 1000), ("Tri:uniform6", 200)] {
        let mu = FiniteMeasure::builtin(name).unwrap();
        g.bench_with_input(BenchmarkId::new(name, n), &n, |b, &n| {
            b.iter(|| evolve(black_box(&mu), n, Mode::Float, cfg).unwrap())
        });
    }
    let pair = make_pi_rho(&FiniteMeasure::builtin("Dinf:lsrw").unwrap(), Prob::Float(0.2)).unwrap();
    g.bench_function("pi_rho Dinf:lsrw/200", |b| b.iter(|| evolve(black_box(&pair), 200, Mode::Float, cfg).unwrap()));
    g.finish();
}

fn exact_evolution(c: &mut Criterion) {
    let mu = FiniteMeasure::builtin("Dinf:ape").unwrap();
    c.bench_function("evolve_exact Dinf:ape/32", |b| {
        b.iter(|| evolve(black_box(&mu), 32, Mode::Exact, EngineConfig::default()).unwrap())
    });
}

fn distances(c: &mut Criterion) {
    let cfg = EngineConfig::default();
    let mu = FiniteMeasure::builtin("Dinf:lsrw").unwrap();
    let a = evolve(&mu, 1000, Mode::Float, cfg).unwrap();
    let b = evolve(&mu, 1001, Mode::Float, cfg).unwrap();
    c.bench_function("tv_distance Dinf:lsrw/1000", |bch| bch.iter(|| tv_distance(black_box(&a), black_box(&b)).unwrap()));
    let sigma = Matrix::from_rows(vec![vec![1.0 / 6.0]]).unwrap();
    let gauss = GaussianOnGroup::new(mu.spec().clone(), 1000, &sigma, &[0.0]).unwrap();
    c.bench_function("tv_to_gaussian Dinf:lsrw/1000", |bch| {
        bch.iter(|| tv_to_gaussian(black_box(&a), black_box(&gauss)).unwrap())
    });
}

criterion_group!(benches, float_evolution, exact_evolution, distances);
criterion_main!(benches);
