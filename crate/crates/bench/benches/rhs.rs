use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use muskat_bench::{profile_1d, profile_2d};
use muskat_core::muskat1d::{rhs_periodic, Quadrature1DConfig};
use muskat_core::muskat2d::{rhs_2d_with_plan, Quadrature2DConfig, Rhs2DPlan};
use muskat_core::timestepping::{step_integrating_factor, Dynamics};
use muskat_core::muskat1d::Muskat1D;
use muskat_core::PhysParams;

fn rhs_1d(c: &mut Criterion) {
    let params = PhysParams::new(0.0, 1.0).unwrap();
    let cfg = Quadrature1DConfig::default();
    let mut group = c.benchmark_group("rhs_periodic");
    for n in [128, 256, 512] {
        let f = profile_1d(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| rhs_periodic(black_box(f), &params, &cfg).unwrap())
        });
    }
    group.finish();
}

fn if_step(c: &mut Criterion) {
    let dynamics = Muskat1D::new(PhysParams::new(0.0, 1.0).unwrap(), Quadrature1DConfig::default());
    let f = profile_1d(256);
    c.bench_function("integrating_factor_step_256", |b| {
        b.iter(|| step_integrating_factor(black_box(&f), |u| dynamics.remainder(u), 1.0, 1e-2).unwrap())
    });
}

fn rhs_2d(c: &mut Criterion) {
    let params = PhysParams::new(0.0, 1.0).unwrap();
    let mut group = c.benchmark_group("rhs_2d");
    group.sample_size(10);
    for n in [16, 32] {
        let f = profile_2d(n);
        let plan = Rhs2DPlan::new(*f.grid(), Quadrature2DConfig::default()).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| rhs_2d_with_plan(black_box(f), &params, &plan).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, rhs_1d, if_step, rhs_2d);
criterion_main!(benches);
