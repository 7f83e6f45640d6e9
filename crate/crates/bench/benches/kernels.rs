//! Hot-path benchmarks: spectral differentiation, the divergence-form
//! operator, the stepper, the frequency trace, and the weight profile.
//! Sizes match the defaults the experiments actually run at.

use criterion::{criterion_group, criterion_main, Criterion};
use logcvx_core::localization::localization_grid;
use logcvx_core::operators::elliptic_apply;
use logcvx_core::{
    build_rho, evolve, Background, Section, SpectralKit, TorusGrid, TrajectoryPreset,
};

fn spectral_derivative(c: &mut Criterion) {
    let grid = TorusGrid::standard(1, 256).unwrap();
    let kit = SpectralKit::new(grid);
    let x = Section::scalar(grid, |p| (3.0 * p[0]).sin() + 0.5 * (7.0 * p[0]).cos());
    c.bench_function("deriv_plane_1d_n256", |b| {
        b.iter(|| kit.deriv_plane(x.plane(0), 0).unwrap())
    });
}

fn divergence_form_apply(c: &mut Criterion) {
    let grid = TorusGrid::standard(1, 64).unwrap();
    let kit = SpectralKit::new(grid);
    let bg = Background::preset("anisotropic-lambda", grid).unwrap();
    let x = Section::scalar(grid, |p| p[0].sin() + 0.3 * (2.0 * p[0]).cos());
    c.bench_function("elliptic_apply_anisotropic_n64", |b| {
        b.iter(|| elliptic_apply(&x, &bg, 0.0, &kit).unwrap())
    });
}

fn stepper(c: &mut Criterion) {
    let inst = TrajectoryPreset::by_name("heat-two-mode").unwrap().build().unwrap();
    let kit = SpectralKit::new(inst.system.bg.grid);
    c.bench_function("evolve_two_mode_200_steps", |b| {
        b.iter(|| evolve(&inst.system, &inst.x0, &inst.y0, 0.1, 200, &kit).unwrap())
    });
}

fn frequency_trace(c: &mut Criterion) {
    let inst = TrajectoryPreset::by_name("coupled-exchange").unwrap().build().unwrap();
    let kit = SpectralKit::new(inst.system.bg.grid);
    let traj = evolve(&inst.system, &inst.x0, &inst.y0, 0.1, 100, &kit).unwrap();
    c.bench_function("trace_coupled_100_samples", |b| {
        b.iter(|| traj.trace(1, &kit).unwrap())
    });
}

fn weight_profile(c: &mut Criterion) {
    let grid = localization_grid().unwrap();
    let kit = SpectralKit::new(grid);
    c.bench_function("build_rho_n1024", |b| {
        b.iter(|| build_rho(grid, [64.0, 0.0], 0.3, 0.4, &kit).unwrap())
    });
}

criterion_group!(
    kernels,
    spectral_derivative,
    divergence_form_apply,
    stepper,
    frequency_trace,
    weight_profile
);
criterion_main!(kernels);
