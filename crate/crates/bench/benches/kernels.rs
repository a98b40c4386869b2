use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mhr_bench::{network, parameters};
use mhr_core::analysis::{compute_constants, pairwise_gap};
use mhr_core::grid::{laplacian_neumann, Grid};
use mhr_core::model::full_rhs;
use mhr_core::{Scheme, Stepper};

fn grids() -> Vec<(&'static str, Grid)> {
    vec![
        ("1d-128", Grid::line(1.0, 128).unwrap()),
        ("1d-1024", Grid::line(1.0, 1024).unwrap()),
        ("2d-64x64", Grid::rect([1.0, 1.0], [64, 64]).unwrap()),
    ]
}

fn laplacian(c: &mut Criterion) {
    let mut group = c.benchmark_group("laplacian");
    for (name, g) in grids() {
        let f = network(&g, 2, 1).neurons[0].u.clone();
        group.bench_with_input(BenchmarkId::from_parameter(name), &f, |b, f| {
            b.iter(|| laplacian_neumann(black_box(f), &g).unwrap())
        });
    }
    group.finish();
}

fn rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("full_rhs");
    for (name, g) in grids() {
        let p = parameters(4);
        let net = network(&g, 4, 2);
        group.bench_with_input(BenchmarkId::from_parameter(name), &net, |b, net| {
            b.iter(|| full_rhs(black_box(net), &p, &g).unwrap())
        });
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    for (scheme, label) in [(Scheme::ImexBe, "step_imex"), (Scheme::ExplicitRk4, "step_rk4")] {
        let mut group = c.benchmark_group(label);
        for (name, g) in grids() {
            let p = parameters(4);
            let mut net = network(&g, 4, 3);
            let mut stepper = Stepper::new(&p, &g);
            let dt = match scheme {
                Scheme::ImexBe => 1e-3,
                Scheme::ExplicitRk4 => 0.5 * g.min_spacing().powi(2) / (2.0 * g.dim() as f64),
            };
            group.bench_function(name, |b| b.iter(|| stepper.step(scheme, black_box(&mut net), dt).unwrap()));
        }
        group.finish();
    }
}

fn analysis(c: &mut Criterion) {
    let p = parameters(2);
    c.bench_function("compute_constants", |b| b.iter(|| compute_constants(black_box(&p), 1.0, 1.0).unwrap()));
    let g = Grid::rect([1.0, 1.0], [64, 64]).unwrap();
    let net = network(&g, 2, 4);
    c.bench_function("pairwise_gap/2d-64x64", |b| b.iter(|| pairwise_gap(black_box(&net), &g, 0, 1).unwrap()));
}

criterion_group!(benches, laplacian, rhs, steps, analysis);
criterion_main!(benches);
