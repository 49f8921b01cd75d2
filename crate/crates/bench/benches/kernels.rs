//! Timings for the numerical kernels: spectral calculus, structure and
//! curvature assembly, the flat-connection recursion, and star products.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use dqlab_core::fedosov::{build_fedosov, moyal_star};
use dqlab_core::fields::{random_trig_field, Grid};
use dqlab_core::geometry::{
    flat_structure, hermitian_ricci, hermitian_scalar, make_structure, StructureKind,
};

fn bench_fields(c: &mut Criterion) {
    let grid = Grid::new(2, 32).unwrap();
    let f = random_trig_field(grid, 1, 2, false).unwrap();
    c.bench_function("fields/spectral_derivative_n32", |b| {
        b.iter(|| black_box(f.derivative(0).max_abs()))
    });
    let g = random_trig_field(grid, 2, 2, false).unwrap();
    c.bench_function("fields/pointwise_product_n32", |b| {
        b.iter(|| black_box(f.mul(&g).max_abs()))
    });
}

fn bench_geometry(c: &mut Criterion) {
    let grid = Grid::new(2, 32).unwrap();
    c.bench_function("geometry/kahler_structure_build_n32", |b| {
        b.iter(|| black_box(make_structure(StructureKind::Kahler2d, grid, 0.3, 0).unwrap().dim()))
    });
    let s = make_structure(StructureKind::Kahler2d, grid, 0.3, 0).unwrap();
    c.bench_function("geometry/hermitian_ricci_n32", |b| {
        b.iter(|| {
            let (rho, _) = hermitian_ricci(&s).unwrap();
            black_box(hermitian_scalar(&s, &rho).max_abs())
        })
    });
}

fn bench_fedosov(c: &mut Criterion) {
    let grid = Grid::new(2, 16).unwrap();
    let s = make_structure(StructureKind::Kahler2d, grid, 0.3, 0).unwrap();
    let mut group = c.benchmark_group("fedosov");
    group.sample_size(10);
    group.bench_function("recursion_cap6_n16", |b| {
        b.iter(|| black_box(build_fedosov(&s, 6).unwrap().degree_cap))
    });
    let fd = build_fedosov(&s, 6).unwrap();
    let f = random_trig_field(grid, 1, 2, false).unwrap();
    let g = random_trig_field(grid, 2, 2, false).unwrap();
    group.bench_function("star_nu2_cap6_n16", |b| {
        b.iter(|| black_box(fd.star(&f, &g, 2).unwrap().coeff_or_zero(2, &f).max_abs()))
    });
    let flat = flat_structure(grid).unwrap();
    group.bench_function("moyal_star_nu3_n16", |b| {
        b.iter(|| black_box(moyal_star(&flat.sympl, &f, &g, 3).unwrap().coeff_or_zero(3, &f).max_abs()))
    });
    group.finish();
}

criterion_group!(benches, bench_fields, bench_geometry, bench_fedosov);
criterion_main!(benches);
