//! Compares the rayon-backed batch helpers against their sequential
//! counterparts on two representative workloads: existence certification for
//! a batch of observations, and profiled-criterion evaluation over a ratio
//! grid. Run with `--no-default-features` to measure the sequential fallback
//! under the same `map_collect` entry points.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use varcomp::batch::{
    ml_exists_many, ml_exists_many_seq, profiled_criterion_grid, profiled_criterion_grid_seq,
};
use varcomp::{build_model, Matrix, Tolerance, Vector};

fn bench_model() -> varcomp::VarCompModel {
    let groups = 12;
    let reps = 4;
    let n = groups * reps;
    let x = Matrix::from_element(n, 1, 1.0);
    let z = Matrix::from_fn(
        n,
        groups,
        |row, col| {
            if row / reps == col {
                1.0
            } else {
                0.0
            }
        },
    );
    build_model(x, vec![z], &Tolerance::default()).unwrap()
}

fn observations(n: usize, count: usize) -> Vec<Vector> {
    (0..count)
        .map(|i| Vector::from_fn(n, |row, _| (((i * 31 + row * 17) % 97) as f64 - 48.0) / 7.0))
        .collect()
}

fn certification(c: &mut Criterion) {
    let model = bench_model();
    let ys = observations(model.n(), 256);
    let tol = Tolerance::default();
    let mut group = c.benchmark_group("certify_256");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(ml_exists_many(&model, black_box(&ys), &tol)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(ml_exists_many_seq(&model, black_box(&ys), &tol)))
    });
    group.finish();
}

fn profiled_grid(c: &mut Criterion) {
    let model = bench_model();
    let y = observations(model.n(), 1).pop().unwrap();
    let grid: Vec<Vec<f64>> = (0..256).map(|i| vec![0.02 * i as f64]).collect();
    let tol = Tolerance::default();
    let mut group = c.benchmark_group("profiled_grid_256");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(profiled_criterion_grid(&model, black_box(&grid), &y, &tol)))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            black_box(profiled_criterion_grid_seq(
                &model,
                black_box(&grid),
                &y,
                &tol,
            ))
        })
    });
    group.finish();
}

criterion_group!(benches, certification, profiled_grid);
criterion_main!(benches);
