//! Data-parallel evaluation over collections of observations or parameter
//! grids.
//!
//! With the default `parallel` feature the mapping helpers fan out over a
//! rayon thread pool; without it they compile to plain sequential loops with
//! the same signatures. Each item is computed independently by the same code
//! path, so the parallel and sequential results are bitwise identical. The
//! explicitly sequential variants are always available for comparison and
//! benchmarking.

use crate::error::Result;
use crate::existence::{ml_exists, ExistenceCertificate};
use crate::likelihood::profiled_criterion;
use crate::model::VarCompModel;
use crate::numerics::{Tolerance, Vector};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every item, in parallel when the `parallel` feature is
/// enabled. Output order matches input order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Applies `f` to every item, in parallel when the `parallel` feature is
/// enabled. Output order matches input order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Sequential counterpart of [`map_collect`] with identical semantics,
/// regardless of feature flags.
pub fn map_collect_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

/// Certifies ML existence for a batch of observations against one model.
pub fn ml_exists_many(
    model: &VarCompModel,
    observations: &[Vector],
    tol: &Tolerance,
) -> Vec<Result<ExistenceCertificate>> {
    map_collect(observations, |y| ml_exists(model, y, tol))
}

/// Sequential counterpart of [`ml_exists_many`].
pub fn ml_exists_many_seq(
    model: &VarCompModel,
    observations: &[Vector],
    tol: &Tolerance,
) -> Vec<Result<ExistenceCertificate>> {
    map_collect_seq(observations, |y| ml_exists(model, y, tol))
}

/// Evaluates the profiled criterion over a grid of ratio vectors.
pub fn profiled_criterion_grid(
    model: &VarCompModel,
    grid: &[Vec<f64>],
    y: &Vector,
    tol: &Tolerance,
) -> Vec<Result<f64>> {
    map_collect(grid, |kappa| profiled_criterion(model, kappa, y, tol))
}

/// Sequential counterpart of [`profiled_criterion_grid`].
pub fn profiled_criterion_grid_seq(
    model: &VarCompModel,
    grid: &[Vec<f64>],
    y: &Vector,
    tol: &Tolerance,
) -> Vec<Result<f64>> {
    map_collect_seq(grid, |kappa| profiled_criterion(model, kappa, y, tol))
}
