//! Shared corpus generators and independent oracles for the integration
//! suites. Everything here recomputes its answers from raw linear algebra
//! (`nalgebra` factorizations, explicit sums of squares) rather than through
//! the library's own reductions, so agreement is evidence and not tautology.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use varcomp::{build_model, Matrix, Tolerance, VarCompModel, Vector};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn gaussian_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| standard_normal(rng))
}

fn gaussian_vector(rng: &mut ChaCha12Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| standard_normal(rng))
}

/// One randomized test case: a model, an observation, and whether the
/// observation was constructed inside the critical subspace `M(X, Z)`.
pub struct Instance {
    pub model: VarCompModel,
    pub y: Vector,
    pub member: bool,
}

/// Random dense-Gaussian instance with `n` in `[3, 8]`, `r` in `[1, 3]`,
/// block widths in `[1, 3]`, and enough room left over that the orthogonal
/// complement of `M(X, Z)` is nontrivial. Member observations are exact
/// combinations of the design columns; non-members add complement noise of
/// at least five percent relative size.
pub fn gaussian_instance(rng: &mut ChaCha12Rng, member: bool) -> Instance {
    loop {
        let n = rng.random_range(3..=8usize);
        let r = rng.random_range(1..=3usize);
        let k: Vec<usize> = (0..r).map(|_| rng.random_range(1..=3usize)).collect();
        let m = rng.random_range(1..=2usize);
        let total: usize = k.iter().sum();
        if m + total > n - 1 {
            continue;
        }
        let x = gaussian_matrix(rng, n, m);
        let z_blocks: Vec<Matrix> = k.iter().map(|&ki| gaussian_matrix(rng, n, ki)).collect();
        let tol = Tolerance::default();
        let model = match build_model(x, z_blocks, &tol) {
            Ok(model) => model,
            Err(_) => continue,
        };
        if !model.full_rank_x() {
            continue;
        }
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let mut member_y = model.x() * gaussian_vector(rng, m) * scale;
        for z in model.z_blocks() {
            member_y += z * gaussian_vector(rng, z.ncols()) * scale;
        }
        if member_y.norm() < 1e-6 {
            continue;
        }
        let y = if member {
            member_y
        } else {
            let Some(noise) = complement_direction(rng, model.xz_combined()) else {
                continue;
            };
            let amplitude =
                0.05 * member_y.norm().max(1.0) * 10f64.powf(rng.random_range(0.0..2.0));
            member_y + noise * amplitude
        };
        return Instance { model, y, member };
    }
}

/// Unit vector in the orthogonal complement of the column space, or `None`
/// when the complement is trivial or the random draw degenerates.
pub fn complement_direction(rng: &mut ChaCha12Rng, span: &Matrix) -> Option<Vector> {
    let n = span.nrows();
    let svd = span.clone().svd(true, false);
    let u = svd.u.as_ref()?;
    let sigma_max = svd.singular_values.max();
    let w = gaussian_vector(rng, n);
    let mut perp = w;
    for j in 0..u.ncols() {
        if svd.singular_values[j] > 1e-10 * sigma_max {
            let col = u.column(j);
            let coeff = col.dot(&perp);
            perp -= col.into_owned() * coeff;
        }
    }
    let norm = perp.norm();
    if norm < 1e-6 {
        None
    } else {
        Some(perp / norm)
    }
}

/// Random nested-indicator instance: intercept-only `X`, nested grouping
/// blocks whose finest partition has every group nonempty and at most
/// `n - 2` groups. On this family the combined random-effect span contains
/// the intercept, the reduced blocks have eigenvalues of at least one, and
/// the equal-ratio witness ray descends strictly decade by decade.
pub fn indicator_instance(rng: &mut ChaCha12Rng, member: bool) -> Instance {
    loop {
        let n = rng.random_range(6..=12usize);
        let fine = rng.random_range(2..=4usize.min(n - 2));
        let mut assignment: Vec<usize> = (0..n)
            .map(|i| {
                if i < fine {
                    i
                } else {
                    rng.random_range(0..fine)
                }
            })
            .collect();
        for pair in assignment.iter_mut().skip(fine) {
            *pair = rng.random_range(0..fine);
        }
        let r = rng.random_range(1..=3usize);
        let mut z_blocks = Vec::with_capacity(r);
        for level in 0..r {
            if level + 1 == r {
                z_blocks.push(indicator(&assignment, fine));
            } else {
                let coarse = rng.random_range(1..=fine);
                let merge: Vec<usize> = (0..fine).map(|_| rng.random_range(0..coarse)).collect();
                let coarse_assignment: Vec<usize> = assignment.iter().map(|&g| merge[g]).collect();
                let used = 1 + *coarse_assignment.iter().max().unwrap();
                z_blocks.push(indicator(&coarse_assignment, used));
            }
        }
        let x = Matrix::from_element(n, 1, 1.0);
        let tol = Tolerance::default();
        let model = match build_model(x, z_blocks, &tol) {
            Ok(model) => model,
            Err(_) => continue,
        };
        let mut member_y = model.x() * gaussian_vector(rng, 1);
        for z in model.z_blocks() {
            member_y += z * gaussian_vector(rng, z.ncols());
        }
        if member_y.norm() < 1e-6 {
            continue;
        }
        let y = if member {
            member_y
        } else {
            let Some(noise) = complement_direction(rng, model.xz_combined()) else {
                continue;
            };
            let amplitude = 0.05 * member_y.norm().max(1.0);
            member_y + noise * amplitude
        };
        return Instance { model, y, member };
    }
}

fn indicator(assignment: &[usize], groups: usize) -> Matrix {
    let mut z = Matrix::zeros(assignment.len(), groups);
    for (row, &g) in assignment.iter().enumerate() {
        z[(row, g)] = 1.0;
    }
    z
}

/// Balanced one-way layout: intercept mean, one indicator block with `a`
/// groups of `b` replicates, observations ordered group by group.
pub fn balanced_anova_model(a: usize, b: usize) -> VarCompModel {
    let n = a * b;
    let assignment: Vec<usize> = (0..n).map(|i| i / b).collect();
    build_model(
        Matrix::from_element(n, 1, 1.0),
        vec![indicator(&assignment, a)],
        &Tolerance::default(),
    )
    .unwrap()
}

/// Random model for decomposition checks; `duplicate_column` forces one
/// block to carry an exactly repeated column so the block is rank deficient
/// internally.
pub fn random_decomp_model(
    rng: &mut ChaCha12Rng,
    r_min: usize,
    r_max: usize,
    duplicate_column: bool,
) -> VarCompModel {
    loop {
        let n = rng.random_range(4..=8usize);
        let r = rng.random_range(r_min..=r_max);
        let mut k: Vec<usize> = (0..r).map(|_| rng.random_range(1..=3usize)).collect();
        if duplicate_column && k.iter().all(|&ki| ki < 2) {
            k[0] = 2;
        }
        if k.iter().sum::<usize>() + 1 > n - 1 {
            continue;
        }
        let x = gaussian_matrix(rng, n, 1);
        let mut z_blocks: Vec<Matrix> = k.iter().map(|&ki| gaussian_matrix(rng, n, ki)).collect();
        if duplicate_column {
            let target = z_blocks
                .iter_mut()
                .find(|z| z.ncols() >= 2)
                .expect("at least one block has two columns");
            let first = target.column(0).into_owned();
            let last = target.ncols() - 1;
            target.set_column(last, &first);
        }
        if let Ok(model) = build_model(x, z_blocks, &Tolerance::default()) {
            return model;
        }
    }
}

/// Raw-SVD rank of a matrix with the fixed relative threshold `1e-10`.
pub fn svd_rank(matrix: &Matrix) -> usize {
    let sv = matrix.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

/// Membership oracle: `y` lies in the column space of `[X Z]` exactly when
/// appending it does not raise the rank.
pub fn rank_oracle_member(model: &VarCompModel, y: &Vector) -> bool {
    let xz = model.xz_combined();
    let mut augmented = Matrix::zeros(xz.nrows(), xz.ncols() + 1);
    augmented
        .view_mut((0, 0), (xz.nrows(), xz.ncols()))
        .copy_from(xz);
    augmented.set_column(xz.ncols(), y);
    svd_rank(xz) == svd_rank(&augmented)
}

/// Closed-form estimates for the balanced one-way layout with `a` groups of
/// `b` replicates, derived from the group sums of squares.
pub struct AnovaEstimates {
    pub ml: (f64, f64),
    pub reml: (f64, f64),
    pub ml_interior: bool,
    pub reml_interior: bool,
}

/// Sums-of-squares oracle for the balanced one-way layout. Observations are
/// ordered group by group. The maximum likelihood estimate is
/// `(MSE, (SSA/a - MSE)/b)` when `SSA/a > MSE` and `(SST/n, 0)` otherwise;
/// the restricted estimate replaces `SSA/a` by `MSA = SSA/(a-1)` and the
/// boundary scale by `SST/(n-1)`.
pub fn balanced_anova_oracle(a: usize, b: usize, y: &Vector) -> AnovaEstimates {
    let n = a * b;
    assert_eq!(y.nrows(), n, "observation length must be a*b");
    let grand = y.sum() / n as f64;
    let mut ssa = 0.0;
    let mut sse = 0.0;
    for g in 0..a {
        let slice = y.rows(g * b, b);
        let mean = slice.sum() / b as f64;
        ssa += b as f64 * (mean - grand) * (mean - grand);
        sse += slice.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let sst = ssa + sse;
    let mse = sse / (a * (b - 1)) as f64;
    let msa = ssa / (a - 1) as f64;
    let ml_interior = ssa / a as f64 > mse;
    let reml_interior = msa > mse;
    let ml = if ml_interior {
        (mse, (ssa / a as f64 - mse) / b as f64)
    } else {
        (sst / n as f64, 0.0)
    };
    let reml = if reml_interior {
        (mse, (msa - mse) / b as f64)
    } else {
        (sst / (n - 1) as f64, 0.0)
    };
    AnovaEstimates {
        ml,
        reml,
        ml_interior,
        reml_interior,
    }
}

/// Minus twice the profiled Gaussian log-likelihood, recomputed densely from
/// scratch: builds `V = s_0 I + sum_i s_i Z_i Z_i'`, solves the generalized
/// least squares system with `nalgebra` factorizations, and returns
/// `ln|V| + r' V^{-1} r`. Returns `None` when `V` fails to factor.
pub fn dense_ml_value(model: &VarCompModel, sigma2: &[f64], y: &Vector) -> Option<f64> {
    let n = model.n();
    let mut v = Matrix::identity(n, n) * sigma2[0];
    for (z, &s) in model.z_blocks().iter().zip(&sigma2[1..]) {
        v += z * z.transpose() * s;
    }
    let chol = nalgebra::linalg::Cholesky::new(v)?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let resid = if model.m() == 0 || model.x().amax() == 0.0 {
        y.clone()
    } else {
        let x = model.x();
        let vinv_x = chol.solve(x);
        let gram = x.transpose() * &vinv_x;
        let rhs = vinv_x.transpose() * y;
        let beta = gram.lu().solve(&rhs)?;
        y - x * beta
    };
    let quad = resid.dot(&chol.solve(&resid));
    Some(logdet + quad)
}

/// Two-dimensional grid search plus pattern-search polish for the maximum
/// likelihood variance components of a single-block model. The grid covers
/// seven decades around the sample variance including the `s_1 = 0` edge;
/// the polish shrinks multiplicative and additive steps until the estimate
/// is localized far below the comparison tolerance.
pub fn grid_polish_ml(model: &VarCompModel, y: &Vector) -> (f64, f64) {
    assert_eq!(model.r(), 1, "the brute-force oracle is two-dimensional");
    let n = model.n() as f64;
    let variance = (y.norm_squared() / n).max(1e-8);
    let decades = 60usize;
    let grid_point = |idx: usize| variance * 10f64.powf(-3.5 + 7.0 * idx as f64 / decades as f64);
    let mut best = (f64::INFINITY, variance, 0.0);
    for i in 0..=decades {
        let s0 = grid_point(i);
        for j in 0..=decades + 1 {
            let s1 = if j == 0 { 0.0 } else { grid_point(j - 1) };
            if let Some(value) = dense_ml_value(model, &[s0, s1], y) {
                if value < best.0 {
                    best = (value, s0, s1);
                }
            }
        }
    }
    let (mut value, mut s0, mut s1) = best;
    let mut step = 0.5f64;
    while step > 1e-10 {
        let mut improved = false;
        let candidates = [
            (s0 * (1.0 + step), s1),
            (s0 / (1.0 + step), s1),
            (s0, s1 * (1.0 + step)),
            (s0, s1 / (1.0 + step)),
            (s0, (s1 + step * variance).max(0.0)),
            (s0, (s1 - step * variance).max(0.0)),
            (s0, 0.0),
        ];
        for &(c0, c1) in &candidates {
            if c0 <= 0.0 || (c0, c1) == (s0, s1) {
                continue;
            }
            if let Some(candidate) = dense_ml_value(model, &[c0, c1], y) {
                if candidate < value {
                    value = candidate;
                    s0 = c0;
                    s1 = c1;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (s0, s1)
}

/// Relative difference with a floor in the denominator so boundary zeros
/// compare exactly.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Relative distance from `y` to the column space of `X`.
pub fn rel_distance_to_span(span: &Matrix, y: &Vector) -> f64 {
    let svd = span.clone().svd(true, false);
    let mut perp = y.clone();
    if let Some(u) = svd.u.as_ref() {
        let sigma_max = svd.singular_values.max();
        for j in 0..u.ncols() {
            if svd.singular_values[j] > 1e-10 * sigma_max {
                let col = u.column(j);
                let coeff = col.dot(&perp);
                perp -= col.into_owned() * coeff;
            }
        }
    }
    perp.norm() / y.norm().max(1e-300)
}
