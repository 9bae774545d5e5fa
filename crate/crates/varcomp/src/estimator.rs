//! Minimization of the profiled criteria over the closed orthant of variance
//! ratios.
//!
//! Both criteria reduce to a function of the `r` ratios alone: the scale and
//! (for ML) the fixed effects minimize in closed form at every ratio vector.
//! The remaining problem is low-dimensional, smooth on the open orthant, and
//! continuous up to the boundary, so a projected Nelder-Mead search with a
//! deterministic multistart covers interior and boundary minimizers alike.
//! Candidate vertices are clamped to the orthant before evaluation, and a
//! final pass snaps coordinates to zero whenever doing so does not increase
//! the criterion beyond the function tolerance, so boundary solutions are
//! reported exactly rather than as dust.
//!
//! Fitting refuses to run on a nonexistence certificate: the criterion is
//! unbounded below there and any reported minimizer would be an artifact of
//! the termination rule.

use crate::error::{Error, Result};
use crate::existence::{
    ml_exists, nonexistence_witness, reml_exists, reml_nonexistence_witness, ExistenceCertificate,
    Method,
};
use crate::likelihood::{
    gls_beta, profiled_gradient, profiled_point, reml_contrast_matrix, RemlBasis, RemlReduction,
};
use crate::model::{build_model, kappa_to_sigma, VarCompModel};
use crate::numerics::{orthonormal_basis, Tolerance, Vector};

/// Search controls for the ratio minimization.
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Iteration cap per start.
    pub max_iters: usize,
    /// Relative spread of simplex values at which a start is converged.
    pub f_tol: f64,
    /// Relative simplex diameter at which a start is converged.
    pub x_tol: f64,
    /// Number of starts; `None` selects the default `1 + 2r` (the origin plus
    /// one moment-matched start and one inflated start per component).
    pub starts: Option<usize>,
    /// Ratios at or below this value are reported as exact boundary zeros.
    pub boundary_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 2000,
            f_tol: 1e-9,
            x_tol: 1e-10,
            starts: None,
            boundary_tol: 1e-12,
        }
    }
}

impl FitOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be positive".into()));
        }
        for (name, value) in [("f_tol", self.f_tol), ("x_tol", self.x_tol)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        if !(self.boundary_tol.is_finite() && self.boundary_tol >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "boundary_tol must be finite and nonnegative, got {}",
                self.boundary_tol
            )));
        }
        if self.starts == Some(0) {
            return Err(Error::InvalidInput(
                "the number of starts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A fitted model: point estimates, the criterion value at the minimizer,
/// boundary classification, and the existence certificate the fit was gated
/// on.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Which criterion was minimized.
    pub method: Method,
    /// Fixed-effect estimate. For rank-deficient `X` this is the minimum-norm
    /// representative; the fitted mean is the well-defined quantity.
    pub beta_hat: Vector,
    /// `X beta_hat`, invariant under reparameterizations of the column space.
    pub fitted_mean: Vector,
    /// Variance components `(sigma_0^2, sigma_1^2, ..., sigma_r^2)`.
    pub sigma2_hat: Vec<f64>,
    /// Criterion value at the reported estimate.
    pub criterion_value: f64,
    /// One flag per variance component; `true` marks an estimate on the
    /// boundary `sigma_i^2 = 0`. The scale entry is always `false` (the
    /// criterion diverges as the scale collapses, so the minimizer has a
    /// positive scale).
    pub boundary_flags: Vec<bool>,
    /// The certificate that licensed the fit.
    pub certificate: ExistenceCertificate,
    /// Total Nelder-Mead iterations summed over all starts.
    pub iterations: usize,
    /// Whether the winning start met both tolerances before its iteration cap.
    pub converged: bool,
}

struct NmOutcome {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn clamp_orthant(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &q)| (p - q).abs())
        .fold(0.0, f64::max)
}

/// Nelder-Mead on the nonnegative orthant with reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2; every candidate is projected onto the orthant
/// before evaluation.
fn nelder_mead_nonneg<F>(mut f: F, x0: &[f64], opts: &FitOptions) -> Result<NmOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let d = x0.len();
    if d == 0 {
        let value = f(&[])?;
        return Ok(NmOutcome {
            x: Vec::new(),
            value,
            iterations: 0,
            converged: true,
        });
    }
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(clamp_orthant(x0));
    for i in 0..d {
        let mut vertex = simplex[0].clone();
        vertex[i] = if vertex[i] > 0.0 {
            1.5 * vertex[i]
        } else {
            0.1
        };
        simplex.push(vertex);
    }
    let mut values = Vec::with_capacity(d + 1);
    for vertex in &simplex {
        values.push(f(vertex)?);
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| linf_distance(v, &simplex[0]))
            .fold(0.0, f64::max);
        let best_scale = 1.0 + simplex[0].iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if spread <= opts.f_tol * (1.0 + values[0].abs()) && diameter <= opts.x_tol * best_scale {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for vertex in &simplex[..d] {
            for (c, &v) in centroid.iter_mut().zip(vertex) {
                *c += v / d as f64;
            }
        }
        let direction: Vec<f64> = centroid
            .iter()
            .zip(&simplex[d])
            .map(|(&c, &w)| c - w)
            .collect();
        let at = |step: f64| -> Vec<f64> {
            clamp_orthant(
                &centroid
                    .iter()
                    .zip(&direction)
                    .map(|(&c, &dir)| c + step * dir)
                    .collect::<Vec<f64>>(),
            )
        };

        let reflected = at(1.0);
        let f_reflected = f(&reflected)?;
        if f_reflected < values[0] {
            let expanded = at(2.0);
            let f_expanded = f(&expanded)?;
            if f_expanded < f_reflected {
                simplex[d] = expanded;
                values[d] = f_expanded;
            } else {
                simplex[d] = reflected;
                values[d] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[d - 1] {
            simplex[d] = reflected;
            values[d] = f_reflected;
            continue;
        }
        let (contracted, f_contracted) = if f_reflected < values[d] {
            let point = at(0.5);
            let value = f(&point)?;
            (point, value)
        } else {
            let point = at(-0.5);
            let value = f(&point)?;
            (point, value)
        };
        if f_contracted < values[d].min(f_reflected) {
            simplex[d] = contracted;
            values[d] = f_contracted;
            continue;
        }
        for i in 1..=d {
            let shrunk: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(&b, &v)| b + 0.5 * (v - b))
                .collect();
            simplex[i] = clamp_orthant(&shrunk);
            values[i] = f(&simplex[i])?;
        }
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .unwrap();
    Ok(NmOutcome {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
        converged,
    })
}

/// Deterministic start list: the origin, one moment-matched axis start per
/// component (`||Z_i' y||^2 / (k_i ||y||^2)`), and the same axes inflated
/// tenfold. Extra requested starts extend the list with uniform vectors on a
/// geometric grid; fewer truncate it.
fn resolve_starts(model: &VarCompModel, y: &Vector, count: usize) -> Vec<Vec<f64>> {
    let r = model.r();
    let y2 = y.norm_squared();
    let mut heuristics = Vec::with_capacity(r);
    for z in model.z_blocks() {
        let h = (z.transpose() * y).norm_squared() / (z.ncols() as f64 * y2);
        heuristics.push(if h.is_finite() && h > 0.0 { h } else { 1.0 });
    }
    let mut starts = vec![vec![0.0; r]];
    for inflation in [1.0, 10.0] {
        for i in 0..r {
            let mut start = vec![0.0; r];
            start[i] = inflation * heuristics[i];
            starts.push(start);
        }
    }
    starts.truncate(count);
    let mut power = -1i32;
    while starts.len() < count {
        starts.push(vec![10f64.powi(power); r]);
        power += 1;
    }
    starts
}

struct SearchOutcome {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn multistart<F>(mut objective: F, starts: &[Vec<f64>], opts: &FitOptions) -> Result<SearchOutcome>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut best: Option<NmOutcome> = None;
    let mut first_error: Option<Error> = None;
    let mut total_iterations = 0;
    for start in starts {
        match nelder_mead_nonneg(&mut objective, start, opts) {
            Ok(outcome) => {
                total_iterations += outcome.iterations;
                let better = best
                    .as_ref()
                    .is_none_or(|current| outcome.value < current.value);
                if better {
                    best = Some(outcome);
                }
            }
            Err(error) => {
                if first_error.is_none() {
                    first_error = Some(error);
                }
            }
        }
    }
    match best {
        Some(outcome) => Ok(SearchOutcome {
            x: outcome.x,
            iterations: total_iterations,
            converged: outcome.converged,
        }),
        None => Err(first_error.expect("at least one start is always attempted")),
    }
}

/// Zeroes dust coordinates outright, then accepts any single-coordinate snap
/// to zero that does not raise the criterion by more than the function
/// tolerance.
fn snap_to_boundary<F>(mut objective: F, x: Vec<f64>, opts: &FitOptions) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut current: Vec<f64> = x
        .iter()
        .map(|&v| if v <= opts.boundary_tol { 0.0 } else { v })
        .collect();
    let mut value = objective(&current)?;
    for i in 0..current.len() {
        if current[i] > 0.0 {
            let mut trial = current.clone();
            trial[i] = 0.0;
            if let Ok(trial_value) = objective(&trial) {
                if trial_value <= value + opts.f_tol * (1.0 + value.abs()) {
                    current = trial;
                    value = trial_value;
                }
            }
        }
    }
    Ok((current, value))
}

/// Damped Newton iteration on the analytic gradient over the interior
/// (positive) coordinates, with a finite-difference Jacobian of the
/// gradient. Function values alone cannot localize a smooth minimizer beyond
/// roughly the square root of the evaluation noise; solving the stationarity
/// system directly pushes the estimate to near machine precision, so
/// equivalent model representations (duplicated columns, different contrast
/// bases) report estimates that agree far inside the documented tolerances.
/// Each step is backtracked against the criterion; where the curvature is
/// indefinite and the Newton direction points uphill, a steepest-descent
/// step keeps the iteration moving until it reenters a convex basin. The
/// returned point is the last accepted iterate: near the minimizer the
/// criterion is flat to machine resolution, so the running minimum value
/// serves only as the acceptance reference while the gradient keeps
/// sharpening the position.
fn newton_refine<G, F>(mut gradient: G, mut objective: F, x: Vec<f64>) -> Vec<f64>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut active: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    if active.is_empty() {
        return x;
    }
    let mut best_value = match objective(&x) {
        Ok(v) => v,
        Err(_) => return x,
    };
    let mut current = x;
    for _ in 0..40 {
        if active.is_empty() {
            break;
        }
        let grad_full = match gradient(&current) {
            Ok(g) => g,
            Err(_) => break,
        };
        let a = active.len();
        let g = Vector::from_iterator(a, active.iter().map(|&i| grad_full[i]));
        let mut jac = crate::numerics::Matrix::zeros(a, a);
        let mut jacobian_ok = true;
        for (col, &k) in active.iter().enumerate() {
            let h = 1e-6 * (1.0 + current[k]);
            let mut perturbed = current.clone();
            perturbed[k] += h;
            match gradient(&perturbed) {
                Ok(gp) => {
                    for (row, &i) in active.iter().enumerate() {
                        jac[(row, col)] = (gp[i] - grad_full[i]) / h;
                    }
                }
                Err(_) => {
                    jacobian_ok = false;
                    break;
                }
            }
        }
        if !jacobian_ok {
            break;
        }
        let mut directions: Vec<Vector> = Vec::new();
        if let Some(step) = jac.lu().solve(&(-&g)) {
            directions.push(step);
        }
        directions.push(-&g);
        let scale = 1.0 + current.iter().fold(0.0f64, |acc, &v| acc.max(v));
        let mut accepted_norm = None;
        for delta in &directions {
            let step_norm = delta.amax();
            if step_norm <= 0.0 {
                continue;
            }
            let mut factor = if step_norm > 0.5 * scale {
                0.5 * scale / step_norm
            } else {
                1.0
            };
            for _ in 0..12 {
                let mut trial = current.clone();
                for (row, &i) in active.iter().enumerate() {
                    trial[i] = (trial[i] + factor * delta[row]).max(0.0);
                }
                match objective(&trial) {
                    Ok(value) if value <= best_value + 1e-9 * (1.0 + best_value.abs()) => {
                        current = trial;
                        best_value = best_value.min(value);
                        accepted_norm = Some(factor * step_norm);
                        break;
                    }
                    _ => factor *= 0.5,
                }
            }
            if accepted_norm.is_some() {
                break;
            }
        }
        let moved = match accepted_norm {
            Some(norm) => norm,
            None => break,
        };
        active.retain(|&i| current[i] > 0.0);
        if moved <= 1e-12 * scale {
            break;
        }
    }
    current
}

/// Complementarity check on the clamped coordinates: a coordinate sitting at
/// zero with a materially negative slope marks a feasible descent direction,
/// which happens when the criterion has a narrow interior dip just off the
/// boundary face that the simplex search stepped over. Such a coordinate is
/// reopened at the best point of a geometric ladder so a further Newton pass
/// can localize the stationary point. The slope threshold sits an order of
/// magnitude inside the documented boundary tolerance, so coordinates left
/// clamped still satisfy the reported optimality margin.
fn release_clamped<G, F>(
    gradient: &mut G,
    objective: &mut F,
    x: &[f64],
    value: f64,
) -> Result<Option<Vec<f64>>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let grad = gradient(x)?;
    let mut current = x.to_vec();
    let mut best_value = value;
    let mut released = false;
    let scale = 1.0 + x.iter().fold(0.0f64, |acc, &v| acc.max(v));
    for i in 0..current.len() {
        if current[i] != 0.0 || grad[i] >= -1e-6 {
            continue;
        }
        let mut best_step = None;
        for k in 0..=12 {
            let mut trial = current.clone();
            trial[i] = scale * 10f64.powi(-k);
            if let Ok(trial_value) = objective(&trial) {
                if trial_value < best_value - 1e-12 * (1.0 + best_value.abs()) {
                    best_value = trial_value;
                    best_step = Some(trial[i]);
                }
            }
        }
        if let Some(step) = best_step {
            current[i] = step;
            released = true;
        }
    }
    Ok(released.then_some(current))
}

/// Full refinement pipeline after the multistart search: snap to the
/// boundary face, sharpen the surviving interior coordinates with Newton on
/// the stationarity system, and reopen any clamped coordinate that still
/// admits descent into the interior. The pass budget bounds the
/// release/polish cycle; the returned point always comes from a completed
/// Newton and snap pass.
fn refine<G, F>(
    mut gradient: G,
    mut objective: F,
    x: Vec<f64>,
    opts: &FitOptions,
) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
    F: FnMut(&[f64]) -> Result<f64>,
{
    let (mut x, _) = snap_to_boundary(&mut objective, x, opts)?;
    let mut passes = x.len() + 1;
    loop {
        x = newton_refine(&mut gradient, &mut objective, x);
        let (snapped, value) = snap_to_boundary(&mut objective, x, opts)?;
        x = snapped;
        passes -= 1;
        if passes == 0 {
            return Ok(x);
        }
        match release_clamped(&mut gradient, &mut objective, &x, value)? {
            Some(released) => x = released,
            None => return Ok(x),
        }
    }
}

fn boundary_flags(ratios: &[f64], opts: &FitOptions) -> Vec<bool> {
    std::iter::once(false)
        .chain(ratios.iter().map(|&v| v <= opts.boundary_tol))
        .collect()
}

/// Maximum likelihood fit.
///
/// Gated on the existence certificate; on nonexistence the error carries the
/// certificate and, when one can be built, a witness ray. Rank-deficient `X`
/// is reduced to an orthonormal basis of its column space internally; the
/// reported coefficients are the minimum-norm representative and the fitted
/// mean is exact.
pub fn fit_ml(
    model: &VarCompModel,
    y: &Vector,
    opts: &FitOptions,
    tol: &Tolerance,
) -> Result<FitResult> {
    opts.validate()?;
    tol.validate()?;
    let certificate = ml_exists(model, y, tol)?;
    if !certificate.exists {
        let witness = nonexistence_witness(model, y, tol).ok().map(Box::new);
        return Err(Error::Nonexistence {
            certificate: Box::new(certificate),
            witness,
        });
    }
    let reduced;
    let work: &VarCompModel = if model.full_rank_x() {
        model
    } else {
        let x1 = orthonormal_basis(model.x(), tol)?;
        reduced = build_model(x1, model.z_blocks().to_vec(), tol)?;
        &reduced
    };
    let starts = resolve_starts(work, y, opts.starts.unwrap_or(1 + 2 * model.r()));
    let outcome = multistart(
        |kappa| profiled_point(work, kappa, y, tol).map(|p| p.value),
        &starts,
        opts,
    )?;
    let kappa = refine(
        |kappa| profiled_gradient(work, kappa, y, tol),
        |kappa| profiled_point(work, kappa, y, tol).map(|p| p.value),
        outcome.x,
        opts,
    )?;
    let point = profiled_point(work, &kappa, y, tol)?;
    let sigma2_hat = kappa_to_sigma(point.scale, &kappa)?;
    let (beta_hat, fitted_mean) = if model.full_rank_x() {
        let fitted = model.x() * &point.beta;
        (point.beta, fitted)
    } else {
        let fitted = work.x() * &point.beta;
        let beta = crate::numerics::min_norm_lstsq(model.x(), &fitted, tol)?;
        (beta, fitted)
    };
    Ok(FitResult {
        method: Method::Ml,
        beta_hat,
        fitted_mean,
        sigma2_hat,
        criterion_value: point.value,
        boundary_flags: boundary_flags(&kappa, opts),
        certificate,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

/// Restricted maximum likelihood fit with the default orthonormal contrast
/// basis.
pub fn fit_reml(
    model: &VarCompModel,
    y: &Vector,
    opts: &FitOptions,
    tol: &Tolerance,
) -> Result<FitResult> {
    let basis = reml_contrast_matrix(model.x(), tol)?;
    fit_reml_with_basis(model, y, &basis, opts, tol)
}

/// Restricted maximum likelihood fit against a caller-supplied contrast
/// basis. The minimizing variance components do not depend on the basis; the
/// reported criterion value is the literal restricted criterion of the
/// supplied basis.
pub fn fit_reml_with_basis(
    model: &VarCompModel,
    y: &Vector,
    basis: &RemlBasis,
    opts: &FitOptions,
    tol: &Tolerance,
) -> Result<FitResult> {
    opts.validate()?;
    tol.validate()?;
    let certificate = reml_exists(model, y, tol)?;
    if !certificate.exists {
        let witness = reml_nonexistence_witness(model, y, tol).ok().map(Box::new);
        return Err(Error::Nonexistence {
            certificate: Box::new(certificate),
            witness,
        });
    }
    let reduction = RemlReduction::new(model, y, basis, tol)?;
    let starts = resolve_starts(model, y, opts.starts.unwrap_or(1 + 2 * model.r()));
    let outcome = multistart(
        |gamma| reduction.profiled_with_scale(gamma, tol).map(|(v, _)| v),
        &starts,
        opts,
    )?;
    let gamma = refine(
        |gamma| reduction.profiled_gradient(gamma, tol),
        |gamma| reduction.profiled_with_scale(gamma, tol).map(|(v, _)| v),
        outcome.x,
        opts,
    )?;
    let (criterion_value, scale) = reduction.profiled_with_scale(&gamma, tol)?;
    let sigma2_hat = kappa_to_sigma(scale, &gamma)?;
    let beta_hat = gls_beta(model, &gamma, y, tol)?;
    let fitted_mean = model.x() * &beta_hat;
    Ok(FitResult {
        method: Method::Reml,
        beta_hat,
        fitted_mean,
        sigma2_hat,
        criterion_value,
        boundary_flags: boundary_flags(&gamma, opts),
        certificate,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}
