//! Criterion evaluation: minus twice the log-likelihood in both
//! parameterizations, the profiled criterion driving the optimizer, and the
//! restricted criterion built on a contrast basis annihilating the fixed
//! effects.
//!
//! All values drop the additive constants that do not depend on the
//! parameters, so comparisons are meaningful within one criterion family
//! only.

use crate::error::{Error, Result};
use crate::model::{covariance, scaled_covariance, KappaParams, SigmaParams, VarCompModel};
use crate::numerics::{
    ensure_finite_vec, numerical_rank, orthonormal_basis, Matrix, SpdFactor, Tolerance, Vector,
};

fn check_y(model: &VarCompModel, y: &Vector) -> Result<()> {
    if y.nrows() != model.n() {
        return Err(Error::InvalidInput(format!(
            "observation length {} does not match n = {}",
            y.nrows(),
            model.n()
        )));
    }
    ensure_finite_vec("observation", y)
}

fn check_beta(model: &VarCompModel, beta: &Vector) -> Result<()> {
    if beta.nrows() != model.m() {
        return Err(Error::InvalidInput(format!(
            "beta length {} does not match m = {}",
            beta.nrows(),
            model.m()
        )));
    }
    Ok(())
}

/// Minus twice the log-likelihood in the original parameterization:
/// `ln|V(sigma^2)| + (y - X beta)' V^{-1} (y - X beta)`.
pub fn neg2_loglik(
    model: &VarCompModel,
    params: &SigmaParams,
    y: &Vector,
    tol: &Tolerance,
) -> Result<f64> {
    check_y(model, y)?;
    check_beta(model, params.beta())?;
    let v = covariance(model, params.sigma2())?;
    let factor = SpdFactor::new(&v, tol)?;
    let resid = y - model.x() * params.beta();
    let quad = resid.dot(&factor.solve_vec(&resid));
    Ok(factor.logdet() + quad)
}

/// Minus twice the log-likelihood in the scaled parameterization:
/// `n ln(kappa0) + ln|V~(kappa)| + (y - X beta)' V~^{-1} (y - X beta) / kappa0`.
pub fn neg2_loglik_kappa(
    model: &VarCompModel,
    params: &KappaParams,
    y: &Vector,
    tol: &Tolerance,
) -> Result<f64> {
    check_y(model, y)?;
    check_beta(model, params.beta())?;
    let vt = scaled_covariance(model, params.kappa())?;
    let factor = SpdFactor::new(&vt, tol)?;
    let resid = y - model.x() * params.beta();
    let quad = resid.dot(&factor.solve_vec(&resid));
    Ok(model.n() as f64 * params.kappa0().ln() + factor.logdet() + quad / params.kappa0())
}

fn gls_from_factor(model: &VarCompModel, factor: &SpdFactor, y: &Vector) -> Result<Vector> {
    let m = model.m();
    if m == 0 {
        return Ok(Vector::zeros(0));
    }
    let x = model.x();
    let solved_x = factor.solve_mat(x);
    let mut gram = x.transpose() * &solved_x;
    let gram_t = gram.transpose();
    gram = (gram + gram_t) * 0.5;
    let gram_factor = SpdFactor::new(&gram, &Tolerance::default()).map_err(|_| {
        Error::RankDeficient("generalized least squares normal equations are singular".into())
    })?;
    let rhs = solved_x.transpose() * y;
    Ok(gram_factor.solve_vec(&rhs))
}

/// Generalized least squares coefficients
/// `beta(kappa) = (X' V~^{-1} X)^{-1} X' V~^{-1} y` for fixed ratios.
///
/// Requires `X` to have full column rank; rank-deficient designs are handled
/// by the estimator through a full-rank reduction of the column space.
pub fn gls_beta(
    model: &VarCompModel,
    kappa: &[f64],
    y: &Vector,
    tol: &Tolerance,
) -> Result<Vector> {
    if !model.full_rank_x() {
        return Err(Error::RankDeficient(
            "X must have full column rank for generalized least squares".into(),
        ));
    }
    check_y(model, y)?;
    let vt = scaled_covariance(model, kappa)?;
    let factor = SpdFactor::new(&vt, tol)?;
    gls_from_factor(model, &factor, y)
}

/// One profiled evaluation: coefficients, profiled scale, and criterion value
/// share a single factorization of the scaled covariance.
pub(crate) struct ProfiledPoint {
    pub value: f64,
    pub scale: f64,
    pub beta: Vector,
}

pub(crate) fn profiled_point(
    model: &VarCompModel,
    kappa: &[f64],
    y: &Vector,
    tol: &Tolerance,
) -> Result<ProfiledPoint> {
    if !model.full_rank_x() {
        return Err(Error::RankDeficient(
            "X must have full column rank for the profiled criterion".into(),
        ));
    }
    check_y(model, y)?;
    let vt = scaled_covariance(model, kappa)?;
    let factor = SpdFactor::new(&vt, tol)?;
    let beta = gls_from_factor(model, &factor, y)?;
    let resid = y - model.x() * &beta;
    let quad = resid.dot(&factor.solve_vec(&resid));
    if quad <= tol.spd_tol * y.norm_squared() {
        return Err(Error::DegenerateFit(format!(
            "residual quadratic form {quad:.3e} is numerically zero; the observation sits in \
             the critical subspace at these ratios (consult the existence certificate)"
        )));
    }
    let n = model.n() as f64;
    let scale = quad / n;
    let value = n * scale.ln() + factor.logdet() + n;
    Ok(ProfiledPoint { value, scale, beta })
}

/// Gradient of the profiled criterion with respect to the ratios:
/// `d/d(kappa_i) = -n ||Z_i' u||^2 / q + tr(V~^{-1} Z_i Z_i')` with
/// `u = V~^{-1}(y - X beta(kappa))` and `q` the residual quadratic form (the
/// envelope theorem removes the `beta` dependence).
pub(crate) fn profiled_gradient(
    model: &VarCompModel,
    kappa: &[f64],
    y: &Vector,
    tol: &Tolerance,
) -> Result<Vec<f64>> {
    if !model.full_rank_x() {
        return Err(Error::RankDeficient(
            "X must have full column rank for the profiled criterion".into(),
        ));
    }
    check_y(model, y)?;
    let vt = scaled_covariance(model, kappa)?;
    let factor = SpdFactor::new(&vt, tol)?;
    let beta = gls_from_factor(model, &factor, y)?;
    let resid = y - model.x() * &beta;
    let u = factor.solve_vec(&resid);
    let quad = resid.dot(&u);
    if quad <= tol.spd_tol * y.norm_squared() {
        return Err(Error::DegenerateFit(format!(
            "residual quadratic form {quad:.3e} is numerically zero; the gradient of the \
             profiled criterion is undefined here"
        )));
    }
    let n = model.n() as f64;
    model
        .z_blocks()
        .iter()
        .map(|z| {
            let zu = z.transpose() * &u;
            let mut trace = 0.0;
            for j in 0..z.ncols() {
                let col = z.column(j).into_owned();
                trace += col.dot(&factor.solve_vec(&col));
            }
            Ok(-n * zu.norm_squared() / quad + trace)
        })
        .collect()
}

/// Profiled scale `kappa0(kappa) = q(kappa) / n`, where `q` is the residual
/// quadratic form at the generalized least squares coefficients.
///
/// Fails with a degenerate-fit error when the quadratic form is numerically
/// zero relative to `spd_tol`.
pub fn profile_kappa0(
    model: &VarCompModel,
    kappa: &[f64],
    y: &Vector,
    tol: &Tolerance,
) -> Result<f64> {
    Ok(profiled_point(model, kappa, y, tol)?.scale)
}

/// The criterion after profiling out both `beta` and the scale:
/// `n ln(kappa0(kappa)) + ln|V~(kappa)| + n`.
pub fn profiled_criterion(
    model: &VarCompModel,
    kappa: &[f64],
    y: &Vector,
    tol: &Tolerance,
) -> Result<f64> {
    Ok(profiled_point(model, kappa, y, tol)?.value)
}

/// A contrast basis `K` with `K'X = 0` and full column rank `n - m`.
#[derive(Debug, Clone)]
pub struct RemlBasis {
    k: Matrix,
    orthonormal: bool,
}

impl RemlBasis {
    /// The n by (n - m) contrast matrix.
    pub fn k(&self) -> &Matrix {
        &self.k
    }

    /// Whether the columns are orthonormal.
    pub fn orthonormal(&self) -> bool {
        self.orthonormal
    }

    /// Validates a caller-supplied contrast matrix against a design: `K` must
    /// have `n` rows, numerical rank `n - m`, and `K'X` must vanish.
    /// Non-orthonormal bases are accepted; orthonormality is recorded.
    pub fn from_matrix(k: Matrix, x: &Matrix, tol: &Tolerance) -> Result<Self> {
        let n = x.nrows();
        let m = x.ncols();
        if k.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "contrast matrix has {} rows but the design has {}",
                k.nrows(),
                n
            )));
        }
        crate::numerics::ensure_finite("contrast matrix", &k)?;
        if m > 0 && numerical_rank(x, tol)? < m {
            return Err(Error::RankDeficient(
                "the restricted criterion requires X with full column rank".into(),
            ));
        }
        if k.ncols() != n - m || numerical_rank(&k, tol)? != n - m {
            return Err(Error::InvalidInput(format!(
                "contrast matrix must have full column rank n - m = {}",
                n - m
            )));
        }
        let cross = k.transpose() * x;
        let scale = 1.0f64.max(k.amax() * x.amax() * n as f64);
        if m > 0 && cross.amax() > 1e-10 * scale {
            return Err(Error::InvalidInput(
                "contrast matrix does not annihilate the design: K'X != 0".into(),
            ));
        }
        let gram = k.transpose() * &k;
        let orthonormal = (gram - Matrix::identity(n - m, n - m)).amax() <= 1e-10;
        Ok(RemlBasis { k, orthonormal })
    }
}

/// Builds an orthonormal contrast basis spanning the orthogonal complement
/// of the column space of `X`.
///
/// Requires `X` to have full column rank (the restricted criterion is defined
/// under that assumption); the zero design with no columns yields the
/// identity-sized basis of the whole space.
pub fn reml_contrast_matrix(x: &Matrix, tol: &Tolerance) -> Result<RemlBasis> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidInput(
            "design matrix must have at least one row".into(),
        ));
    }
    crate::numerics::ensure_finite("design matrix", x)?;
    let m = x.ncols();
    if m > 0 && numerical_rank(x, tol)? < m {
        return Err(Error::RankDeficient(
            "the restricted criterion requires X with full column rank".into(),
        ));
    }
    if m >= n {
        return Err(Error::RankDeficient(format!(
            "no contrasts remain: X has {m} columns in dimension {n}"
        )));
    }
    let basis = orthonormal_basis(x, tol)?;
    let projector = Matrix::identity(n, n) - &basis * basis.transpose();
    let k = orthonormal_basis(&projector, tol)?;
    Ok(RemlBasis {
        k,
        orthonormal: true,
    })
}

/// The restricted criterion
/// `l_K(sigma^2) = ln|K'V(sigma^2)K| + y'K (K'V(sigma^2)K)^{-1} K'y`.
pub fn reml_criterion(
    model: &VarCompModel,
    sigma2: &[f64],
    y: &Vector,
    basis: &RemlBasis,
    tol: &Tolerance,
) -> Result<f64> {
    check_y(model, y)?;
    if basis.k.nrows() != model.n() {
        return Err(Error::InvalidInput(format!(
            "contrast matrix has {} rows but the model has n = {}",
            basis.k.nrows(),
            model.n()
        )));
    }
    let v = covariance(model, sigma2)?;
    let reduced = basis.k.transpose() * v * &basis.k;
    let factor = SpdFactor::new(&reduced, tol)?;
    let ky = basis.k.transpose() * y;
    let quad = ky.dot(&factor.solve_vec(&ky));
    Ok(factor.logdet() + quad)
}

/// Precomputed reduction of the restricted problem to the contrast
/// coordinates: `K'K`, the blocks `K'Z_i`, and `K'y`.
pub(crate) struct RemlReduction {
    kk: Matrix,
    kz: Vec<Matrix>,
    ky: Vector,
    nm: usize,
}

impl RemlReduction {
    pub(crate) fn new(
        model: &VarCompModel,
        y: &Vector,
        basis: &RemlBasis,
        tol: &Tolerance,
    ) -> Result<Self> {
        check_y(model, y)?;
        tol.validate()?;
        if !model.full_rank_x() {
            return Err(Error::RankDeficient(
                "the restricted criterion requires X with full column rank".into(),
            ));
        }
        if basis.k.nrows() != model.n() {
            return Err(Error::InvalidInput(format!(
                "contrast matrix has {} rows but the model has n = {}",
                basis.k.nrows(),
                model.n()
            )));
        }
        let kt = basis.k.transpose();
        Ok(RemlReduction {
            kk: &kt * &basis.k,
            kz: model.z_blocks().iter().map(|z| &kt * z).collect(),
            ky: &kt * y,
            nm: basis.k.ncols(),
        })
    }

    /// Profiled restricted criterion at ratio vector `gamma`
    /// (`sigma_i^2 = xi_0 gamma_i`): the scale minimizes analytically to
    /// `xi_0 = q~ / (n - m)`, giving
    /// `(n - m)(ln(xi_0) + 1) + ln|K'K + sum_i gamma_i (K'Z_i)(K'Z_i)'|`.
    /// Returns the value and the profiled scale.
    pub(crate) fn profiled_with_scale(&self, gamma: &[f64], tol: &Tolerance) -> Result<(f64, f64)> {
        if gamma.len() != self.kz.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} ratio components, got {}",
                self.kz.len(),
                gamma.len()
            )));
        }
        let mut middle = self.kk.clone();
        for (kz, &g) in self.kz.iter().zip(gamma) {
            if g != 0.0 {
                middle += kz * kz.transpose() * g;
            }
        }
        let factor = SpdFactor::new(&middle, tol)?;
        let quad = self.ky.dot(&factor.solve_vec(&self.ky));
        if quad <= tol.spd_tol * self.ky.norm_squared() {
            return Err(Error::DegenerateFit(format!(
                "restricted residual quadratic form {quad:.3e} is numerically zero; the \
                 transformed observation sits in the critical subspace (consult the \
                 existence certificate)"
            )));
        }
        let nm = self.nm as f64;
        let scale = quad / nm;
        Ok((nm * (scale.ln() + 1.0) + factor.logdet(), scale))
    }

    /// Gradient of the profiled restricted criterion:
    /// `d/d(gamma_i) = -(n-m) ||G_i' v||^2 / q~ + tr(M~^{-1} G_i G_i')` with
    /// `G_i = K'Z_i` and `v = M~^{-1} K'y`.
    pub(crate) fn profiled_gradient(&self, gamma: &[f64], tol: &Tolerance) -> Result<Vec<f64>> {
        if gamma.len() != self.kz.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} ratio components, got {}",
                self.kz.len(),
                gamma.len()
            )));
        }
        let mut middle = self.kk.clone();
        for (kz, &g) in self.kz.iter().zip(gamma) {
            if g != 0.0 {
                middle += kz * kz.transpose() * g;
            }
        }
        let factor = SpdFactor::new(&middle, tol)?;
        let v = factor.solve_vec(&self.ky);
        let quad = self.ky.dot(&v);
        if quad <= tol.spd_tol * self.ky.norm_squared() {
            return Err(Error::DegenerateFit(format!(
                "restricted residual quadratic form {quad:.3e} is numerically zero; the \
                 gradient of the profiled criterion is undefined here"
            )));
        }
        let nm = self.nm as f64;
        self.kz
            .iter()
            .map(|g_block| {
                let gv = g_block.transpose() * &v;
                let mut trace = 0.0;
                for j in 0..g_block.ncols() {
                    let col = g_block.column(j).into_owned();
                    trace += col.dot(&factor.solve_vec(&col));
                }
                Ok(-nm * gv.norm_squared() / quad + trace)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{model_e1, model_e2};
    use crate::model::{kappa_to_sigma, simulate};
    use approx::assert_abs_diff_eq;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    fn e1_params_sigma(sigma2: Vec<f64>) -> SigmaParams {
        SigmaParams::new(Vector::zeros(1), sigma2).unwrap()
    }

    #[test]
    fn neg2_loglik_identity_covariance() {
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let value = neg2_loglik(&model_e1(), &e1_params_sigma(vec![1.0, 0.0]), &y, &tol()).unwrap();
        assert_abs_diff_eq!(value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn neg2_loglik_matches_hand_diagonal_arithmetic() {
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let value = neg2_loglik(&model_e1(), &e1_params_sigma(vec![1.0, 2.0]), &y, &tol()).unwrap();
        assert_abs_diff_eq!(value, 3.0f64.ln() + 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn neg2_loglik_vanishes_at_zero_residual() {
        let model = model_e1();
        let params = SigmaParams::new(Vector::from_vec(vec![2.0]), vec![1.0, 0.0]).unwrap();
        let y = model.x() * params.beta();
        assert_abs_diff_eq!(
            neg2_loglik(&model, &params, &y, &tol()).unwrap(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn kappa_form_reduces_to_sigma_form_at_unit_scale() {
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let params = KappaParams::new(Vector::zeros(1), 1.0, vec![0.0]).unwrap();
        assert_abs_diff_eq!(
            neg2_loglik_kappa(&model_e1(), &params, &y, &tol()).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn kappa_form_matches_hand_arithmetic() {
        let y = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let params = KappaParams::new(Vector::zeros(1), 2.0, vec![0.0]).unwrap();
        assert_abs_diff_eq!(
            neg2_loglik_kappa(&model_e1(), &params, &y, &tol()).unwrap(),
            3.0 * 2.0f64.ln() + 0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn the_two_parameterizations_agree() {
        let model = model_e2();
        for seed in 0..50u64 {
            let sim = SigmaParams::new(Vector::from_vec(vec![1.0]), vec![1.0, 1.5]).unwrap();
            let y = simulate(&model, &sim, seed).unwrap();
            let s0 = 0.3 + (seed as f64 % 7.0) * 0.5;
            let s1 = (seed as f64 % 5.0) * 0.8;
            let beta = Vector::from_vec(vec![(seed as f64 % 3.0) - 1.0]);
            let sigma = SigmaParams::new(beta.clone(), vec![s0, s1]).unwrap();
            let kappa = KappaParams::new(beta, s0, vec![s1 / s0]).unwrap();
            let a = neg2_loglik(&model, &sigma, &y, &tol()).unwrap();
            let b = neg2_loglik_kappa(&model, &kappa, &y, &tol()).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn gls_reduces_to_ordinary_mean_at_zero_ratios() {
        let model = model_e1();
        let beta = gls_beta(
            &model,
            &[0.0],
            &Vector::from_vec(vec![1.0, 1.0, 1.0]),
            &tol(),
        )
        .unwrap();
        assert_abs_diff_eq!(beta[0], 1.0, epsilon = 1e-12);
        let beta = gls_beta(
            &model,
            &[0.0],
            &Vector::from_vec(vec![3.0, 0.0, 0.0]),
            &tol(),
        )
        .unwrap();
        assert_abs_diff_eq!(beta[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gls_matches_hand_weighted_mean() {
        let model = model_e1();
        let beta = gls_beta(
            &model,
            &[2.0],
            &Vector::from_vec(vec![3.0, 0.0, 0.0]),
            &tol(),
        )
        .unwrap();
        assert_abs_diff_eq!(beta[0], 3.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn profiled_scale_matches_hand_arithmetic() {
        let model = model_e1();
        let y = Vector::from_vec(vec![0.0, 1.0, -1.0]);
        let kappa0 = profile_kappa0(&model, &[0.0], &y, &tol()).unwrap();
        assert_abs_diff_eq!(kappa0, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn profiled_scale_rejects_zero_residual() {
        let model = model_e1();
        let y = Vector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            profile_kappa0(&model, &[0.0], &y, &tol()),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn profiled_scale_is_an_interior_minimizer() {
        let model = model_e1();
        let y = Vector::from_vec(vec![0.0, 1.0, -1.0]);
        let kappa0 = profile_kappa0(&model, &[0.0], &y, &tol()).unwrap();
        let at = |k0: f64| {
            let params = KappaParams::new(Vector::zeros(1), k0, vec![0.0]).unwrap();
            neg2_loglik_kappa(&model, &params, &y, &tol()).unwrap()
        };
        let center = at(kappa0);
        assert!(center <= at(0.9 * kappa0) + 1e-12);
        assert!(center <= at(1.1 * kappa0) + 1e-12);
    }

    #[test]
    fn profiled_criterion_composes_scale_and_determinant() {
        let model = model_e1();
        let y = Vector::from_vec(vec![0.0, 1.0, -1.0]);
        let value = profiled_criterion(&model, &[0.0], &y, &tol()).unwrap();
        assert_abs_diff_eq!(value, 3.0 * (2.0f64 / 3.0).ln() + 3.0, epsilon = 1e-12);
    }

    #[test]
    fn profiled_criterion_dominates_no_full_point() {
        let model = model_e2();
        let y = simulate(
            &model,
            &SigmaParams::new(Vector::from_vec(vec![1.0]), vec![1.0, 2.0]).unwrap(),
            11,
        )
        .unwrap();
        for kappa in [[0.0], [0.5], [3.0]] {
            let profiled = profiled_criterion(&model, &kappa, &y, &tol()).unwrap();
            for k0 in [0.2, 1.0, 4.0] {
                for b in [-1.0, 0.0, 2.0] {
                    let params =
                        KappaParams::new(Vector::from_vec(vec![b]), k0, kappa.to_vec()).unwrap();
                    let full = neg2_loglik_kappa(&model, &params, &y, &tol()).unwrap();
                    assert!(profiled <= full + 1e-9 * (1.0 + full.abs()));
                }
            }
        }
    }

    #[test]
    fn criterion_prefers_zero_ratio_for_orthogonal_observation() {
        let model = model_e1();
        let y = Vector::from_vec(vec![0.0, 1.0, -1.0]);
        let at_zero = profiled_criterion(&model, &[0.0], &y, &tol()).unwrap();
        let at_ten = profiled_criterion(&model, &[10.0], &y, &tol()).unwrap();
        assert!(at_zero <= at_ten);
    }

    #[test]
    fn contrast_basis_of_intercept_annihilates_it() {
        let x = Matrix::from_element(3, 1, 1.0);
        let basis = reml_contrast_matrix(&x, &tol()).unwrap();
        let k = basis.k();
        assert_eq!((k.nrows(), k.ncols()), (3, 2));
        assert!(basis.orthonormal());
        assert!((k.transpose() * k - Matrix::identity(2, 2)).amax() <= 1e-12);
        assert!((k.transpose() * x).amax() <= 1e-12);
    }

    #[test]
    fn contrast_basis_of_padded_identity_is_the_missing_axis() {
        let mut x = Matrix::zeros(3, 2);
        x[(0, 0)] = 1.0;
        x[(1, 1)] = 1.0;
        let basis = reml_contrast_matrix(&x, &tol()).unwrap();
        let k = basis.k();
        assert_eq!(k.ncols(), 1);
        assert_abs_diff_eq!(k[(2, 0)].abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn contrast_basis_rejects_rank_deficient_design() {
        let c = Vector::from_vec(vec![1.0, 1.0, 1.0]);
        let x = Matrix::from_columns(&[c.clone(), c]);
        assert!(matches!(
            reml_contrast_matrix(&x, &tol()),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn restricted_criterion_matches_hand_values() {
        let model = model_e1();
        let basis = reml_contrast_matrix(model.x(), &tol()).unwrap();
        let y = Vector::from_vec(vec![0.0, 1.0, -1.0]);
        let value = reml_criterion(&model, &[1.0, 0.0], &y, &basis, &tol()).unwrap();
        assert_abs_diff_eq!(value, 2.0, epsilon = 1e-12);
        let y = Vector::from_vec(vec![1.0, 1.0, 1.0]);
        let value = reml_criterion(&model, &[1.0, 0.0], &y, &basis, &tol()).unwrap();
        assert_abs_diff_eq!(value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn restricted_criterion_is_basis_invariant_up_to_a_constant() {
        let model = model_e2();
        let x = model.x();
        let k1 = reml_contrast_matrix(x, &tol()).unwrap();
        let nm = k1.k().ncols();
        let mix = Matrix::from_fn(nm, nm, |i, j| {
            if i == j {
                1.0
            } else {
                0.3 * (((i * nm + j) as f64) * 0.9).sin()
            }
        });
        let k2 = RemlBasis::from_matrix(k1.k() * &mix, x, &tol()).unwrap();
        assert!(!k2.orthonormal());
        let y = simulate(
            &model,
            &SigmaParams::new(Vector::from_vec(vec![1.0]), vec![1.0, 2.0]).unwrap(),
            3,
        )
        .unwrap();
        let mut offsets = Vec::new();
        for i in 0..100 {
            let s0 = 0.2 + 0.11 * i as f64;
            let s1 = (i as f64 * 0.37) % 4.0;
            let a = reml_criterion(&model, &[s0, s1], &y, &k1, &tol()).unwrap();
            let b = reml_criterion(&model, &[s0, s1], &y, &k2, &tol()).unwrap();
            offsets.push(a - b);
        }
        let spread = offsets.iter().cloned().fold(f64::MIN, f64::max)
            - offsets.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 1e-8, "offset spread {spread}");
    }

    #[test]
    fn profiled_restricted_value_matches_direct_minimum_over_the_scale() {
        let model = model_e2();
        let basis = reml_contrast_matrix(model.x(), &tol()).unwrap();
        let y = simulate(
            &model,
            &SigmaParams::new(Vector::from_vec(vec![1.0]), vec![1.0, 2.0]).unwrap(),
            5,
        )
        .unwrap();
        let reduction = RemlReduction::new(&model, &y, &basis, &tol()).unwrap();
        let gamma = [1.7];
        let (profiled, scale) = reduction.profiled_with_scale(&gamma, &tol()).unwrap();
        let sigma2 = kappa_to_sigma(scale, &gamma).unwrap();
        let direct = reml_criterion(&model, &sigma2, &y, &basis, &tol()).unwrap();
        assert_abs_diff_eq!(profiled, direct, epsilon = 1e-10);
        for factor in [0.9, 1.1] {
            let sigma2 = kappa_to_sigma(scale * factor, &gamma).unwrap();
            let other = reml_criterion(&model, &sigma2, &y, &basis, &tol()).unwrap();
            assert!(profiled <= other + 1e-12);
        }
    }

    #[test]
    fn profiled_gradient_matches_central_differences() {
        let model = model_e2();
        let y = Vector::from_vec(vec![2.0, 3.0, 4.0, 5.0, 9.0, 7.0]);
        for kappa in [[0.5], [2.0], [9.0]] {
            let grad = profiled_gradient(&model, &kappa, &y, &tol()).unwrap();
            let h = 1e-6 * (1.0 + kappa[0]);
            let plus = profiled_criterion(&model, &[kappa[0] + h], &y, &tol()).unwrap();
            let minus = profiled_criterion(&model, &[kappa[0] - h], &y, &tol()).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            assert_abs_diff_eq!(grad[0], fd, epsilon = 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn restricted_profiled_gradient_matches_central_differences() {
        let model = model_e2();
        let basis = reml_contrast_matrix(model.x(), &tol()).unwrap();
        let y = Vector::from_vec(vec![2.0, 3.0, 4.0, 5.0, 9.0, 7.0]);
        let reduction = RemlReduction::new(&model, &y, &basis, &tol()).unwrap();
        for gamma in [[0.5], [3.0], [11.0]] {
            let grad = reduction.profiled_gradient(&gamma, &tol()).unwrap();
            let h = 1e-6 * (1.0 + gamma[0]);
            let (plus, _) = reduction
                .profiled_with_scale(&[gamma[0] + h], &tol())
                .unwrap();
            let (minus, _) = reduction
                .profiled_with_scale(&[gamma[0] - h], &tol())
                .unwrap();
            let fd = (plus - minus) / (2.0 * h);
            assert_abs_diff_eq!(grad[0], fd, epsilon = 1e-5 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn profiled_gradient_vanishes_at_the_balanced_interior_minimizer() {
        // For the balanced layout the interior ML minimizer has the closed
        // form kappa = sigma_1^2 / sigma_0^2 = 14/3; the REML analogue is
        // 7.25. The analytic gradients must vanish there.
        let model = model_e2();
        let y = Vector::from_vec(vec![2.0, 3.0, 4.0, 5.0, 9.0, 7.0]);
        let grad = profiled_gradient(&model, &[14.0 / 3.0], &y, &tol()).unwrap();
        assert_abs_diff_eq!(grad[0], 0.0, epsilon = 1e-10);
        let basis = reml_contrast_matrix(model.x(), &tol()).unwrap();
        let reduction = RemlReduction::new(&model, &y, &basis, &tol()).unwrap();
        let grad = reduction.profiled_gradient(&[7.25], &tol()).unwrap();
        assert_abs_diff_eq!(grad[0], 0.0, epsilon = 1e-10);
    }
}
