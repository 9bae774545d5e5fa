//! Existence certificates for the ML and REML estimates, the lower bound on
//! the scaled criterion, nonexistence witness rays, and divergence probes.
//!
//! The ML estimate exists exactly when the observation lies outside the
//! column space of `[X Z]`; the decision is made by projecting `y` onto the
//! orthogonal complement and comparing the residual norm against
//! `rel_rank_tol * ||y||`. The REML verdict uses the equivalent membership
//! test (`Ny` escapes `N span(Z)` precisely when `y` escapes `span
//! ([X Z])`); the literal one-sided condition `y not in N span(Z)` is
//! evaluated and reported alongside, never used for the verdict.
//!
//! When the estimate does not exist, a witness ray certifies unboundedness:
//! along `kappa = t (1, ..., 1)` with the scale profiled at the projected
//! observation, the criterion falls like `(q - n) ln t`. When it does exist,
//! divergence probes demonstrate growth to infinity along every escape
//! direction of the parameter space.

use crate::error::{Error, Result};
use crate::likelihood::{gls_beta, reml_contrast_matrix, RemlBasis};
use crate::model::{KappaParams, VarCompModel};
use crate::numerics::{
    ensure_finite_vec, logdet_spd, numerical_rank, orthonormal_basis, project_onto_complement,
    Matrix, Tolerance, Vector,
};
use crate::spectral::BlockForm;

/// Which estimate a certificate, ray, or probe refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ml,
    Reml,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ml => "ml",
            Method::Reml => "reml",
        })
    }
}

/// Verdict plus the numeric evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExistenceCertificate {
    /// Which estimate the verdict concerns.
    pub kind: Method,
    /// Whether the estimate exists.
    pub exists: bool,
    /// Norm of the projection of `y` onto the orthogonal complement of the
    /// critical subspace.
    pub residual_norm: f64,
    /// `residual_norm / ||y||`; zero for the zero observation. This is the
    /// margin users should inspect near the existence boundary.
    pub rel_residual: f64,
    /// Squared complement norm `s_{X,Z}` (ML verdicts only).
    pub s_xz: Option<f64>,
    /// Lower bound `n ln(s) - n ln(n) + n` on the scaled criterion, present
    /// when an ML estimate exists.
    pub lower_bound: Option<f64>,
    /// Tolerances the verdict was computed with.
    pub tol_used: Tolerance,
    /// Verdict of the literal one-sided condition `y not in N span(Z)`
    /// (REML verdicts only); reported for transparency, never decisive.
    pub literal_reml_condition: Option<bool>,
}

/// Squared norm of the projection of `y` onto the orthogonal complement of
/// `span([X Z])`; positive exactly when the ML estimate exists.
pub fn s_xz(model: &VarCompModel, y: &Vector, tol: &Tolerance) -> Result<f64> {
    let resid = project_onto_complement(y, model.xz_combined(), tol)?;
    Ok(resid.norm_squared())
}

fn membership_residual(model: &VarCompModel, y: &Vector, tol: &Tolerance) -> Result<(f64, f64)> {
    let resid = project_onto_complement(y, model.xz_combined(), tol)?;
    let norm = resid.norm();
    let y_norm = y.norm();
    let rel = if y_norm > 0.0 { norm / y_norm } else { 0.0 };
    Ok((norm, rel))
}

/// Certifies existence of the ML estimate: exists exactly when the residual
/// of `y` against `[X Z]` exceeds `rel_rank_tol * ||y||`. The zero
/// observation is classified as nonexistence (it belongs to every subspace).
pub fn ml_exists(
    model: &VarCompModel,
    y: &Vector,
    tol: &Tolerance,
) -> Result<ExistenceCertificate> {
    let (residual_norm, rel_residual) = membership_residual(model, y, tol)?;
    let exists = residual_norm > tol.rel_rank_tol * y.norm();
    let s = residual_norm * residual_norm;
    let n = model.n() as f64;
    Ok(ExistenceCertificate {
        kind: Method::Ml,
        exists,
        residual_norm,
        rel_residual,
        s_xz: Some(s),
        lower_bound: exists.then(|| n * s.ln() - n * n.ln() + n),
        tol_used: *tol,
        literal_reml_condition: None,
    })
}

/// Certifies existence of the REML estimate.
///
/// The decisive test is the membership test `y not in span([X Z])`, which is
/// equivalent to the transformed observation escaping the transformed
/// random-effect span. The literal one-sided condition `y not in N span(Z)`
/// is recorded in `literal_reml_condition`; the two can disagree on
/// observations inside `span([X Z])` with a nonzero fixed-effect component.
/// The projector `N` is built from an orthonormal basis, so rank-deficient
/// `X` is accepted.
pub fn reml_exists(
    model: &VarCompModel,
    y: &Vector,
    tol: &Tolerance,
) -> Result<ExistenceCertificate> {
    let (residual_norm, rel_residual) = membership_residual(model, y, tol)?;
    let exists = residual_norm > tol.rel_rank_tol * y.norm();
    let nz = residual_projector(model.x(), tol)? * model.z_combined();
    let literal_resid = project_onto_complement(y, &nz, tol)?;
    let literal = literal_resid.norm() > tol.rel_rank_tol * y.norm();
    Ok(ExistenceCertificate {
        kind: Method::Reml,
        exists,
        residual_norm,
        rel_residual,
        s_xz: None,
        lower_bound: None,
        tol_used: *tol,
        literal_reml_condition: Some(literal),
    })
}

/// The orthogonal projector `N` onto the complement of the column space of
/// `X`, built from an orthonormal basis so rank-deficient and zero designs
/// are handled uniformly.
pub fn residual_projector(x: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let basis = orthonormal_basis(x, tol)?;
    Ok(Matrix::identity(x.nrows(), x.nrows()) - &basis * basis.transpose())
}

/// Lower bound `n ln(s_{X,Z}) - n ln(n) + n` on the scaled criterion, valid
/// whenever the ML estimate exists.
pub fn ml_lower_bound(model: &VarCompModel, y: &Vector, tol: &Tolerance) -> Result<f64> {
    let certificate = ml_exists(model, y, tol)?;
    match certificate.lower_bound {
        Some(bound) => Ok(bound),
        None => Err(Error::Nonexistence {
            certificate: Box::new(certificate),
            witness: None,
        }),
    }
}

/// A parametric ray along which the criterion provably diverges to negative
/// infinity, certifying nonexistence.
///
/// For the ML kind the ray is `beta = beta_star`, `kappa = t (1, ..., 1)`,
/// with the scale profiled at each `t`; for the REML kind the analogous ray
/// runs in the transformed problem. Evaluations are taken at the projection
/// of the observation onto the critical subspace, which agrees with the
/// observation itself within the certification tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessRay {
    beta_star: Vector,
    t_grid: Vec<f64>,
    kind: Method,
}

impl WitnessRay {
    /// Fixed-effect coefficients of the least-squares split `y = X beta* + Z c`.
    pub fn beta_star(&self) -> &Vector {
        &self.beta_star
    }

    /// Strictly increasing evaluation grid.
    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn kind(&self) -> Method {
        self.kind
    }
}

/// The default evaluation grid for witness rays. The early points document
/// strict descent; the tail certifies divergence well past any fixed floor.
pub fn default_t_grid() -> Vec<f64> {
    vec![1e1, 1e2, 1e3, 1e4, 1e8, 1e16, 1e32, 1e64, 1e128, 1e250]
}

/// Relative size below which the random-effect component of the projected
/// observation is treated as absent and the ray degenerates to a pure
/// scale-collapse ray.
const TINY_COMPONENT: f64 = 1e-14;

/// Constructs a nonexistence witness ray for the ML estimate.
///
/// Requires a certified nonexistence verdict and a nonzero observation; the
/// coefficients come from the least-squares split of the projected
/// observation across `[X Z]`.
pub fn nonexistence_witness(
    model: &VarCompModel,
    y: &Vector,
    tol: &Tolerance,
) -> Result<WitnessRay> {
    let certificate = ml_exists(model, y, tol)?;
    if certificate.exists {
        return Err(Error::Precondition(
            "a nonexistence witness was requested but the ML estimate exists".into(),
        ));
    }
    if y.norm() == 0.0 {
        return Err(Error::Precondition(
            "a witness ray requires a nonzero observation".into(),
        ));
    }
    let beta_star = least_squares_beta(model, y, tol)?;
    Ok(WitnessRay {
        beta_star,
        t_grid: default_t_grid(),
        kind: Method::Ml,
    })
}

/// Constructs a nonexistence witness ray for the REML estimate; the ray runs
/// in the transformed problem, so it carries no fixed-effect coefficients.
pub fn reml_nonexistence_witness(
    model: &VarCompModel,
    y: &Vector,
    tol: &Tolerance,
) -> Result<WitnessRay> {
    let certificate = reml_exists(model, y, tol)?;
    if certificate.exists {
        return Err(Error::Precondition(
            "a nonexistence witness was requested but the REML estimate exists".into(),
        ));
    }
    if y.norm() == 0.0 {
        return Err(Error::Precondition(
            "a witness ray requires a nonzero observation".into(),
        ));
    }
    if !model.full_rank_x() {
        return Err(Error::RankDeficient(
            "the restricted criterion requires X with full column rank".into(),
        ));
    }
    Ok(WitnessRay {
        beta_star: Vector::zeros(0),
        t_grid: default_t_grid(),
        kind: Method::Reml,
    })
}

fn least_squares_beta(model: &VarCompModel, y: &Vector, tol: &Tolerance) -> Result<Vector> {
    let m = model.m();
    if m == 0 {
        return Ok(Vector::zeros(0));
    }
    let gamma = crate::numerics::min_norm_lstsq(model.xz_combined(), y, tol)?;
    Ok(gamma.rows(0, m).into_owned())
}

/// Evaluates the criterion along a witness ray.
///
/// Values are strictly decreasing and diverge to negative infinity; the
/// asymptotic slope is `(q - n) ln t` for the ML kind (with `q` the dimension
/// of the random-effect span) and its transformed-problem analogue for REML.
pub fn witness_trace(
    model: &VarCompModel,
    y: &Vector,
    ray: &WitnessRay,
    tol: &Tolerance,
) -> Result<Vec<f64>> {
    ensure_finite_vec("observation", y)?;
    match ray.kind {
        Method::Ml => ml_witness_trace(model, y, ray, tol),
        Method::Reml => reml_witness_trace(model, y, tol),
    }
}

fn ml_witness_trace(
    model: &VarCompModel,
    y: &Vector,
    ray: &WitnessRay,
    tol: &Tolerance,
) -> Result<Vec<f64>> {
    if ray.beta_star.nrows() != model.m() {
        return Err(Error::InvalidInput(format!(
            "witness coefficients have length {} but m = {}",
            ray.beta_star.nrows(),
            model.m()
        )));
    }
    let perp = project_onto_complement(y, model.xz_combined(), tol)?;
    let member = y - perp;
    let resid = &member - model.x() * &ray.beta_star;
    let form = BlockForm::from_model(model, tol)?;
    let (w, _) = form.split(&resid);
    let n = model.n() as f64;
    let r = model.r();
    if w.norm() <= TINY_COMPONENT * member.norm() {
        return Ok(ray.t_grid.iter().map(|t| -n * t.ln()).collect());
    }
    ray.t_grid
        .iter()
        .map(|&t| {
            let kappa = vec![t; r];
            let (logdet, quad) = form.logdet_and_quad(&kappa, &w, tol)?;
            Ok(n * (quad / n).ln() + n + logdet)
        })
        .collect()
}

fn reml_witness_trace(model: &VarCompModel, y: &Vector, tol: &Tolerance) -> Result<Vec<f64>> {
    let basis = reml_contrast_matrix(model.x(), tol)?;
    let kt = basis.k().transpose();
    let ky = &kt * y;
    let blocks: Vec<Matrix> = model.z_blocks().iter().map(|z| &kt * z).collect();
    let form = BlockForm::from_blocks(&blocks, tol)?;
    let (w, _) = form.split(&ky);
    let nm = form.dim() as f64;
    let r = model.r();
    let collapsed =
        ky.norm() <= TINY_COMPONENT * y.norm() || w.norm() <= TINY_COMPONENT * ky.norm();
    if collapsed {
        return Ok(default_t_grid().iter().map(|t| -nm * t.ln()).collect());
    }
    default_t_grid()
        .iter()
        .map(|&t| {
            let gamma = vec![t; r];
            let (logdet, quad) = form.logdet_and_quad(&gamma, &w, tol)?;
            Ok(nm * (quad / nm).ln() + nm + logdet)
        })
        .collect()
}

/// Escape directions of the parameter space probed for divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeFamily {
    /// Scale collapse: `kappa_0 -> 0` (REML: `xi_0 -> 0`).
    Kappa0Down,
    /// Scale blowup: `kappa_0 -> infinity` (REML: `xi_0 -> infinity`).
    Kappa0Up,
    /// Ratio blowup: every `kappa_i -> infinity` (REML: `xi_i / xi_0 -> infinity`).
    KappaUp,
    /// Fixed-effect blowup: `||beta|| -> infinity` (ML only).
    BetaUp,
}

impl std::fmt::Display for ProbeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProbeFamily::Kappa0Down => "kappa0-down",
            ProbeFamily::Kappa0Up => "kappa0-up",
            ProbeFamily::KappaUp => "kappa-up",
            ProbeFamily::BetaUp => "beta-up",
        })
    }
}

/// Default number of elements in a probe sequence.
pub const DEFAULT_PROBE_LEN: usize = 12;

fn probe_base_beta(model: &VarCompModel, y: &Vector, tol: &Tolerance) -> Result<Vector> {
    if model.m() == 0 {
        Ok(Vector::zeros(0))
    } else if model.full_rank_x() {
        gls_beta(model, &vec![0.0; model.r()], y, tol)
    } else {
        Ok(Vector::zeros(model.m()))
    }
}

fn beta_escape_direction(model: &VarCompModel) -> Result<Vector> {
    let x = model.x();
    let norms: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).norm()).collect();
    let best = norms
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .filter(|(_, &norm)| norm > 0.0);
    match best {
        Some((idx, _)) => {
            let mut dir = Vector::zeros(x.ncols());
            dir[idx] = 1.0;
            Ok(dir)
        }
        None => Err(Error::InvalidInput(
            "the fixed-effect escape family requires a nonzero design matrix X".into(),
        )),
    }
}

/// Builds the declared geometric escape sequence for one probe family in the
/// scaled parameterization.
pub fn ml_probe_sequence(
    model: &VarCompModel,
    y: &Vector,
    family: ProbeFamily,
    len: usize,
    tol: &Tolerance,
) -> Result<Vec<KappaParams>> {
    if len == 0 {
        return Err(Error::InvalidInput("probe length must be positive".into()));
    }
    let beta = probe_base_beta(model, y, tol)?;
    let r = model.r();
    (0..len)
        .map(|j| {
            let jf = j as f64;
            match family {
                ProbeFamily::Kappa0Down => {
                    KappaParams::new(beta.clone(), 10f64.powf(-2.0 * (jf + 1.0)), vec![0.0; r])
                }
                ProbeFamily::Kappa0Up => {
                    KappaParams::new(beta.clone(), 10f64.powf(5.0 * (jf + 1.0)), vec![0.0; r])
                }
                ProbeFamily::KappaUp => {
                    let t = 10f64.powf(12.0 + 5.0 * jf);
                    KappaParams::new(beta.clone(), 1.0, vec![t; r])
                }
                ProbeFamily::BetaUp => {
                    let dir = beta_escape_direction(model)?;
                    let c = 10f64.powf(4.0 + 5.0 * jf);
                    KappaParams::new(dir * c, 1.0, vec![0.0; r])
                }
            }
        })
        .collect()
}

/// Builds the declared escape sequence of variance-component vectors for one
/// probe family of the restricted criterion. The fixed-effect family is
/// unavailable: the restricted criterion has no `beta`.
pub fn reml_probe_sequence(
    model: &VarCompModel,
    family: ProbeFamily,
    len: usize,
    tol: &Tolerance,
) -> Result<Vec<Vec<f64>>> {
    if len == 0 {
        return Err(Error::InvalidInput("probe length must be positive".into()));
    }
    let r = model.r();
    match family {
        ProbeFamily::BetaUp => Err(Error::InvalidInput(
            "the restricted criterion has no fixed-effect escape direction".into(),
        )),
        ProbeFamily::KappaUp => {
            let nz = residual_projector(model.x(), tol)? * model.z_combined();
            if numerical_rank(&nz, tol)? == 0 {
                return Err(Error::InvalidInput(
                    "every random-effect column lies in the fixed-effect span; the ratio \
                     escape family is unavailable"
                        .into(),
                ));
            }
            Ok((0..len)
                .map(|j| {
                    let t = 10f64.powf(12.0 + 5.0 * j as f64);
                    let mut sigma2 = vec![t; r + 1];
                    sigma2[0] = 1.0;
                    sigma2
                })
                .collect())
        }
        ProbeFamily::Kappa0Down => Ok((0..len)
            .map(|j| {
                let mut sigma2 = vec![0.0; r + 1];
                sigma2[0] = 10f64.powf(-2.0 * (j as f64 + 1.0));
                sigma2
            })
            .collect()),
        ProbeFamily::Kappa0Up => Ok((0..len)
            .map(|j| {
                let mut sigma2 = vec![0.0; r + 1];
                sigma2[0] = 10f64.powf(5.0 * (j as f64 + 1.0));
                sigma2
            })
            .collect()),
    }
}

/// Evaluates the scaled criterion along a declared escape sequence.
///
/// Requires a certified existence verdict (on nonexistence the criterion is
/// unbounded below and the probes are meaningless). Values are computed
/// through the reduced block system, which stays factorizable at parameter
/// magnitudes far beyond what the dense covariance supports.
pub fn divergence_probe_ml(
    model: &VarCompModel,
    y: &Vector,
    sequence: &[KappaParams],
    tol: &Tolerance,
) -> Result<Vec<f64>> {
    let certificate = ml_exists(model, y, tol)?;
    if !certificate.exists {
        return Err(Error::Precondition(
            "divergence probes require an existing ML estimate; the certificate reports \
             nonexistence"
                .into(),
        ));
    }
    if sequence.is_empty() {
        return Err(Error::InvalidInput("probe sequence is empty".into()));
    }
    let form = BlockForm::from_model(model, tol)?;
    sequence
        .iter()
        .map(|params| {
            if params.beta().nrows() != model.m() {
                return Err(Error::InvalidInput(format!(
                    "sequence beta length {} does not match m = {}",
                    params.beta().nrows(),
                    model.m()
                )));
            }
            let resid = y - model.x() * params.beta();
            form.criterion_kappa(params.kappa0(), params.kappa(), &resid, tol)
        })
        .collect()
}

/// Evaluates the restricted criterion along a declared escape sequence of
/// variance-component vectors.
///
/// A non-orthonormal basis is reduced to an orthonormal one internally and
/// the exact determinant offset `ln|K'K|` is added back, so the values match
/// the literal restricted criterion of the supplied basis.
pub fn divergence_probe_reml(
    model: &VarCompModel,
    y: &Vector,
    sequence: &[Vec<f64>],
    basis: &RemlBasis,
    tol: &Tolerance,
) -> Result<Vec<f64>> {
    let certificate = reml_exists(model, y, tol)?;
    if !certificate.exists {
        return Err(Error::Precondition(
            "divergence probes require an existing REML estimate; the certificate reports \
             nonexistence"
                .into(),
        ));
    }
    if sequence.is_empty() {
        return Err(Error::InvalidInput("probe sequence is empty".into()));
    }
    if basis.k().nrows() != model.n() {
        return Err(Error::InvalidInput(format!(
            "contrast matrix has {} rows but the model has n = {}",
            basis.k().nrows(),
            model.n()
        )));
    }
    let (k, offset) = if basis.orthonormal() {
        (basis.k().clone(), 0.0)
    } else {
        let gram = basis.k().transpose() * basis.k();
        let offset = logdet_spd(&gram, tol)?;
        (orthonormal_basis(basis.k(), tol)?, offset)
    };
    let kt = k.transpose();
    let ky = &kt * y;
    let blocks: Vec<Matrix> = model.z_blocks().iter().map(|z| &kt * z).collect();
    let form = BlockForm::from_blocks(&blocks, tol)?;
    sequence
        .iter()
        .map(|sigma2| {
            if sigma2.len() != model.r() + 1 {
                return Err(Error::InvalidInput(format!(
                    "sequence entries must have length r + 1 = {}, got {}",
                    model.r() + 1,
                    sigma2.len()
                )));
            }
            if !(sigma2[0].is_finite() && sigma2[0] > 0.0) {
                return Err(Error::ParameterDomain(format!(
                    "sigma_0^2 must be strictly positive, got {}",
                    sigma2[0]
                )));
            }
            if sigma2[1..].iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
                return Err(Error::ParameterDomain(
                    "variance components must be nonnegative and finite".into(),
                ));
            }
            Ok(form.criterion_sigma(sigma2, &ky, tol)? + offset)
        })
        .collect()
}

/// Growth contract for probe values: the last value exceeds both the first
/// value and the threshold, and the tail (the last four values, or all of
/// them for shorter sequences) is strictly increasing.
pub fn probe_contract(values: &[f64], threshold: f64) -> bool {
    if values.len() < 2 {
        return false;
    }
    let first = values[0];
    let last = *values.last().unwrap();
    if !(last > first && last > threshold) {
        return false;
    }
    let tail_len = values.len().min(4);
    let tail = &values[values.len() - tail_len..];
    tail.windows(2).all(|pair| pair[1] > pair[0])
}
