//! Validated model container, the two covariance parameterizations, and
//! seeded data simulation.
//!
//! The model is `Y = X beta + sum_i Z_i u_i + eps` with independent Gaussian
//! random effects `u_i ~ N(0, sigma_i^2 I)` and noise `eps ~ N(0, sigma_0^2 I)`,
//! giving the covariance `V(sigma^2) = sigma_0^2 I + sum_i sigma_i^2 Z_i Z_i'`.
//! The scaled parameterization divides by `sigma_0^2`: `kappa_0 = sigma_0^2`,
//! `kappa_i = sigma_i^2 / sigma_0^2`, `V = kappa_0 (I + sum_i kappa_i Z_i Z_i')`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{
    ensure_finite, ensure_finite_vec, hcat, numerical_rank, Matrix, Tolerance, Vector,
};

/// Validated variance-components model: a fixed-effect design `X` (n by m)
/// and random-effect design blocks `Z_1 .. Z_r` (n by k_i each).
#[derive(Debug, Clone)]
pub struct VarCompModel {
    x: Matrix,
    z_blocks: Vec<Matrix>,
    z_combined: Matrix,
    xz_combined: Matrix,
    n: usize,
    m: usize,
    r: usize,
    k: Vec<usize>,
    rank_x: usize,
    full_rank_x: bool,
}

impl VarCompModel {
    /// Fixed-effect design matrix, n by m.
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    /// Random-effect design blocks.
    pub fn z_blocks(&self) -> &[Matrix] {
        &self.z_blocks
    }

    /// All random-effect blocks concatenated into one n by (sum k_i) matrix.
    pub fn z_combined(&self) -> &Matrix {
        &self.z_combined
    }

    /// The concatenation [X Z], whose column space is the critical subspace
    /// for the maximum likelihood existence condition.
    pub fn xz_combined(&self) -> &Matrix {
        &self.xz_combined
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of fixed-effect columns.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of random-effect blocks.
    pub fn r(&self) -> usize {
        self.r
    }

    /// Column counts of the random-effect blocks.
    pub fn k(&self) -> &[usize] {
        &self.k
    }

    /// Numerical rank of X recorded at build time.
    pub fn rank_x(&self) -> usize {
        self.rank_x
    }

    /// Whether X has full column rank; rank deficiency is recorded at build
    /// time, not rejected.
    pub fn full_rank_x(&self) -> bool {
        self.full_rank_x
    }
}

/// Builds and validates a model from its design matrices.
///
/// Requirements: all matrices share the row count `n >= 1`; the block list is
/// nonempty; the combined random-effect design is nonzero; `sum k_i < n`; and
/// `m < n` whenever `X` is nonzero. Rank deficiency of `X` is recorded in the
/// model, not rejected.
pub fn build_model(x: Matrix, z_blocks: Vec<Matrix>, tol: &Tolerance) -> Result<VarCompModel> {
    tol.validate()?;
    if z_blocks.is_empty() {
        return Err(Error::InvalidInput(
            "at least one random-effect block is required".into(),
        ));
    }
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidInput(
            "design matrix must have at least one row".into(),
        ));
    }
    ensure_finite("design matrix X", &x)?;
    for (i, z) in z_blocks.iter().enumerate() {
        ensure_finite(&format!("random-effect block Z{}", i + 1), z)?;
        if z.nrows() != n {
            return Err(Error::InvalidInput(format!(
                "block Z{} has {} rows but X has {}",
                i + 1,
                z.nrows(),
                n
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "block Z{} has no columns",
                i + 1
            )));
        }
    }
    let m = x.ncols();
    let k: Vec<usize> = z_blocks.iter().map(|z| z.ncols()).collect();
    let total_k: usize = k.iter().sum();
    if total_k >= n {
        return Err(Error::ModelAssumption(format!(
            "total random-effect column count {total_k} must be smaller than n = {n}"
        )));
    }
    let x_is_zero = x.iter().all(|&v| v == 0.0);
    if !x_is_zero && m >= n {
        return Err(Error::ModelAssumption(format!(
            "fixed-effect column count {m} must be smaller than n = {n} for nonzero X"
        )));
    }
    if z_blocks.iter().all(|z| z.iter().all(|&v| v == 0.0)) {
        return Err(Error::ModelAssumption(
            "the combined random-effect design is zero".into(),
        ));
    }
    let z_refs: Vec<&Matrix> = z_blocks.iter().collect();
    let z_combined = hcat(&z_refs);
    let xz_combined = hcat(&[&x, &z_combined]);
    let rank_x = if m == 0 { 0 } else { numerical_rank(&x, tol)? };
    Ok(VarCompModel {
        full_rank_x: rank_x == m,
        r: z_blocks.len(),
        x,
        z_blocks,
        z_combined,
        xz_combined,
        n,
        m,
        k,
        rank_x,
    })
}

fn validate_sigma2(r: usize, sigma2: &[f64]) -> Result<()> {
    if sigma2.len() != r + 1 {
        return Err(Error::InvalidInput(format!(
            "sigma2 must have length r + 1 = {}, got {}",
            r + 1,
            sigma2.len()
        )));
    }
    if !sigma2.iter().all(|v| v.is_finite()) {
        return Err(Error::ParameterDomain(
            "sigma2 contains a non-finite entry".into(),
        ));
    }
    if sigma2[0] <= 0.0 {
        return Err(Error::ParameterDomain(format!(
            "sigma_0^2 must be strictly positive, got {}",
            sigma2[0]
        )));
    }
    if let Some(bad) = sigma2[1..].iter().find(|&&v| v < 0.0) {
        return Err(Error::ParameterDomain(format!(
            "variance components must be nonnegative, got {bad}"
        )));
    }
    Ok(())
}

fn validate_kappa(r: usize, kappa: &[f64]) -> Result<()> {
    if kappa.len() != r {
        return Err(Error::InvalidInput(format!(
            "kappa must have length r = {}, got {}",
            r,
            kappa.len()
        )));
    }
    if !kappa.iter().all(|v| v.is_finite()) {
        return Err(Error::ParameterDomain(
            "kappa contains a non-finite entry".into(),
        ));
    }
    if let Some(bad) = kappa.iter().find(|&&v| v < 0.0) {
        return Err(Error::ParameterDomain(format!(
            "kappa components must be nonnegative, got {bad}"
        )));
    }
    Ok(())
}

/// Covariance matrix `V(sigma^2) = sigma_0^2 I + sum_i sigma_i^2 Z_i Z_i'`.
pub fn covariance(model: &VarCompModel, sigma2: &[f64]) -> Result<Matrix> {
    validate_sigma2(model.r, sigma2)?;
    let mut v = Matrix::identity(model.n, model.n) * sigma2[0];
    for (z, &s) in model.z_blocks.iter().zip(&sigma2[1..]) {
        if s != 0.0 {
            v += z * z.transpose() * s;
        }
    }
    Ok(v)
}

/// Scaled covariance `V~(kappa) = I + sum_i kappa_i Z_i Z_i'`; the identity
/// matrix when `kappa = 0`.
pub fn scaled_covariance(model: &VarCompModel, kappa: &[f64]) -> Result<Matrix> {
    validate_kappa(model.r, kappa)?;
    let mut v = Matrix::identity(model.n, model.n);
    for (z, &c) in model.z_blocks.iter().zip(kappa) {
        if c != 0.0 {
            v += z * z.transpose() * c;
        }
    }
    Ok(v)
}

/// Maps `sigma^2 = (sigma_0^2, ..., sigma_r^2)` to `(kappa_0, kappa)` with
/// `kappa_0 = sigma_0^2` and `kappa_i = sigma_i^2 / sigma_0^2`.
pub fn sigma_to_kappa(sigma2: &[f64]) -> Result<(f64, Vec<f64>)> {
    if sigma2.is_empty() {
        return Err(Error::InvalidInput("sigma2 must be nonempty".into()));
    }
    validate_sigma2(sigma2.len() - 1, sigma2)?;
    let kappa0 = sigma2[0];
    let kappa = sigma2[1..].iter().map(|&s| s / kappa0).collect();
    Ok((kappa0, kappa))
}

/// Inverse of [`sigma_to_kappa`]: returns `(kappa_0, kappa_0 kappa_1, ...)`.
pub fn kappa_to_sigma(kappa0: f64, kappa: &[f64]) -> Result<Vec<f64>> {
    if !(kappa0.is_finite() && kappa0 > 0.0) {
        return Err(Error::ParameterDomain(format!(
            "kappa_0 must be strictly positive and finite, got {kappa0}"
        )));
    }
    validate_kappa(kappa.len(), kappa)?;
    let mut sigma2 = Vec::with_capacity(kappa.len() + 1);
    sigma2.push(kappa0);
    sigma2.extend(kappa.iter().map(|&c| kappa0 * c));
    Ok(sigma2)
}

/// Parameter point in the original parameterization: `beta` and the variance
/// components `(sigma_0^2, ..., sigma_r^2)` with `sigma_0^2 > 0` and
/// `sigma_i^2 >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaParams {
    beta: Vector,
    sigma2: Vec<f64>,
}

impl SigmaParams {
    /// Validates domain membership: `sigma_0^2 > 0`, `sigma_i^2 >= 0`, all
    /// entries finite.
    pub fn new(beta: Vector, sigma2: Vec<f64>) -> Result<Self> {
        ensure_finite_vec("beta", &beta)?;
        if sigma2.is_empty() {
            return Err(Error::InvalidInput("sigma2 must be nonempty".into()));
        }
        validate_sigma2(sigma2.len() - 1, &sigma2)?;
        Ok(SigmaParams { beta, sigma2 })
    }

    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }
}

/// Parameter point in the scaled parameterization: `beta`, the scale
/// `kappa_0 > 0`, and the ratios `kappa_i >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaParams {
    beta: Vector,
    kappa0: f64,
    kappa: Vec<f64>,
}

impl KappaParams {
    /// Validates domain membership: `kappa_0 > 0`, `kappa_i >= 0`, all
    /// entries finite.
    pub fn new(beta: Vector, kappa0: f64, kappa: Vec<f64>) -> Result<Self> {
        ensure_finite_vec("beta", &beta)?;
        if !(kappa0.is_finite() && kappa0 > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "kappa_0 must be strictly positive and finite, got {kappa0}"
            )));
        }
        validate_kappa(kappa.len(), &kappa)?;
        Ok(KappaParams {
            beta,
            kappa0,
            kappa,
        })
    }

    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }
}

/// Draws one observation vector from the model at the given parameters.
///
/// The generator is seeded explicitly and the draw order is documented and
/// fixed: the random effects `u_1, ..., u_r` are drawn first (block by block,
/// `k_i` standard normals each), then the `n` noise components. Outputs are
/// therefore reproducible bit for bit per seed.
pub fn simulate(model: &VarCompModel, params: &SigmaParams, seed: u64) -> Result<Vector> {
    if params.beta.nrows() != model.m {
        return Err(Error::InvalidInput(format!(
            "beta length {} does not match m = {}",
            params.beta.nrows(),
            model.m
        )));
    }
    validate_sigma2(model.r, &params.sigma2)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut y = &model.x * &params.beta;
    for (z, &s2) in model.z_blocks.iter().zip(&params.sigma2[1..]) {
        let sd = s2.sqrt();
        let u = Vector::from_iterator(
            z.ncols(),
            (0..z.ncols()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)),
        );
        y += z * u;
    }
    let sd0 = params.sigma2[0].sqrt();
    for i in 0..model.n {
        y[i] += sd0 * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(y)
}
