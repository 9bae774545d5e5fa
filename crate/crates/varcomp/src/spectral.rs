//! Block representation of the scaled covariance and the equal-ratio
//! diagonal form.
//!
//! With `U = [U1 U2]` orthogonal, `U1` an orthonormal basis of
//! `H = span(Z)` of dimension `q`, and `A_i = U1' Z_i Z_i' U1`, the scaled
//! covariance factors as
//! `V~(kappa) = U diag(I_q + sum_i kappa_i A_i, I_{n-q}) U'`.
//! Each `A_i` is nonnegative definite (it may be singular when a block has
//! deficient rank) while the sum `A_1 + ... + A_r` is positive definite on
//! `H`. When all ratios share one value `c`, diagonalizing the sum turns the
//! middle block into `I_q + c D` with a positive diagonal `D`.
//!
//! The same block form doubles as the numerically robust evaluation path for
//! criterion values at extreme parameters: the `q` by `q` system
//! `I + sum_i kappa_i A_i` stays well conditioned along rays where the full
//! `n` by `n` covariance becomes numerically unfactorizable.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::model::VarCompModel;
use crate::numerics::{hcat, orthonormal_basis, Matrix, SpdFactor, Tolerance, Vector};

/// Orthogonal block reduction of the scaled covariance.
#[derive(Debug, Clone)]
pub struct DecompositionResult {
    u: Matrix,
    a_blocks: Vec<Matrix>,
    q: usize,
}

impl DecompositionResult {
    /// The n by n orthogonal matrix `[U1 U2]`.
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    /// The symmetric q by q blocks `A_i = U1' Z_i Z_i' U1`.
    pub fn a_blocks(&self) -> &[Matrix] {
        &self.a_blocks
    }

    /// Dimension of `H = span(Z)`.
    pub fn q(&self) -> usize {
        self.q
    }

    /// Rebuilds `V~(kappa)` from the block representation.
    pub fn reconstruct(&self, kappa: &[f64]) -> Result<Matrix> {
        if kappa.len() != self.a_blocks.len() {
            return Err(Error::InvalidInput(format!(
                "kappa must have length {}, got {}",
                self.a_blocks.len(),
                kappa.len()
            )));
        }
        let n = self.u.nrows();
        let mut top = Matrix::identity(self.q, self.q);
        for (a, &c) in self.a_blocks.iter().zip(kappa) {
            top += a * c;
        }
        let mut middle = Matrix::identity(n, n);
        middle.view_mut((0, 0), (self.q, self.q)).copy_from(&top);
        Ok(&self.u * middle * self.u.transpose())
    }
}

/// Diagonal form shared by all equal-ratio points.
#[derive(Debug, Clone)]
pub struct EqualKappaResult {
    u: Matrix,
    d: Vector,
}

impl EqualKappaResult {
    /// The n by n orthogonal matrix after rotating `U1` into the eigenbasis
    /// of the summed blocks.
    pub fn u(&self) -> &Matrix {
        &self.u
    }

    /// The positive diagonal of length q.
    pub fn d(&self) -> &Vector {
        &self.d
    }

    /// Rebuilds `V~(c 1)` for a common ratio `c >= 0`.
    pub fn reconstruct(&self, c: f64) -> Result<Matrix> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::ParameterDomain(format!(
                "common ratio must be nonnegative and finite, got {c}"
            )));
        }
        let n = self.u.nrows();
        let q = self.d.nrows();
        let mut middle = Matrix::identity(n, n);
        for j in 0..q {
            middle[(j, j)] += c * self.d[j];
        }
        Ok(&self.u * middle * self.u.transpose())
    }
}

fn complement_basis(u1: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let n = u1.nrows();
    let projector = Matrix::identity(n, n) - u1 * u1.transpose();
    orthonormal_basis(&projector, tol)
}

/// Computes the orthogonal block reduction `U, A_1..A_r, q` of the scaled
/// covariance of `model`.
pub fn scaled_cov_decomposition(
    model: &VarCompModel,
    tol: &Tolerance,
) -> Result<DecompositionResult> {
    let u1 = orthonormal_basis(model.z_combined(), tol)?;
    let q = u1.ncols();
    let u2 = complement_basis(&u1, tol)?;
    let u = hcat(&[&u1, &u2]);
    let a_blocks: Vec<Matrix> = model
        .z_blocks()
        .iter()
        .map(|z| {
            let g = u1.transpose() * z;
            &g * g.transpose()
        })
        .collect();
    Ok(DecompositionResult { u, a_blocks, q })
}

/// Diagonalizes the summed blocks so every equal-ratio scaled covariance is
/// simultaneously diagonal in one orthogonal frame.
pub fn equal_kappa_diagonalization(
    model: &VarCompModel,
    tol: &Tolerance,
) -> Result<EqualKappaResult> {
    let decomposition = scaled_cov_decomposition(model, tol)?;
    let q = decomposition.q;
    let n = decomposition.u.nrows();
    let mut sum = Matrix::zeros(q, q);
    for a in &decomposition.a_blocks {
        sum += a;
    }
    let eigen = SymmetricEigen::new(sum);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| {
        eigen.eigenvalues[j]
            .partial_cmp(&eigen.eigenvalues[i])
            .unwrap()
    });
    let d = Vector::from_iterator(q, order.iter().map(|&i| eigen.eigenvalues[i]));
    let rotation_cols: Vec<_> = order
        .iter()
        .map(|&i| eigen.eigenvectors.column(i).into_owned())
        .collect();
    let rotation = Matrix::from_columns(&rotation_cols);
    let u1 = decomposition.u.columns(0, q).into_owned() * rotation;
    let u2 = decomposition.u.columns(q, n - q).into_owned();
    Ok(EqualKappaResult {
        u: hcat(&[&u1, &u2]),
        d,
    })
}

/// Internal block-form evaluator shared by divergence probes, witness rays,
/// and the restricted-likelihood reductions.
///
/// For effective design blocks `W_1..W_r` in an ambient dimension `dim`, it
/// stores an orthonormal basis `U1` of `span(W)` and the reduced blocks
/// `A_i = U1' W_i W_i' U1`, and evaluates criterion values through the
/// reduced `q` by `q` system.
#[derive(Debug, Clone)]
pub(crate) struct BlockForm {
    u1: Matrix,
    a_blocks: Vec<Matrix>,
    dim: usize,
    q: usize,
}

impl BlockForm {
    pub(crate) fn from_blocks(blocks: &[Matrix], tol: &Tolerance) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidInput(
                "at least one design block is required".into(),
            ));
        }
        let dim = blocks[0].nrows();
        let refs: Vec<&Matrix> = blocks.iter().collect();
        let combined = hcat(&refs);
        let u1 = orthonormal_basis(&combined, tol)?;
        let q = u1.ncols();
        let a_blocks = blocks
            .iter()
            .map(|w| {
                let g = u1.transpose() * w;
                &g * g.transpose()
            })
            .collect();
        Ok(BlockForm {
            u1,
            a_blocks,
            dim,
            q,
        })
    }

    pub(crate) fn from_model(model: &VarCompModel, tol: &Tolerance) -> Result<Self> {
        Self::from_blocks(model.z_blocks(), tol)
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    /// Splits a residual into its coordinates on `span(W)` and the squared
    /// norm of the remainder, computed by explicit subtraction.
    pub(crate) fn split(&self, resid: &Vector) -> (Vector, f64) {
        let w = self.u1.transpose() * resid;
        let remainder = resid - &self.u1 * &w;
        (w, remainder.norm_squared())
    }

    fn middle(&self, xi0: f64, xi: &[f64]) -> Matrix {
        let mut middle = Matrix::identity(self.q, self.q) * xi0;
        for (a, &c) in self.a_blocks.iter().zip(xi) {
            if c != 0.0 {
                middle += a * c;
            }
        }
        middle
    }

    /// Log-determinant of `xi0 I_q + sum_i xi_i A_i` and the quadratic form
    /// of `w` against its inverse.
    pub(crate) fn logdet_and_quad_shifted(
        &self,
        xi0: f64,
        xi: &[f64],
        w: &Vector,
        tol: &Tolerance,
    ) -> Result<(f64, f64)> {
        if xi.len() != self.a_blocks.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} ratio components, got {}",
                self.a_blocks.len(),
                xi.len()
            )));
        }
        if self.q == 0 {
            return Ok((0.0, 0.0));
        }
        let factor = SpdFactor::new(&self.middle(xi0, xi), tol)?;
        let solved = factor.solve_vec(w);
        Ok((factor.logdet(), w.dot(&solved)))
    }

    /// Log-determinant of `I_q + sum_i kappa_i A_i` and the quadratic form of
    /// `w` against its inverse.
    pub(crate) fn logdet_and_quad(
        &self,
        kappa: &[f64],
        w: &Vector,
        tol: &Tolerance,
    ) -> Result<(f64, f64)> {
        self.logdet_and_quad_shifted(1.0, kappa, w, tol)
    }

    /// Minus twice the Gaussian log-likelihood in the scaled
    /// parameterization, evaluated through the reduced system:
    /// `dim ln(kappa0) + ln|I + B(kappa)| + (w'(I+B)^{-1} w + p2) / kappa0`.
    pub(crate) fn criterion_kappa(
        &self,
        kappa0: f64,
        kappa: &[f64],
        resid: &Vector,
        tol: &Tolerance,
    ) -> Result<f64> {
        let (w, p2) = self.split(resid);
        let (logdet, quad) = self.logdet_and_quad(kappa, &w, tol)?;
        Ok(self.dim as f64 * kappa0.ln() + logdet + (quad + p2) / kappa0)
    }

    /// The same criterion in the unscaled parameterization
    /// `(dim - q) ln(xi0) + ln|xi0 I + sum xi_i A_i| + w'(.)^{-1} w + p2 / xi0`.
    pub(crate) fn criterion_sigma(
        &self,
        sigma2: &[f64],
        resid: &Vector,
        tol: &Tolerance,
    ) -> Result<f64> {
        let (xi0, xi) = sigma2
            .split_first()
            .ok_or_else(|| Error::InvalidInput("sigma2 must be nonempty".into()))?;
        let (w, p2) = self.split(resid);
        let (logdet, quad) = self.logdet_and_quad_shifted(*xi0, xi, &w, tol)?;
        Ok((self.dim - self.q) as f64 * xi0.ln() + logdet + quad + p2 / xi0)
    }
}
