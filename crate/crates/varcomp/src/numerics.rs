//! Dense real matrix kernels with explicit tolerance semantics.
//!
//! Everything downstream is built on five primitives: orthonormal column
//! bases, numerical rank, projection onto an orthogonal complement, and
//! log-determinants and linear solves of symmetric positive definite
//! matrices. Rank decisions are relative to the largest singular value so
//! that all derived verdicts are invariant under rescaling of the inputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense column-major real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Dense real column vector used throughout the crate.
pub type Vector = DVector<f64>;

/// Tolerances controlling rank decisions and positive-definiteness checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    /// Singular values at or below `rel_rank_tol` times the largest singular
    /// value are treated as zero.
    pub rel_rank_tol: f64,
    /// A factorization pivot at or below `spd_tol` times the largest diagonal
    /// entry fails the positive-definiteness check.
    pub spd_tol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            rel_rank_tol: 1e-10,
            spd_tol: 1e-12,
        }
    }
}

impl Tolerance {
    /// Checks that both tolerances are strictly positive and finite.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("rel_rank_tol", self.rel_rank_tol),
            ("spd_tol", self.spd_tol),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerance {name} must be strictly positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Returns an error naming `what` if any entry of `a` is NaN or infinite.
pub(crate) fn ensure_finite(what: &str, a: &Matrix) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} contains a non-finite entry"
        )))
    }
}

pub(crate) fn ensure_finite_vec(what: &str, v: &Vector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} contains a non-finite entry"
        )))
    }
}

/// Horizontal concatenation of matrices sharing a row count.
pub(crate) fn hcat(parts: &[&Matrix]) -> Matrix {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for part in parts {
        out.view_mut((0, at), (rows, part.ncols())).copy_from(*part);
        at += part.ncols();
    }
    out
}

fn require_rows(a: &Matrix) -> Result<()> {
    if a.nrows() == 0 {
        return Err(Error::InvalidInput(
            "matrix must have at least one row".into(),
        ));
    }
    Ok(())
}

/// One-sided Jacobi factorization of `a`.
///
/// Rotates column pairs of a working copy until all pairs are mutually
/// orthogonal relative to their norms, which keeps full accuracy on tied or
/// clustered singular values where bidiagonalization-based routines can
/// return left vectors that are not orthogonal across the cluster. At
/// convergence the working columns equal `u_i * sigma_i`; the accumulated
/// rotations form the right factor when requested. Columns are returned in
/// decreasing order of singular value, with exact zero columns for zero
/// singular values.
struct JacobiSvd {
    sigma: Vec<f64>,
    u: Matrix,
    v: Option<Matrix>,
}

fn jacobi_svd(a: &Matrix, want_v: bool) -> JacobiSvd {
    let mut w = a.clone();
    let n = w.nrows();
    let m = w.ncols();
    let mut v = want_v.then(|| Matrix::identity(m, m));
    for _ in 0..60 {
        let mut rotated = false;
        for i in 0..m {
            for j in (i + 1)..m {
                let aii = w.column(i).norm_squared();
                let ajj = w.column(j).norm_squared();
                let aij = w.column(i).dot(&w.column(j));
                if aij.abs() <= 1e-15 * (aii * ajj).sqrt() {
                    continue;
                }
                rotated = true;
                let tau = (ajj - aii) / (2.0 * aij);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in 0..n {
                    let wi = w[(row, i)];
                    let wj = w[(row, j)];
                    w[(row, i)] = c * wi - s * wj;
                    w[(row, j)] = s * wi + c * wj;
                }
                if let Some(v) = v.as_mut() {
                    for row in 0..m {
                        let vi = v[(row, i)];
                        let vj = v[(row, j)];
                        v[(row, i)] = c * vi - s * vj;
                        v[(row, j)] = s * vi + c * vj;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    let norms: Vec<f64> = (0..m).map(|i| w.column(i).norm()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());
    let sigma: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let mut u = Matrix::zeros(n, m);
    for (at, &i) in order.iter().enumerate() {
        if norms[i] > 0.0 {
            u.column_mut(at).copy_from(&(w.column(i) / norms[i]));
        }
    }
    let v = v.map(|v| {
        let mut sorted = Matrix::zeros(m, m);
        for (at, &i) in order.iter().enumerate() {
            sorted.column_mut(at).copy_from(&v.column(i));
        }
        sorted
    });
    JacobiSvd { sigma, u, v }
}

/// Singular values of `a` paired with the left singular vectors, ordered by
/// decreasing singular value.
fn ordered_left_singular_pairs(a: &Matrix) -> (Vec<f64>, Matrix) {
    let svd = jacobi_svd(a, false);
    (svd.sigma, svd.u)
}

fn rank_from_singular_values(sigma: &[f64], tol: &Tolerance) -> usize {
    let largest = sigma.first().copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return 0;
    }
    sigma
        .iter()
        .take_while(|&&s| s > tol.rel_rank_tol * largest)
        .count()
}

/// Orthonormal basis of the numerical column space of `a`.
///
/// The returned matrix has `numerical_rank(a, tol)` orthonormal columns
/// spanning the column space of `a` at the relative rank tolerance. The zero
/// matrix (and any matrix with zero columns) yields a basis with zero
/// columns rather than an error.
pub fn orthonormal_basis(a: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    tol.validate()?;
    require_rows(a)?;
    ensure_finite("matrix", a)?;
    if a.ncols() == 0 {
        return Ok(Matrix::zeros(a.nrows(), 0));
    }
    let (sigma, u) = ordered_left_singular_pairs(a);
    let rank = rank_from_singular_values(&sigma, tol);
    Ok(u.columns(0, rank).into_owned())
}

/// Number of singular values exceeding `rel_rank_tol` times the largest one;
/// zero for the zero matrix.
pub fn numerical_rank(a: &Matrix, tol: &Tolerance) -> Result<usize> {
    tol.validate()?;
    require_rows(a)?;
    ensure_finite("matrix", a)?;
    if a.ncols() == 0 {
        return Ok(0);
    }
    let svd = jacobi_svd(a, false);
    Ok(rank_from_singular_values(&svd.sigma, tol))
}

/// Minimum-norm least-squares solution of `a x = b`.
///
/// Singular values at or below the relative rank tolerance are truncated, so
/// rank-deficient systems return the unique solution of smallest Euclidean
/// norm instead of amplifying noise along null directions.
pub(crate) fn min_norm_lstsq(a: &Matrix, b: &Vector, tol: &Tolerance) -> Result<Vector> {
    tol.validate()?;
    require_rows(a)?;
    ensure_finite("matrix", a)?;
    ensure_finite_vec("vector", b)?;
    if b.nrows() != a.nrows() {
        return Err(Error::InvalidInput(format!(
            "vector length {} does not match matrix row count {}",
            b.nrows(),
            a.nrows()
        )));
    }
    if a.ncols() == 0 {
        return Ok(Vector::zeros(0));
    }
    let svd = jacobi_svd(a, true);
    let v = svd.v.expect("right singular vectors requested");
    let rank = rank_from_singular_values(&svd.sigma, tol);
    let mut x = Vector::zeros(a.ncols());
    for i in 0..rank {
        let coeff = svd.u.column(i).dot(b) / svd.sigma[i];
        x += v.column(i) * coeff;
    }
    Ok(x)
}

/// Orthogonal projection of `y` onto the orthogonal complement of the column
/// space of `a`.
///
/// Computes `y - B Bᵀy` with `B = orthonormal_basis(a, tol)`, followed by a
/// second subtraction pass so the result stays orthogonal to the basis at
/// working precision even when `y` nearly lies in the span.
pub fn project_onto_complement(y: &Vector, a: &Matrix, tol: &Tolerance) -> Result<Vector> {
    if y.nrows() != a.nrows() {
        return Err(Error::InvalidInput(format!(
            "vector length {} does not match matrix row count {}",
            y.nrows(),
            a.nrows()
        )));
    }
    ensure_finite_vec("vector", y)?;
    let basis = orthonormal_basis(a, tol)?;
    let mut residual = y - &basis * (basis.transpose() * y);
    residual -= &basis * (basis.transpose() * &residual);
    Ok(residual)
}

/// Lower-triangular factorization of a symmetric positive definite matrix
/// with an explicit pivot threshold.
///
/// Every pivot must exceed `spd_tol` times the largest diagonal entry of the
/// input; otherwise construction fails instead of returning a factor.
pub(crate) struct SpdFactor {
    l: Matrix,
    logdet: f64,
}

impl SpdFactor {
    pub(crate) fn new(v: &Matrix, tol: &Tolerance) -> Result<Self> {
        tol.validate()?;
        let n = v.nrows();
        if n == 0 || v.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "expected a nonempty square matrix, got {}x{}",
                v.nrows(),
                v.ncols()
            )));
        }
        ensure_finite("matrix", v)?;
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let asym = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .fold(0.0f64, |m, (i, j)| m.max((v[(i, j)] - v[(j, i)]).abs()));
        if asym > 1e-8 * scale.max(1e-300) {
            return Err(Error::InvalidInput(
                "matrix is not symmetric within working precision".into(),
            ));
        }
        let max_diag = (0..n).fold(f64::MIN, |m, i| m.max(v[(i, i)]));
        if max_diag <= 0.0 {
            return Err(Error::NotPositiveDefinite(
                "largest diagonal entry is not positive".into(),
            ));
        }
        let threshold = tol.spd_tol * max_diag;
        let mut l = Matrix::zeros(n, n);
        let mut logdet = 0.0;
        for j in 0..n {
            let mut d = v[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= threshold {
                return Err(Error::NotPositiveDefinite(format!(
                    "pivot {d:.3e} at index {j} is at or below the threshold {threshold:.3e}"
                )));
            }
            logdet += d.ln();
            let root = d.sqrt();
            l[(j, j)] = root;
            for i in (j + 1)..n {
                let mut s = v[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / root;
            }
        }
        Ok(SpdFactor { l, logdet })
    }

    pub(crate) fn logdet(&self) -> f64 {
        self.logdet
    }

    pub(crate) fn solve_vec(&self, b: &Vector) -> Vector {
        let n = self.l.nrows();
        let mut x = b.clone();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                x[i] -= lik * x[k];
            }
            x[i] /= self.l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                x[i] -= lki * x[k];
            }
            x[i] /= self.l[(i, i)];
        }
        x
    }

    pub(crate) fn solve_mat(&self, b: &Matrix) -> Matrix {
        let cols: Vec<_> = (0..b.ncols())
            .map(|j| self.solve_vec(&b.column(j).into_owned()))
            .collect();
        Matrix::from_columns(&cols)
    }
}

/// Log-determinant of a symmetric positive definite matrix via a triangular
/// factorization; fails if any pivot is at or below `spd_tol` times the
/// largest diagonal entry.
pub fn logdet_spd(v: &Matrix, tol: &Tolerance) -> Result<f64> {
    Ok(SpdFactor::new(v, tol)?.logdet())
}

/// Solves `V x = b` for symmetric positive definite `V`.
pub fn solve_spd(v: &Matrix, b: &Vector, tol: &Tolerance) -> Result<Vector> {
    if b.nrows() != v.nrows() {
        return Err(Error::InvalidInput(format!(
            "right-hand side length {} does not match matrix order {}",
            b.nrows(),
            v.nrows()
        )));
    }
    ensure_finite_vec("right-hand side", b)?;
    Ok(SpdFactor::new(v, tol)?.solve_vec(b))
}
