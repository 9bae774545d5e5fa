//! Error taxonomy shared by every module in the crate.
//!
//! The variants map one-to-one onto the failure classes surfaced to callers:
//! malformed inputs, violated model assumptions, parameters outside the
//! admissible domain, factorization failures, rank deficiency, degenerate
//! residuals, certified nonexistence, and violated operation preconditions.

use crate::existence::{ExistenceCertificate, WitnessRay};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes reported by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Structurally invalid input: dimension mismatch, non-finite entries,
    /// empty block lists, and similar.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model-level assumption is violated (for example the total number of
    /// random-effect columns reaching the number of observations).
    #[error("model assumption violated: {0}")]
    ModelAssumption(String),

    /// A parameter vector lies outside its admissible domain.
    #[error("parameter outside domain: {0}")]
    ParameterDomain(String),

    /// A symmetric factorization hit a pivot at or below the positivity
    /// threshold; the matrix is not numerically positive definite.
    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A matrix that must have full column rank does not.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// The fitted residual quadratic form is numerically zero; the
    /// observation sits in the critical subspace at the evaluated point.
    /// Callers should consult the existence certificate.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// The estimate does not exist; carries the certificate and, when the
    /// observation is nonzero, a witness ray along which the criterion
    /// diverges to negative infinity.
    #[error("estimate does not exist: observation lies in the critical subspace")]
    Nonexistence {
        certificate: Box<ExistenceCertificate>,
        witness: Option<Box<WitnessRay>>,
    },

    /// An operation was invoked outside its stated precondition (for example
    /// requesting a nonexistence witness when the estimate exists).
    #[error("precondition violated: {0}")]
    Precondition(String),
}
