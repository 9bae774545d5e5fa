//! Likelihood analysis for Gaussian variance components models.
//!
//! The model is `y = X beta + Z_1 u_1 + ... + Z_r u_r + e` with independent
//! Gaussian effects, giving the covariance
//! `V = sigma_0^2 I + sum_i sigma_i^2 Z_i Z_i'`. This crate evaluates the ML
//! and REML criteria (as `-2 log`-likelihoods up to constants), certifies
//! whether the corresponding estimates exist, demonstrates the divergence or
//! unboundedness of the criteria along explicit parameter rays, and fits the
//! model when the estimate exists.
//!
//! Existence is a geometric question: the ML estimate exists exactly when
//! the observation escapes the column space of `[X Z]`, and the REML
//! estimate obeys the matching condition in the contrast coordinates.
//! [`existence`] decides it with certificates, produces witness rays along
//! which the criterion provably sinks to minus infinity in the nonexistence
//! case, and probes every escape direction for divergence to plus infinity
//! in the existence case. [`likelihood`] evaluates the criteria and their
//! profiled forms; [`spectral`] supplies the reduced representations that
//! stay numerically factorizable at extreme parameter values; [`estimator`]
//! minimizes the profiled criteria over the ratio orthant; [`batch`] fans
//! independent evaluations over a thread pool behind the `parallel` feature.

pub mod batch;
pub mod error;
pub mod estimator;
pub mod existence;
pub mod likelihood;
pub mod model;
pub mod numerics;
pub mod spectral;

pub use error::{Error, Result};
pub use estimator::{fit_ml, fit_reml, fit_reml_with_basis, FitOptions, FitResult};
pub use existence::{
    default_t_grid, divergence_probe_ml, divergence_probe_reml, ml_exists, ml_lower_bound,
    ml_probe_sequence, nonexistence_witness, probe_contract, reml_exists,
    reml_nonexistence_witness, reml_probe_sequence, residual_projector, s_xz, witness_trace,
    ExistenceCertificate, Method, ProbeFamily, WitnessRay, DEFAULT_PROBE_LEN,
};
pub use likelihood::{
    gls_beta, neg2_loglik, neg2_loglik_kappa, profile_kappa0, profiled_criterion,
    reml_contrast_matrix, reml_criterion, RemlBasis,
};
pub use model::{
    build_model, covariance, kappa_to_sigma, scaled_covariance, sigma_to_kappa, simulate,
    KappaParams, SigmaParams, VarCompModel,
};
pub use numerics::{Matrix, Tolerance, Vector};
pub use spectral::{
    equal_kappa_diagonalization, scaled_cov_decomposition, DecompositionResult, EqualKappaResult,
};
