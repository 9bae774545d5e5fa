//! Report structures serialized as JSON to standard output. Field order is
//! fixed by the struct definitions and no report carries timestamps or other
//! run-varying state, so repeated runs on the same inputs are byte-identical.

use serde::Serialize;
use varcomp::{ExistenceCertificate, FitResult, KappaParams, Tolerance};

#[derive(Serialize)]
pub struct TolReport {
    pub rel_rank_tol: f64,
    pub spd_tol: f64,
}

impl From<Tolerance> for TolReport {
    fn from(tol: Tolerance) -> Self {
        TolReport {
            rel_rank_tol: tol.rel_rank_tol,
            spd_tol: tol.spd_tol,
        }
    }
}

#[derive(Serialize)]
pub struct CertificateReport {
    pub method: String,
    pub exists: bool,
    pub residual_norm: f64,
    pub rel_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_xz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub literal_reml_condition: Option<bool>,
}

impl From<&ExistenceCertificate> for CertificateReport {
    fn from(cert: &ExistenceCertificate) -> Self {
        CertificateReport {
            method: cert.kind.to_string(),
            exists: cert.exists,
            residual_norm: cert.residual_norm,
            rel_residual: cert.rel_residual,
            s_xz: cert.s_xz,
            lower_bound: cert.lower_bound,
            literal_reml_condition: cert.literal_reml_condition,
        }
    }
}

#[derive(Serialize)]
pub struct CheckReport {
    pub command: String,
    pub certificate: CertificateReport,
    pub tol: TolReport,
}

#[derive(Serialize)]
pub struct TracePoint {
    pub t: f64,
    pub value: f64,
}

#[derive(Serialize)]
pub struct FitReport {
    pub command: String,
    pub method: String,
    pub beta_hat: Vec<f64>,
    pub fitted_mean: Vec<f64>,
    pub sigma2_hat: Vec<f64>,
    pub criterion_value: f64,
    pub boundary_flags: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    pub certificate: CertificateReport,
    pub tol: TolReport,
}

impl FitReport {
    pub fn new(fit: &FitResult, tol: Tolerance) -> Self {
        FitReport {
            command: "fit".into(),
            method: fit.method.to_string(),
            beta_hat: fit.beta_hat.iter().copied().collect(),
            fitted_mean: fit.fitted_mean.iter().copied().collect(),
            sigma2_hat: fit.sigma2_hat.clone(),
            criterion_value: fit.criterion_value,
            boundary_flags: fit.boundary_flags.clone(),
            iterations: fit.iterations,
            converged: fit.converged,
            certificate: (&fit.certificate).into(),
            tol: tol.into(),
        }
    }
}

#[derive(Serialize)]
pub struct FitNonexistenceReport {
    pub command: String,
    pub method: String,
    pub certificate: CertificateReport,
    pub witness_trace: Vec<TracePoint>,
    pub tol: TolReport,
}

#[derive(Serialize)]
pub struct EigenvalueRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Serialize)]
pub struct ReconstructionCheck {
    pub kappa: Vec<f64>,
    pub rel_error: f64,
}

#[derive(Serialize)]
pub struct DecomposeReport {
    pub command: String,
    pub q: usize,
    pub block_eigenvalues: Vec<EigenvalueRange>,
    pub sum_eigenvalues: EigenvalueRange,
    pub reconstruction: Vec<ReconstructionCheck>,
    pub seed: u64,
    pub tol: TolReport,
}

#[derive(Serialize)]
pub struct MlProbePoint {
    pub beta: Vec<f64>,
    pub kappa0: f64,
    pub kappa: Vec<f64>,
}

impl From<&KappaParams> for MlProbePoint {
    fn from(params: &KappaParams) -> Self {
        MlProbePoint {
            beta: params.beta().iter().copied().collect(),
            kappa0: params.kappa0(),
            kappa: params.kappa().to_vec(),
        }
    }
}

#[derive(Serialize)]
#[serde(untagged)]
pub enum ProbeSequence {
    Ml(Vec<MlProbePoint>),
    Reml(Vec<Vec<f64>>),
}

#[derive(Serialize)]
pub struct ProbeReport {
    pub command: String,
    pub method: String,
    pub family: String,
    pub sequence: ProbeSequence,
    pub values: Vec<f64>,
    pub threshold: f64,
    pub contract_satisfied: bool,
    pub tol: TolReport,
}

#[derive(Serialize)]
pub struct SimulateReport {
    pub command: String,
    pub out: String,
    pub seed: u64,
    pub n: usize,
}

pub fn print_report<T: Serialize>(report: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(report)?);
    Ok(())
}
