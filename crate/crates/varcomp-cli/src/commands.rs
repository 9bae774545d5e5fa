//! One function per CLI verb. Each loads the manifest, runs the library,
//! prints a JSON report to standard output and a one-line summary to
//! standard error, and returns the exit code.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use varcomp::{
    divergence_probe_ml, divergence_probe_reml, fit_ml, fit_reml, ml_exists, ml_probe_sequence,
    probe_contract, reml_contrast_matrix, reml_exists, reml_probe_sequence,
    scaled_cov_decomposition, scaled_covariance, simulate, witness_trace, Error, FitOptions,
    Matrix, Method, ProbeFamily, SigmaParams, Vector, DEFAULT_PROBE_LEN,
};

use crate::io::write_vector;
use crate::manifest::load;
use crate::report::{
    print_report, CertificateReport, CheckReport, DecomposeReport, EigenvalueRange,
    FitNonexistenceReport, FitReport, MlProbePoint, ProbeReport, ProbeSequence,
    ReconstructionCheck, SimulateReport, TracePoint,
};

#[derive(Args)]
pub struct CommonArgs {
    /// Path to the model manifest (JSON)
    #[arg(long)]
    pub model: PathBuf,
    /// Observation file (single-column CSV); overrides the manifest entry
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Relative rank tolerance override
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Criterion to minimize
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Iteration cap per start
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Number of multistart points
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Args)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Seed for the random reconstruction checks
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Criterion to probe
    #[arg(long, value_enum)]
    pub method: MethodArg,
    /// Escape direction family
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    /// Growth threshold the last probe value must exceed
    /// (default: first value + 100)
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Seed override for the draw
    #[arg(long)]
    pub seed: Option<u64>,
    /// Destination file for the simulated observation (single-column CSV)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Ml,
    Reml,
}

impl From<MethodArg> for Method {
    fn from(arg: MethodArg) -> Self {
        match arg {
            MethodArg::Ml => Method::Ml,
            MethodArg::Reml => Method::Reml,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Kappa0Down,
    Kappa0Up,
    KappaUp,
    BetaUp,
}

impl From<FamilyArg> for ProbeFamily {
    fn from(arg: FamilyArg) -> Self {
        match arg {
            FamilyArg::Kappa0Down => ProbeFamily::Kappa0Down,
            FamilyArg::Kappa0Up => ProbeFamily::Kappa0Up,
            FamilyArg::KappaUp => ProbeFamily::KappaUp,
            FamilyArg::BetaUp => ProbeFamily::BetaUp,
        }
    }
}

pub fn check(args: &CommonArgs, method: Method) -> Result<i32> {
    let loaded = load(&args.model, args.tol)?;
    let tol = loaded.tolerance();
    let y = loaded.observation(args.y.as_deref())?;
    let certificate = match method {
        Method::Ml => ml_exists(&loaded.model, &y, &tol)?,
        Method::Reml => reml_exists(&loaded.model, &y, &tol)?,
    };
    let exists = certificate.exists;
    let report = CheckReport {
        command: format!("check-{method}"),
        certificate: (&certificate).into(),
        tol: tol.into(),
    };
    print_report(&report)?;
    eprintln!(
        "{method} estimate: exists={exists} (residual_norm={:.6e}, rel_residual={:.6e})",
        certificate.residual_norm, certificate.rel_residual
    );
    Ok(if exists { 0 } else { 3 })
}

pub fn fit(args: &FitArgs) -> Result<i32> {
    let loaded = load(&args.common.model, args.common.tol)?;
    let tol = loaded.tolerance();
    let y = loaded.observation(args.common.y.as_deref())?;
    let method: Method = args.method.into();
    let mut opts = FitOptions::default();
    if let Some(max_iters) = args.max_iters {
        opts.max_iters = max_iters;
    }
    opts.starts = args.starts.or(opts.starts);
    let result = match method {
        Method::Ml => fit_ml(&loaded.model, &y, &opts, &tol),
        Method::Reml => fit_reml(&loaded.model, &y, &opts, &tol),
    };
    match result {
        Ok(fit) => {
            let report = FitReport::new(&fit, tol);
            print_report(&report)?;
            let sigma2 = fit
                .sigma2_hat
                .iter()
                .map(|v| format!("{v:.12e}"))
                .collect::<Vec<_>>()
                .join(", ");
            eprintln!(
                "{method} fit: criterion={:.12e}, sigma2=[{sigma2}], iterations={}, converged={}",
                fit.criterion_value, fit.iterations, fit.converged
            );
            Ok(if fit.converged { 0 } else { 4 })
        }
        Err(Error::Nonexistence {
            certificate,
            witness,
        }) => {
            let witness_points = match witness.as_deref() {
                Some(ray) => {
                    let values = witness_trace(&loaded.model, &y, ray, &tol)?;
                    ray.t_grid()
                        .iter()
                        .zip(values)
                        .map(|(&t, value)| TracePoint { t, value })
                        .collect()
                }
                None => Vec::new(),
            };
            let report = FitNonexistenceReport {
                command: "fit".into(),
                method: method.to_string(),
                certificate: CertificateReport::from(certificate.as_ref()),
                witness_trace: witness_points,
                tol: tol.into(),
            };
            print_report(&report)?;
            eprintln!(
                "{method} fit aborted: the estimate does not exist \
                 (rel_residual={:.6e}); the criterion is unbounded below",
                certificate.rel_residual
            );
            Ok(3)
        }
        Err(other) => Err(other.into()),
    }
}

fn eigen_range(matrix: &Matrix) -> EigenvalueRange {
    let eigenvalues = matrix.clone().symmetric_eigen().eigenvalues;
    EigenvalueRange {
        min: eigenvalues.min(),
        max: eigenvalues.max(),
    }
}

pub fn decompose(args: &DecomposeArgs) -> Result<i32> {
    let loaded = load(&args.common.model, args.common.tol)?;
    let tol = loaded.tolerance();
    let seed = loaded.seed(args.seed);
    let decomposition = scaled_cov_decomposition(&loaded.model, &tol)?;
    let block_eigenvalues: Vec<EigenvalueRange> =
        decomposition.a_blocks().iter().map(eigen_range).collect();
    let q = decomposition.q();
    let mut sum = Matrix::zeros(q, q);
    for block in decomposition.a_blocks() {
        sum += block;
    }
    let sum_eigenvalues = eigen_range(&sum);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut reconstruction = Vec::with_capacity(3);
    for _ in 0..3 {
        let kappa: Vec<f64> = (0..loaded.model.r())
            .map(|_| 10f64.powf(rng.random_range(-3.0..3.0)))
            .collect();
        let rebuilt = decomposition.reconstruct(&kappa)?;
        let direct = scaled_covariance(&loaded.model, &kappa)?;
        let rel_error = (&rebuilt - &direct).amax() / direct.amax();
        reconstruction.push(ReconstructionCheck { kappa, rel_error });
    }
    let max_rel_error = reconstruction
        .iter()
        .map(|check| check.rel_error)
        .fold(0.0f64, f64::max);
    let report = DecomposeReport {
        command: "decompose".into(),
        q,
        block_eigenvalues,
        sum_eigenvalues,
        reconstruction,
        seed,
        tol: tol.into(),
    };
    print_report(&report)?;
    eprintln!("decomposition: q={q}, max reconstruction rel_error={max_rel_error:.3e}");
    Ok(0)
}

pub fn probe(args: &ProbeArgs) -> Result<i32> {
    let loaded = load(&args.common.model, args.common.tol)?;
    let tol = loaded.tolerance();
    let y = loaded.observation(args.common.y.as_deref())?;
    let method: Method = args.method.into();
    let family: ProbeFamily = args.family.into();
    let (sequence, values) = match method {
        Method::Ml => {
            let sequence = ml_probe_sequence(&loaded.model, &y, family, DEFAULT_PROBE_LEN, &tol)?;
            let values = divergence_probe_ml(&loaded.model, &y, &sequence, &tol)?;
            let points = sequence.iter().map(MlProbePoint::from).collect();
            (ProbeSequence::Ml(points), values)
        }
        Method::Reml => {
            let sequence = reml_probe_sequence(&loaded.model, family, DEFAULT_PROBE_LEN, &tol)?;
            let basis = reml_contrast_matrix(loaded.model.x(), &tol)?;
            let values = divergence_probe_reml(&loaded.model, &y, &sequence, &basis, &tol)?;
            (ProbeSequence::Reml(sequence), values)
        }
    };
    let threshold = args.threshold.unwrap_or(values[0] + 100.0);
    let contract_satisfied = probe_contract(&values, threshold);
    let first = values[0];
    let last = *values.last().unwrap();
    let report = ProbeReport {
        command: "probe".into(),
        method: method.to_string(),
        family: family.to_string(),
        sequence,
        values,
        threshold,
        contract_satisfied,
        tol: tol.into(),
    };
    print_report(&report)?;
    eprintln!(
        "{method} probe {family}: first={first:.6e}, last={last:.6e}, \
         threshold={threshold:.6e}, contract={contract_satisfied}"
    );
    Ok(if contract_satisfied { 0 } else { 5 })
}

pub fn run_simulate(args: &SimulateArgs) -> Result<i32> {
    let loaded = load(&args.common.model, args.common.tol)?;
    let seed = loaded.seed(args.seed);
    let sim = loaded
        .manifest
        .sim
        .as_ref()
        .context("manifest lacks a \"sim\" section with beta and sigma2")?;
    if args.common.y.is_some() {
        bail!("simulate generates the observation; --y is not accepted");
    }
    let params = SigmaParams::new(Vector::from_vec(sim.beta.clone()), sim.sigma2.clone())?;
    let y = simulate(&loaded.model, &params, seed)?;
    write_vector(&args.out, &y)?;
    let report = SimulateReport {
        command: "simulate".into(),
        out: args.out.display().to_string(),
        seed,
        n: y.nrows(),
    };
    print_report(&report)?;
    eprintln!(
        "simulate: wrote {} observations to {} (seed {seed})",
        y.nrows(),
        args.out.display()
    );
    Ok(0)
}
