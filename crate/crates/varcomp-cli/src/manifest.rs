//! Model manifests: a JSON file naming the design matrices, the optional
//! observation file, tolerance overrides, a seed, and optional simulation
//! parameters. Paths inside the manifest resolve relative to the manifest's
//! directory; paths given on the command line resolve as written.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use varcomp::{build_model, Tolerance, VarCompModel, Vector};

use crate::io::{read_matrix, read_vector};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub x: String,
    pub z: Vec<String>,
    pub y: Option<String>,
    pub tol: Option<TolOverride>,
    pub seed: Option<u64>,
    pub sim: Option<SimParams>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolOverride {
    pub rel_rank_tol: Option<f64>,
    pub spd_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub beta: Vec<f64>,
    pub sigma2: Vec<f64>,
}

/// Defaults, then manifest overrides, then the `--tol` flag on the relative
/// rank tolerance.
fn resolve_tolerance(overrides: Option<&TolOverride>, tol_flag: Option<f64>) -> Tolerance {
    let mut tol = Tolerance::default();
    if let Some(overrides) = overrides {
        if let Some(v) = overrides.rel_rank_tol {
            tol.rel_rank_tol = v;
        }
        if let Some(v) = overrides.spd_tol {
            tol.spd_tol = v;
        }
    }
    if let Some(v) = tol_flag {
        tol.rel_rank_tol = v;
    }
    tol
}

pub struct LoadedModel {
    pub model: VarCompModel,
    pub manifest: Manifest,
    tol: Tolerance,
    dir: PathBuf,
}

impl LoadedModel {
    /// The effective tolerance the model was loaded with.
    pub fn tolerance(&self) -> Tolerance {
        self.tol
    }

    /// Loads the observation: the `--y` flag wins over the manifest entry.
    pub fn observation(&self, y_flag: Option<&Path>) -> Result<Vector> {
        let path = match (y_flag, &self.manifest.y) {
            (Some(flag), _) => flag.to_path_buf(),
            (None, Some(entry)) => self.dir.join(entry),
            (None, None) => bail!(
                "no observation given: the manifest has no \"y\" entry and --y was not passed"
            ),
        };
        read_vector(&path)
    }

    /// Effective seed: the `--seed` flag, then the manifest, then zero.
    pub fn seed(&self, seed_flag: Option<u64>) -> u64 {
        seed_flag.or(self.manifest.seed).unwrap_or(0)
    }
}

pub fn load(path: &Path, tol_flag: Option<f64>) -> Result<LoadedModel> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse manifest {}", path.display()))?;
    if manifest.z.is_empty() {
        bail!(
            "{}: manifest must name at least one random-effect block file",
            path.display()
        );
    }
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let tol = resolve_tolerance(manifest.tol.as_ref(), tol_flag);
    let x = read_matrix(&dir.join(&manifest.x))?;
    let z_blocks = manifest
        .z
        .iter()
        .map(|name| read_matrix(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    let model = build_model(x, z_blocks, &tol)?;
    Ok(LoadedModel {
        model,
        manifest,
        tol,
        dir,
    })
}
