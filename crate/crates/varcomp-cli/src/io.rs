//! Headerless CSV reading and writing for matrices and vectors. One matrix
//! row per line, comma-separated decimal floats; vectors are single-column
//! files. Parse diagnostics name the file and the one-based line.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use varcomp::{Matrix, Vector};

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read matrix file {}", path.display()))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (index, line) in text.lines().enumerate() {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            let value: f64 = field.parse().with_context(|| {
                format!(
                    "{}:{}: expected a decimal number, found {:?}",
                    path.display(),
                    line_no,
                    field
                )
            })?;
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                bail!(
                    "{}:{}: expected {} columns, found {}",
                    path.display(),
                    line_no,
                    w,
                    row.len()
                );
            }
            Some(_) => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{}: matrix file contains no rows", path.display());
    }
    let ncols = width.unwrap();
    Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_vector(path: &Path) -> Result<Vector> {
    let matrix = read_matrix(path)?;
    if matrix.ncols() != 1 {
        bail!(
            "{}: expected a single-column vector file, found {} columns",
            path.display(),
            matrix.ncols()
        );
    }
    Ok(Vector::from_iterator(
        matrix.nrows(),
        matrix.column(0).iter().copied(),
    ))
}

pub fn write_vector(path: &Path, v: &Vector) -> Result<()> {
    let mut text = String::new();
    for value in v.iter() {
        text.push_str(&format!("{value}\n"));
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
