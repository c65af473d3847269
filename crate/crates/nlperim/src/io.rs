//! CSV tables, field import/export and run manifests. Column orders are
//! listed in FORMATS.md.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlperim_core::{Grid, ScalarField};
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Shortest round-trip decimal; empty for `None`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_table<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn field_header(dim: usize) -> Vec<String> {
    let mut h = vec!["cell".to_owned()];
    h.extend((1..=dim).map(|i| format!("x{i}")));
    h.push("value".into());
    h
}

/// `cell, x1..xd, value` for every cell, in cell order.
pub fn write_field<P: AsRef<Path>>(path: P, u: &ScalarField) -> CliResult<()> {
    let g = u.grid();
    let dim = g.dim();
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(field_header(dim))?;
    for cell in 0..g.len() {
        let c = g.center(cell);
        let mut rec = vec![cell.to_string()];
        rec.extend(c[..dim].iter().map(|&x| num(x)));
        rec.push(num(u.value(cell)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by [`write_field`] onto `grid`, checking the cell
/// count and every cell center.
pub fn read_field(path: &Path, grid: &Arc<Grid>) -> CliResult<ScalarField> {
    let dim = grid.dim();
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != field_header(dim) {
        return Err(CliError::io(format!(
            "{}: expected columns {:?}, found {header:?}",
            path.display(),
            field_header(dim)
        )));
    }
    let tol = 1e-9 * grid.spacing();
    let mut values = Vec::with_capacity(grid.len());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> CliResult<f64> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| CliError::io(format!("{} row {}: column {}: {e}", path.display(), row + 1, header[i])))
        };
        let cell: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| CliError::io(format!("{} row {}: cell: {e}", path.display(), row + 1)))?;
        if cell != row || cell >= grid.len() {
            return Err(CliError::io(format!(
                "{} row {}: cells must be listed in order 0..{}",
                path.display(),
                row + 1,
                grid.len()
            )));
        }
        let c = grid.center(cell);
        for k in 0..dim {
            if (parse(1 + k)? - c[k]).abs() > tol {
                return Err(CliError::io(format!(
                    "{} row {}: center does not match the configured grid",
                    path.display(),
                    row + 1
                )));
            }
        }
        values.push(parse(1 + dim)?);
    }
    if values.len() != grid.len() {
        return Err(CliError::io(format!(
            "{}: {} rows for a grid of {} cells",
            path.display(),
            values.len(),
            grid.len()
        )));
    }
    Ok(ScalarField::from_values(grid.clone(), values)?)
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// File holding the resolved config, overrides applied.
    pub config_file: String,
    pub config_sha256: String,
    pub overrides: Vec<String>,
    pub deterministic: bool,
    pub threads: usize,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

pub struct OutputDir {
    pub root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&root)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutputDir {
            root,
            written: Vec::new(),
        })
    }

    /// Path for `name`, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_owned());
        self.root.join(name)
    }

    pub fn outputs(&self) -> &[String] {
        &self.written
    }

    pub fn finish(self, resolved_toml: &str, mut manifest: Manifest) -> CliResult<()> {
        std::fs::write(self.root.join(&manifest.config_file), resolved_toml)?;
        manifest.outputs = self.written;
        let text = serde_json::to_string_pretty(&manifest).map_err(CliError::io)?;
        std::fs::write(self.root.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
