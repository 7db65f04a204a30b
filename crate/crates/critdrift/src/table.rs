//! Field tables: one CSV row per node with `x,y,z` followed by the values.

use std::path::Path;
use std::sync::Arc;

use critdrift_core::field::VectorField;
use critdrift_core::lorentz::ScalarField;
use critdrift_core::Grid;

use crate::{CliError, Result};

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "z", "value"])?;
    for (x, v) in f.grid().coords().iter().zip(f.values()) {
        w.write_record([x[0], x[1], x[2], *v].map(|c| c.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_vector(path: &Path, b: &VectorField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "z", "b1", "b2", "b3"])?;
    for (x, v) in b.grid().coords().iter().zip(b.components()) {
        w.write_record([x[0], x[1], x[2], v[0], v[1], v[2]].map(|c| c.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn bad(path: &Path, reason: impl Into<String>) -> CliError {
    CliError::Parse { what: "field table", input: path.display().to_string(), reason: reason.into() }
}

/// Reads a table back onto `grid`; every node must appear exactly once.
pub fn read_columns(path: &Path, grid: &Arc<Grid>, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = vec![None; grid.len()];
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 + width {
            return Err(bad(path, format!("expected {} columns, found {}", 3 + width, rec.len())));
        }
        let nums: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad(path, format!("`{s}` is not a number"))))
            .collect::<Result<_>>()?;
        let x = [nums[0], nums[1], nums[2]];
        let node = grid.node_at(grid.cell_of(&x)).ok_or_else(|| bad(path, "row outside the grid"))?;
        if out[node].is_some() {
            return Err(bad(path, "duplicate node"));
        }
        out[node] = Some(nums[3..].to_vec());
    }
    out.into_iter().map(|v| v.ok_or_else(|| bad(path, "missing node"))).collect()
}

pub fn read_scalar(path: &Path, grid: &Arc<Grid>) -> Result<ScalarField> {
    let cols = read_columns(path, grid, 1)?;
    Ok(ScalarField::new(grid.clone(), cols.into_iter().map(|v| v[0]).collect())?)
}

pub fn read_vector(path: &Path, grid: &Arc<Grid>) -> Result<VectorField> {
    let cols = read_columns(path, grid, 3)?;
    Ok(VectorField::new(grid.clone(), cols.into_iter().map(|v| [v[0], v[1], v[2]]).collect())?)
}
