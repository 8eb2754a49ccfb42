//! CSV import/export of fields. Values are written in shortest round-trip form.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{DualField, PrimalField};
use crate::mesh::Mesh;

/// Writes `i,j,x,y,<name>...` with one row per cell.
pub fn write_cell_columns(path: &Path, mesh: &Mesh, columns: &[(&str, &PrimalField)]) -> Result<()> {
    for (_, f) in columns {
        f.check(mesh)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["i", "j", "x", "y"];
    header.extend(columns.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    for c in 0..mesh.n_cells() {
        let (i, j) = mesh.cell_ij(c);
        let (x, y) = mesh.cell_center(i, j);
        let mut rec = vec![i.to_string(), j.to_string(), format!("{x:e}"), format!("{y:e}")];
        rec.extend(columns.iter().map(|(_, f)| format!("{:e}", f[c])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `i,j,x,y,<name>...` with one row per node.
pub fn write_node_columns(path: &Path, mesh: &Mesh, columns: &[(&str, &DualField)]) -> Result<()> {
    for (_, f) in columns {
        f.check(mesh)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["i", "j", "x", "y"];
    header.extend(columns.iter().map(|(n, _)| *n));
    w.write_record(&header)?;
    for k in 0..mesh.n_nodes() {
        let (i, j) = mesh.node_ij(k);
        let (x, y) = mesh.node_point(i, j);
        let mut rec = vec![i.to_string(), j.to_string(), format!("{x:e}"), format!("{y:e}")];
        rec.extend(columns.iter().map(|(_, f)| format!("{:e}", f[k])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_primal_csv(path: &Path, field: &PrimalField, mesh: &Mesh) -> Result<()> {
    write_cell_columns(path, mesh, &[("value", field)])
}

pub fn write_dual_csv(path: &Path, field: &DualField, mesh: &Mesh) -> Result<()> {
    write_node_columns(path, mesh, &[("value", field)])
}

/// Reads the `value` column (or the column named `column`) indexed by `i,j`.
fn read_values(path: &Path, column: &str, nx: usize, ny: usize) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::invalid(format!("{}: missing column {name:?}", path.display())))
    };
    let (ci, cj, cv) = (find("i")?, find("j")?, find(column)?);
    let mut out = vec![f64::NAN; nx * ny];
    let mut seen = vec![false; nx * ny];
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse_err = |what: &str| {
            Error::invalid(format!("{}: bad {what} on data line {}", path.display(), line + 1))
        };
        let i: usize = rec[ci].trim().parse().map_err(|_| parse_err("i"))?;
        let j: usize = rec[cj].trim().parse().map_err(|_| parse_err("j"))?;
        let v: f64 = rec[cv].trim().parse().map_err(|_| parse_err("value"))?;
        if i >= nx || j >= ny {
            return Err(Error::invalid(format!(
                "{}: index ({i}, {j}) outside {nx}x{ny}",
                path.display()
            )));
        }
        let k = i * ny + j;
        if seen[k] {
            return Err(Error::invalid(format!("{}: duplicate entry ({i}, {j})", path.display())));
        }
        seen[k] = true;
        out[k] = v;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::invalid(format!(
            "{}: missing entry ({}, {})",
            path.display(),
            k / ny,
            k % ny
        )));
    }
    Ok(out)
}

pub fn read_primal_csv(path: &Path, mesh: &Mesh, column: &str) -> Result<PrimalField> {
    PrimalField::from_vec(mesh, read_values(path, column, mesh.nx, mesh.ny)?)
}

pub fn read_dual_csv(path: &Path, mesh: &Mesh, column: &str) -> Result<DualField> {
    DualField::from_vec(mesh, read_values(path, column, mesh.nx + 1, mesh.ny + 1)?)
}
