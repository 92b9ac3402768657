//! Output artifacts: legacy VTK meshes, CSV run logs and key=value summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::adaptivity::{fit_rate, RunLog};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// VTK cell type of a linear triangle.
const VTK_TRIANGLE: u8 = 5;

/// Writes `mesh` with vertex fields `point` and per-triangle fields `cell` as
/// a legacy ASCII unstructured grid. Output depends only on the inputs.
pub fn write_vtk<W: Write>(
    out: &mut W,
    mesh: &Mesh,
    point: &[(&str, &[f64])],
    cell: &[(&str, &[f64])],
) -> Result<()> {
    let (nv, nt) = (mesh.num_vertices(), mesh.num_triangles());
    for (_, v) in point {
        check_len("VTK point field", nv, v.len())?;
    }
    for (_, v) in cell {
        check_len("VTK cell field", nt, v.len())?;
    }
    writeln!(out, "# vtk DataFile Version 2.0")?;
    writeln!(out, "gapfem")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {nv} double")?;
    for v in 0..nv {
        let p = mesh.vertex(v);
        writeln!(out, "{} {} 0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {nt} {}", 4 * nt)?;
    for t in 0..nt {
        let [a, b, c] = mesh.triangle(t);
        writeln!(out, "3 {a} {b} {c}")?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "{VTK_TRIANGLE}")?;
    }
    write_scalars(out, "POINT_DATA", nv, point)?;
    write_scalars(out, "CELL_DATA", nt, cell)?;
    Ok(())
}

fn write_scalars<W: Write>(out: &mut W, section: &str, n: usize, fields: &[(&str, &[f64])]) -> Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    writeln!(out, "{section} {n}")?;
    for (name, values) in fields {
        writeln!(out, "SCALARS {} double 1", name.replace(char::is_whitespace, "_"))?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in values.iter() {
            writeln!(out, "{v}")?;
        }
    }
    Ok(())
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { what, expected, got });
    }
    Ok(())
}

pub fn export_vtk(
    path: &Path,
    mesh: &Mesh,
    point: &[(&str, &[f64])],
    cell: &[(&str, &[f64])],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_vtk(&mut out, mesh, point, cell)?;
    out.flush()?;
    Ok(())
}

/// One row per record: `n, ell, gamma, nrdof, eta_sq, <terms>, dgamma,
/// newton_iters, action`.
pub fn write_csv<W: Write>(out: W, log: &RunLog) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let terms = log.term_names();
    let mut header = vec!["n", "ell", "gamma", "nrdof", "eta_sq"];
    header.extend(&terms);
    header.extend(["dgamma", "newton_iters", "action"]);
    w.write_record(&header).map_err(csv_error)?;
    for r in &log.records {
        let mut row = vec![
            r.n.to_string(),
            r.ell.to_string(),
            r.gamma.to_string(),
            r.nrdof.to_string(),
            r.eta_sq.to_string(),
        ];
        row.extend(r.terms.iter().map(|(_, v)| v.to_string()));
        row.extend([r.dgamma.to_string(), r.newton_iterations.to_string(), r.action.name().to_string()]);
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// `key=value` lines describing a run: the final estimator and the fitted
/// rate of every penalty segment. Keys are prefixed with `prefix.`.
pub fn summary_lines(prefix: &str, log: &RunLog) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut put = |k: &str, v: String| out.push((format!("{prefix}.{k}"), v));
    put("records", log.records.len().to_string());
    if let Some(last) = log.records.last() {
        put("final_eta_sq", last.eta_sq.to_string());
        put("final_gamma", last.gamma.to_string());
        put("final_nrdof", last.nrdof.to_string());
        put("final_action", last.action.name().to_string());
    }
    let segments = log.segments();
    put("segments", segments.len().to_string());
    for (i, seg) in segments.iter().enumerate() {
        let fit = fit_rate(seg);
        put(&format!("segment.{i}.gamma"), seg[0].gamma.to_string());
        put(&format!("segment.{i}.points"), fit.points.to_string());
        put(&format!("segment.{i}.rate"), fit.rate.to_string());
        put(&format!("segment.{i}.degenerate"), fit.degenerate.to_string());
    }
    let fit = segments.last().map(|s| fit_rate(s));
    put("rate", fit.map_or(0.0, |f| f.rate).to_string());
    put("rate_degenerate", fit.is_none_or(|f| f.degenerate).to_string());
    out
}

pub fn write_summary<W: Write>(out: &mut W, lines: &[(String, String)]) -> Result<()> {
    for (k, v) in lines {
        writeln!(out, "{k}={v}")?;
    }
    Ok(())
}
