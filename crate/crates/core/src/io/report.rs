//! CSV outputs of a run. Floats are written with `{}` so they round-trip exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{DipoleResult, FieldSummary};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::solver::TraceEntry;

use super::field_io::write_field;

pub const SUMMARY_COLUMNS: [&str; 8] = [
    "energy",
    "h_norm_sq",
    "nehari_residual",
    "grad_residual",
    "iterations",
    "nodal_total",
    "symmetry_residual",
    "decay_metric",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub energy: f64,
    pub h_norm_sq: f64,
    pub nehari_residual: f64,
    pub grad_residual: f64,
    /// Unknown when a stored field is analyzed after the fact.
    pub iterations: Option<usize>,
    pub nodal_total: usize,
    pub symmetry_residual: f64,
    pub decay_metric: f64,
}

impl SummaryRow {
    pub fn from_summary(s: &FieldSummary, iterations: Option<usize>) -> Self {
        Self {
            energy: s.energy,
            h_norm_sq: s.h_norm_sq,
            nehari_residual: s.nehari_residual,
            grad_residual: s.grad_residual,
            iterations,
            nodal_total: s.nodal.total,
            symmetry_residual: s.symmetry_residual,
            decay_metric: s.decay_metric,
        }
    }

    fn to_csv(&self) -> String {
        let iters = self.iterations.map(|i| i.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.energy,
            self.h_norm_sq,
            self.nehari_residual,
            self.grad_residual,
            iters,
            self.nodal_total,
            self.symmetry_residual,
            self.decay_metric
        )
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = SUMMARY_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty summary file".into()))?;
    if header.split(',').collect::<Vec<_>>() != SUMMARY_COLUMNS {
        return Err(Error::Format(format!("unexpected summary header `{header}`")));
    }
    let num = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|_| Error::Format(format!("summary line {line}: `{s}` is not a number")))
    };
    let int = |s: &str, line: usize| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("summary line {line}: `{s}` is not an integer")))
    };
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 2;
        let c: Vec<&str> = l.split(',').collect();
        if c.len() != SUMMARY_COLUMNS.len() {
            return Err(Error::Format(format!(
                "summary line {line}: expected 8 columns, found {}",
                c.len()
            )));
        }
        rows.push(SummaryRow {
            energy: num(c[0], line)?,
            h_norm_sq: num(c[1], line)?,
            nehari_residual: num(c[2], line)?,
            grad_residual: num(c[3], line)?,
            iterations: if c[4].is_empty() { None } else { Some(int(c[4], line)?) },
            nodal_total: int(c[5], line)?,
            symmetry_residual: num(c[6], line)?,
            decay_metric: num(c[7], line)?,
        });
    }
    Ok(rows)
}

pub fn write_trace(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut out = String::from("iteration,energy,residual,h_norm_sq,nehari_residual\n");
    for t in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.iteration, t.energy, t.residual, t.h_norm_sq, t.nehari_residual
        );
    }
    write_text(path, &out)
}

pub fn write_timing(path: &Path, phases: &[(String, f64)]) -> Result<()> {
    let mut out = String::from("phase,seconds\n");
    for (name, secs) in phases {
        let _ = writeln!(out, "{name},{secs}");
    }
    write_text(path, &out)
}

pub fn write_dipole_csv(path: &Path, rows: &[DipoleResult]) -> Result<()> {
    let mut out = String::from("separation,energy,two_c,gap,overlap\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.separation, r.energy, r.two_c, r.gap, r.overlap);
    }
    write_text(path, &out)
}

/// Mid-plane cuts through the box: `x1x2`, `x1y1` and `y1y2` where the grid
/// has the axes. All other axes sit at their middle index.
pub fn write_slices(dir: &Path, u: &Field) -> Result<Vec<PathBuf>> {
    let spec = u.spec();
    let m = spec.confined_dims();
    let nd = spec.total_dims();
    let mut planes = Vec::new();
    if m >= 2 {
        planes.push(("x1x2", 0, 1));
    }
    if m >= 1 && nd > m {
        planes.push(("x1y1", 0, m));
    }
    if nd >= m + 2 {
        planes.push(("y1y2", m, m + 1));
    }
    let mut written = Vec::new();
    let mut idx: Vec<usize> = spec.points_per_axis().iter().map(|&n| n / 2).collect();
    for (name, a, b) in planes {
        let mut out = String::from("a,b,value\n");
        for i in 0..spec.points(a) {
            for j in 0..spec.points(b) {
                idx[a] = i;
                idx[b] = j;
                let v = u.values()[spec.flat_index(&idx)];
                let _ = writeln!(out, "{},{},{}", spec.coordinate(a, i), spec.coordinate(b, j), v);
            }
        }
        idx[a] = spec.points(a) / 2;
        idx[b] = spec.points(b) / 2;
        let path = dir.join("slices").join(format!("{name}.csv"));
        write_text(&path, &out)?;
        written.push(path);
    }
    Ok(written)
}

/// Whatever a command produced; `emit_report` writes the parts that are present.
#[derive(Default)]
pub struct RunOutputs<'a> {
    pub field: Option<&'a Field>,
    pub summary: Vec<SummaryRow>,
    pub trace: Option<&'a [TraceEntry]>,
    pub timing: Vec<(String, f64)>,
    pub dipole: Option<&'a [DipoleResult]>,
    pub slices: bool,
}

pub fn emit_report(dir: &Path, outputs: &RunOutputs<'_>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if !outputs.summary.is_empty() {
        let p = dir.join("summary.csv");
        write_summary(&p, &outputs.summary)?;
        written.push(p);
    }
    if let Some(trace) = outputs.trace {
        let p = dir.join("trace.csv");
        write_trace(&p, trace)?;
        written.push(p);
    }
    if !outputs.timing.is_empty() {
        let p = dir.join("timing.csv");
        write_timing(&p, &outputs.timing)?;
        written.push(p);
    }
    if let Some(d) = outputs.dipole {
        let p = dir.join("dipole.csv");
        write_dipole_csv(&p, d)?;
        written.push(p);
    }
    if let Some(u) = outputs.field {
        if outputs.slices {
            written.extend(write_slices(dir, u)?);
        }
        let p = dir.join("field.nlsf");
        write_field(&p, u)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::sync::Arc;

    fn row(iterations: Option<usize>) -> SummaryRow {
        SummaryRow {
            energy: 1.0 / 3.0,
            h_norm_sq: 2.5e-17,
            nehari_residual: -1e-300,
            grad_residual: 0.1,
            iterations,
            nodal_total: 2,
            symmetry_residual: 0.0,
            decay_metric: f64::MIN_POSITIVE,
        }
    }

    #[test]
    fn summary_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("summary.csv");
        let rows = vec![row(Some(17)), row(None)];
        write_summary(&p, &rows).unwrap();
        assert_eq!(read_summary(&p).unwrap(), rows);
    }

    #[test]
    fn slices_follow_the_axes_present() {
        let dir = tempfile::tempdir().unwrap();
        let spec = Arc::new(GridSpec::new(3, 2, &[1.0], &[5, 5, 7]).unwrap());
        let u = Field::from_fn(&spec, |z| z[0] + 10.0 * z[1] + 100.0 * z[2]);
        let paths = write_slices(dir.path(), &u).unwrap();
        let names: Vec<_> = paths
            .iter()
            .map(|p| p.file_name().unwrap().to_str().unwrap().to_owned())
            .collect();
        assert_eq!(names, ["x1x2.csv", "x1y1.csv"]);
        let text = fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(text.lines().count(), 1 + 5 * 7);
        // x2 = 0 at the mid index, so value = a + 100 b
        for l in text.lines().skip(1) {
            let c: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            assert!((c[2] - (c[0] + 100.0 * c[1])).abs() < 1e-12);
        }
    }
}
