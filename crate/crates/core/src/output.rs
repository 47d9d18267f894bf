//! Run artifacts: diagnostics CSV, legacy VTK snapshots and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::assembly::Discretization;
use crate::config::{config_to_toml, SimulationConfig};
use crate::diagnostics::{DiagnosticsRecord, RunStatus};
use crate::error::{Error, Result};
use crate::mesh::StructureCells;

pub const CSV_HEADER: [&str; 12] = [
    "step",
    "t",
    "kinetic_fluid",
    "kinetic_structure",
    "elastic",
    "total_energy",
    "energy_ratio",
    "energy_ineq_lhs",
    "area",
    "div_residual",
    "coupling_residual",
    "status",
];

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn record_fields(r: &DiagnosticsRecord) -> [String; 12] {
    [
        r.step.to_string(),
        fmt_f64(r.t),
        fmt_f64(r.kinetic_fluid),
        fmt_f64(r.kinetic_structure),
        fmt_f64(r.elastic),
        fmt_f64(r.total_energy),
        fmt_f64(r.energy_ratio),
        fmt_f64(r.energy_ineq_lhs),
        fmt_f64(r.area),
        fmt_f64(r.div_residual),
        fmt_f64(r.coupling_residual),
        r.status.as_str().to_string(),
    ]
}

/// Streaming diagnostics CSV writer; each row is flushed as it is written so
/// an aborted run leaves a readable partial file.
pub struct DiagnosticsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl DiagnosticsWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(file)
    }
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(CSV_HEADER).map_err(csv_err)?;
        inner.flush().map_err(|e| Error::invalid(format!("csv flush: {e}")))?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        self.inner.write_record(record_fields(record)).map_err(csv_err)?;
        self.inner.flush().map_err(|e| Error::invalid(format!("csv flush: {e}")))
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::invalid(format!("csv flush: {e}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

pub fn diagnostics_to_csv(records: &[DiagnosticsRecord]) -> Result<String> {
    let mut w = DiagnosticsWriter::new(Vec::new())?;
    for r in records {
        w.write(r)?;
    }
    String::from_utf8(w.into_inner()?).map_err(|e| Error::invalid(e.to_string()))
}

/// Parses a diagnostics CSV; the header must match [`CSV_HEADER`] exactly.
pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::invalid(format!("unexpected csv header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("row {}: bad {} value {:?}", line + 1, CSV_HEADER[i], &row[i])))
        };
        out.push(DiagnosticsRecord {
            step: row[0]
                .parse()
                .map_err(|_| Error::invalid(format!("row {}: bad step {:?}", line + 1, &row[0])))?,
            t: num(1)?,
            kinetic_fluid: num(2)?,
            kinetic_structure: num(3)?,
            elastic: num(4)?,
            total_energy: num(5)?,
            energy_ratio: num(6)?,
            energy_ineq_lhs: num(7)?,
            area: num(8)?,
            div_residual: num(9)?,
            coupling_residual: num(10)?,
            status: RunStatus::parse(&row[11])
                .ok_or_else(|| Error::invalid(format!("row {}: unknown status {:?}", line + 1, &row[11])))?,
        });
    }
    Ok(out)
}

pub fn read_diagnostics_csv(path: impl AsRef<Path>) -> Result<Vec<DiagnosticsRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_diagnostics_csv(&text)
}

/// Writes a table of preformatted cells as CSV.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fluid snapshot on the fine mesh: point velocity and cell pressure
/// (evaluated at each fine-triangle centroid).
pub fn write_fluid_vtk(out: &mut impl Write, disc: &Discretization, u: &[f64], p: &[f64], t: f64) -> std::io::Result<()> {
    let fluid = &disc.fluid;
    let vel = &disc.dofs.velocity;
    let np1 = fluid.n_coarse_vertices();
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "fluid t={}", fmt_f64(t))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", fluid.vertices.len())?;
    for v in &fluid.vertices {
        writeln!(out, "{} {} 0", v[0], v[1])?;
    }
    let nt = fluid.triangles.len();
    writeln!(out, "CELLS {} {}", nt, 4 * nt)?;
    for tri in &fluid.triangles {
        writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {}", fluid.vertices.len())?;
    writeln!(out, "VECTORS velocity double")?;
    for i in 0..fluid.vertices.len() {
        writeln!(out, "{} {} 0", u[vel.dof(0, i)], u[vel.dof(1, i)])?;
    }
    writeln!(out, "CELL_DATA {nt}")?;
    writeln!(out, "SCALARS pressure double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for (k, tri) in fluid.triangles.iter().enumerate() {
        let c = fluid.parent(k);
        let corners = fluid.coarse_corners(c);
        let v = tri.map(|i| fluid.vertices[i]);
        let centroid = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
        let lam = crate::mesh::barycentric(&corners, centroid);
        let ct = fluid.coarse_triangles[c];
        let value = lam[0] * p[ct[0]] + lam[1] * p[ct[1]] + lam[2] * p[ct[2]] + p[np1 + c];
        writeln!(out, "{value}")?;
    }
    Ok(())
}

/// Structure snapshot as POLYDATA lines (curves) or polygons (areas).
pub fn write_structure_vtk(out: &mut impl Write, disc: &Discretization, x: &[f64], t: f64) -> std::io::Result<()> {
    let positions = disc.dofs_to_positions(x);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "structure t={}", fmt_f64(t))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET POLYDATA")?;
    writeln!(out, "POINTS {} double", positions.len())?;
    for q in &positions {
        writeln!(out, "{} {} 0", q[0], q[1])?;
    }
    match &disc.structure.cells {
        StructureCells::Segments(segs) => {
            writeln!(out, "LINES {} {}", segs.len(), 3 * segs.len())?;
            for s in segs {
                writeln!(out, "2 {} {}", s[0], s[1])?;
            }
        }
        StructureCells::Triangles(tris) => {
            writeln!(out, "POLYGONS {} {}", tris.len(), 4 * tris.len())?;
            for tri in tris {
                writeln!(out, "3 {} {} {}", tri[0], tri[1], tri[2])?;
            }
        }
    }
    Ok(())
}

/// Writes `fluid_<step>.vtk` and `structure_<step>.vtk` into `dir`.
pub fn write_snapshot(dir: &Path, disc: &Discretization, step: usize, u: &[f64], p: &[f64], x: &[f64], t: f64) -> Result<Vec<PathBuf>> {
    let fluid_path = dir.join(format!("fluid_{step:06}.vtk"));
    let structure_path = dir.join(format!("structure_{step:06}.vtk"));
    let write = |path: &Path, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    };
    write(&fluid_path, &|w| write_fluid_vtk(w, disc, u, p, t))?;
    write(&structure_path, &|w| write_structure_vtk(w, disc, x, t))?;
    Ok(vec![fluid_path, structure_path])
}

/// JSON summary of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config: String,
    pub status: RunStatus,
    pub message: Option<String>,
    pub steps: usize,
    pub diagnostics_csv: String,
    pub vtk_files: Vec<String>,
    pub records: Vec<DiagnosticsRecord>,
}

impl RunManifest {
    pub fn new(config: &SimulationConfig) -> Self {
        Self {
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            config: config_to_toml(config),
            status: RunStatus::Running,
            message: None,
            steps: 0,
            diagnostics_csv: String::new(),
            vtk_files: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(step: usize) -> DiagnosticsRecord {
        DiagnosticsRecord {
            step,
            t: 0.1 * step as f64,
            kinetic_fluid: 1.0 / 3.0,
            kinetic_structure: 0.0,
            elastic: std::f64::consts::PI,
            total_energy: 1e-300,
            energy_ratio: 0.999_999_999_999_9,
            energy_ineq_lhs: -2.5e-17,
            area: 0.251_327_412_287_183_5,
            div_residual: 5e-324,
            coupling_residual: f64::INFINITY,
            status: RunStatus::EnergyBlowupDetected,
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let recs: Vec<_> = (1..4).map(sample).collect();
        let text = diagnostics_to_csv(&recs).unwrap();
        assert!(text.starts_with(&(CSV_HEADER.join(",") + "\n")));
        assert_eq!(parse_diagnostics_csv(&text).unwrap(), recs);
    }

    #[test]
    fn empty_csv_is_header_only() {
        let text = diagnostics_to_csv(&[]).unwrap();
        assert_eq!(text.trim_end(), CSV_HEADER.join(","));
        assert!(parse_diagnostics_csv(&text).unwrap().is_empty());
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(parse_diagnostics_csv("step,t\n1,0.1\n").is_err());
    }
}
