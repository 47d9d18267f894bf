//! Benchmark drivers behind the command-line tool: single runs, stability
//! sweeps, convergence studies and the mass-conservation comparison.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{GeometryPreset, Scheme, SimulationConfig, SweepSpec};
use crate::diagnostics::{fit_rate, pressure_l2_error, structure_l2_error, velocity_l2_error, RunStatus};
use crate::error::{Error, Result};
use crate::output::{fmt_f64, write_snapshot, write_table, DiagnosticsWriter, RunManifest};
use crate::schemes::{Simulation, Trajectory};

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs one simulation, writing `diagnostics.csv`, `manifest.json` and
/// optional VTK snapshots into `out`.
///
/// A snapshot is written for the first state whose time lies within half a
/// step of each requested time. The CSV is flushed row by row, so a run that
/// fails with an error leaves the rows written so far.
pub fn cmd_run(config: &SimulationConfig, out: &Path, vtk_times: &[f64]) -> Result<RunManifest> {
    create_dir(out)?;
    let csv_path = out.join("diagnostics.csv");
    let mut csv = DiagnosticsWriter::create(&csv_path)?;
    let mut manifest = RunManifest::new(config);
    manifest.diagnostics_csv = "diagnostics.csv".into();

    let mut sim = Simulation::new(config.clone())?;
    let mut pending: Vec<f64> = vtk_times.to_vec();
    let vtk_dir = out.join("vtk");
    if !pending.is_empty() {
        create_dir(&vtk_dir)?;
    }
    let half = 0.5 * config.dt;
    let mut vtk_files = Vec::new();
    let disc = sim.disc.clone();
    let traj = sim.run_with(false, |state, rec| {
        if let Some(r) = rec {
            csv.write(r)?;
        }
        let due = pending.iter().any(|&t| (t - state.t).abs() <= half);
        if due {
            pending.retain(|&t| (t - state.t).abs() > half);
            for p in write_snapshot(&vtk_dir, &disc, state.step, &state.u, &state.p, &state.x, state.t)? {
                vtk_files.push(p.strip_prefix(out).unwrap_or(&p).display().to_string());
            }
        }
        Ok(())
    })?;
    manifest.status = traj.status;
    manifest.message = traj.message.clone();
    manifest.steps = traj.records.len();
    manifest.records = traj.records;
    manifest.vtk_files = vtk_files;
    manifest.write(out.join("manifest.json"))?;
    Ok(manifest)
}

/// One (scheme, dt, h_x, h_s, delta_rho) cell of a stability map.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityCell {
    pub scheme: Scheme,
    pub dt: f64,
    pub h_x: f64,
    pub h_s: f64,
    pub delta_rho: f64,
    /// Run status, or `None` when the cell could not be set up or crashed.
    pub status: Option<RunStatus>,
    pub steps: usize,
    pub final_energy_ratio: f64,
    /// Worst energy-inequality LHS divided by its tolerance.
    pub worst_energy_violation: f64,
    pub message: Option<String>,
}

impl StabilityCell {
    pub fn status_str(&self) -> &'static str {
        self.status.map_or("error", |s| s.as_str())
    }
}

/// Both schemes for every combination in `sweep`, cells in parallel.
/// The DLM variant is `base.scheme` unless that is FE-IBM.
pub fn stability_map(base: &SimulationConfig, sweep: &SweepSpec) -> Vec<StabilityCell> {
    let dlm = match base.scheme {
        Scheme::Feibm => Scheme::Dlm,
        s => s,
    };
    let mut jobs = Vec::new();
    for scheme in [dlm, Scheme::Feibm] {
        for &dt in &sweep.dt {
            for &h_x in &sweep.h_x {
                for &h_s in &sweep.h_s {
                    for &delta_rho in &sweep.delta_rho {
                        let mut c = base.clone();
                        c.scheme = scheme;
                        c.dt = dt;
                        c.h_x = h_x;
                        c.h_s = h_s;
                        c.delta_rho = delta_rho;
                        jobs.push(c);
                    }
                }
            }
        }
    }
    jobs.into_par_iter().map(run_cell).collect()
}

fn run_cell(c: SimulationConfig) -> StabilityCell {
    let mut cell = StabilityCell {
        scheme: c.scheme,
        dt: c.dt,
        h_x: c.h_x,
        h_s: c.h_s,
        delta_rho: c.delta_rho,
        status: None,
        steps: 0,
        final_energy_ratio: f64::NAN,
        worst_energy_violation: f64::NAN,
        message: None,
    };
    let result = std::panic::catch_unwind(|| Simulation::new(c).and_then(|mut s| s.run(false)));
    match result {
        Ok(Ok(traj)) => {
            cell.status = Some(traj.status);
            cell.steps = traj.records.len();
            cell.final_energy_ratio = traj.final_energy_ratio();
            cell.worst_energy_violation = traj.worst_energy_violation();
            cell.message = traj.message;
        }
        Ok(Err(e)) => cell.message = Some(e.to_string()),
        Err(_) => cell.message = Some("panic while running cell".into()),
    }
    cell
}

pub fn write_stability_map(path: &Path, cells: &[StabilityCell]) -> Result<()> {
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.scheme.name().to_string(),
                fmt_f64(c.dt),
                fmt_f64(c.h_x),
                fmt_f64(c.h_s),
                fmt_f64(c.delta_rho),
                c.status_str().to_string(),
                c.steps.to_string(),
                fmt_f64(c.final_energy_ratio),
                fmt_f64(c.worst_energy_violation),
                c.message.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_table(
        path,
        &[
            "scheme",
            "dt",
            "h_x",
            "h_s",
            "delta_rho",
            "status",
            "steps",
            "final_energy_ratio",
            "worst_energy_violation",
            "message",
        ],
        &rows,
    )
}

/// The sweep of the codim-1 ellipse stability map.
pub fn default_codim1_sweep() -> SweepSpec {
    SweepSpec {
        dt: vec![0.1, 0.05],
        h_x: vec![1.0 / 32.0],
        h_s: vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0],
        delta_rho: vec![0.0, 0.3],
    }
}

/// Errors and observed rates per refinement level.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceTable {
    /// Mesh size or time step of each level.
    pub levels: Vec<f64>,
    /// Named error columns, e.g. `velocity` and `pressure`.
    pub columns: Vec<(String, Vec<f64>)>,
}

impl ConvergenceTable {
    /// Rates between consecutive levels for column `i`.
    pub fn rates(&self, i: usize) -> Result<Vec<f64>> {
        let samples: Vec<(f64, f64)> = self.levels.iter().copied().zip(self.columns[i].1.iter().copied()).collect();
        fit_rate(&samples)
    }

    pub fn mean_rate(&self, i: usize) -> Result<f64> {
        let r = self.rates(i)?;
        Ok(r.iter().sum::<f64>() / r.len() as f64)
    }

    pub fn write(&self, path: &Path, level_name: &str) -> Result<()> {
        let mut header = vec![level_name.to_string()];
        for (name, _) in &self.columns {
            header.push(format!("{name}_error"));
            header.push(format!("{name}_rate"));
        }
        let rates: Vec<Vec<f64>> = (0..self.columns.len()).map(|i| self.rates(i)).collect::<Result<_>>()?;
        let rows: Vec<Vec<String>> = (0..self.levels.len())
            .map(|k| {
                let mut row = vec![fmt_f64(self.levels[k])];
                for (i, (_, errs)) in self.columns.iter().enumerate() {
                    row.push(fmt_f64(errs[k]));
                    row.push(if k == 0 { String::new() } else { fmt_f64(rates[i][k - 1]) });
                }
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_table(path, &header, &rows)
    }
}

fn require_levels(levels: &[f64]) -> Result<()> {
    if levels.len() < 2 {
        return Err(Error::invalid(format!(
            "a convergence study needs at least 2 levels, got {}",
            levels.len()
        )));
    }
    Ok(())
}

fn run_to_end(config: SimulationConfig) -> Result<(Simulation, Trajectory)> {
    let mut sim = Simulation::new(config)?;
    let traj = sim.run(false)?;
    if traj.status != RunStatus::Completed {
        return Err(Error::invalid(format!(
            "convergence run (dt={}, h_x={}, h_s={}) ended with {}",
            sim.config.dt,
            sim.config.h_x,
            sim.config.h_s,
            traj.status.as_str()
        )));
    }
    Ok((sim, traj))
}

/// Base configuration of the spatial study: a circle of radius 1/4 at rest
/// in its equilibrium, so the exact velocity is zero and the exact pressure
/// jumps by `kappa` across the curve.
pub fn space_protocol_config() -> SimulationConfig {
    let mut c = SimulationConfig {
        t_final: 1.0,
        ..Default::default()
    };
    c.geometry.semi_axes = [0.25, 0.25];
    c
}

pub fn default_space_levels() -> Vec<f64> {
    vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 24.0, 1.0 / 32.0]
}

/// Spatial convergence on the equilibrium circle with `h_s = h_x = h`.
/// Columns: `velocity` (`M_f` norm of `u`) and `pressure` (L2 distance to the
/// exact piecewise-constant pressure with zero mean).
pub fn convergence_space(base: &SimulationConfig, levels: &[f64]) -> Result<ConvergenceTable> {
    require_levels(levels)?;
    let g = &base.geometry;
    if g.preset != GeometryPreset::EllipseCodim1 || g.semi_axes[0] != g.semi_axes[1] {
        return Err(Error::invalid("spatial convergence needs a circular ellipse_codim1 geometry"));
    }
    let r = g.semi_axes[0];
    let c = g.center;
    let kappa = base.kappa;
    let mean = kappa * std::f64::consts::PI * r * r / (g.domain_side * g.domain_side);
    let results: Vec<Result<(f64, f64)>> = levels
        .par_iter()
        .map(|&h| {
            let config = SimulationConfig {
                h_x: h,
                h_s: h,
                ..base.clone()
            };
            let (sim, traj) = run_to_end(config)?;
            let s = &traj.final_state;
            let e_u = velocity_l2_error(&sim.fluid_mass, &s.u, &vec![0.0; s.u.len()])?;
            let exact = |x: [f64; 2]| {
                let inside = (x[0] - c[0]).hypot(x[1] - c[1]) < r;
                if inside {
                    kappa - mean
                } else {
                    -mean
                }
            };
            let e_p = pressure_l2_error(&sim.disc.fluid, &s.p, exact, 3)?;
            Ok((e_u, e_p))
        })
        .collect();
    let errs: Vec<(f64, f64)> = results.into_iter().collect::<Result<_>>()?;
    Ok(ConvergenceTable {
        levels: levels.to_vec(),
        columns: vec![
            ("velocity".into(), errs.iter().map(|e| e.0).collect()),
            ("pressure".into(), errs.iter().map(|e| e.1).collect()),
        ],
    })
}

/// Base configuration of the temporal study: the stretched codim-0 disk.
pub fn time_protocol_config() -> SimulationConfig {
    let mut c = SimulationConfig {
        kappa: 1.0,
        nu: 0.05,
        delta_rho: 0.3,
        h_x: 1.0 / 16.0,
        h_s: 1.0 / 16.0,
        t_final: 1.0,
        ..Default::default()
    };
    c.geometry.preset = GeometryPreset::EllipseCodim0;
    c
}

pub fn default_time_levels() -> Vec<f64> {
    vec![0.1, 0.05, 0.02, 0.01]
}

/// Temporal convergence against a fine-step reference at `base.t_final`.
/// Columns: `structure` (`M_s` norm) and `velocity` (`M_f` norm).
pub fn convergence_time(base: &SimulationConfig, levels: &[f64], reference_dt: f64) -> Result<ConvergenceTable> {
    require_levels(levels)?;
    let mut all = vec![reference_dt];
    all.extend_from_slice(levels);
    let runs: Vec<Result<(Simulation, Trajectory)>> = all
        .par_iter()
        .map(|&dt| run_to_end(SimulationConfig { dt, ..base.clone() }))
        .collect();
    let mut runs = runs.into_iter();
    let (sim, reference) = runs.next().expect("reference run")?;
    let reference = reference.final_state;
    let mut ex = Vec::new();
    let mut eu = Vec::new();
    for run in runs {
        let s = run?.1.final_state;
        ex.push(structure_l2_error(&sim.structure.mass, &s.x, &reference.x)?);
        eu.push(velocity_l2_error(&sim.fluid_mass, &s.u, &reference.u)?);
    }
    Ok(ConvergenceTable {
        levels: levels.to_vec(),
        columns: vec![("structure".into(), ex), ("velocity".into(), eu)],
    })
}

/// Area history of both schemes under one configuration.
#[derive(Clone, Debug, Serialize)]
pub struct MassComparison {
    pub initial_area: f64,
    pub dlm_status: RunStatus,
    pub feibm_status: RunStatus,
    /// `(t, area)` per completed step.
    pub dlm_area: Vec<(f64, f64)>,
    pub feibm_area: Vec<(f64, f64)>,
    pub dlm_drift: f64,
    pub feibm_drift: f64,
}

pub fn mass_compare(base: &SimulationConfig) -> Result<MassComparison> {
    if !matches!(
        base.geometry.preset,
        GeometryPreset::EllipseCodim1 | GeometryPreset::RectangleCodim1
    ) {
        return Err(Error::invalid("mass comparison needs a closed-curve (codim-1) preset"));
    }
    let dlm = match base.scheme {
        Scheme::Feibm => Scheme::Dlm,
        s => s,
    };
    let runs: Vec<Result<Trajectory>> = [dlm, Scheme::Feibm]
        .par_iter()
        .map(|&scheme| Simulation::new(SimulationConfig { scheme, ..base.clone() })?.run(false))
        .collect();
    let mut runs = runs.into_iter();
    let a = runs.next().expect("dlm run")?;
    let b = runs.next().expect("feibm run")?;
    let history = |t: &Trajectory| -> Vec<(f64, f64)> {
        std::iter::once((0.0, t.initial_area))
            .chain(t.records.iter().map(|r| (r.t, r.area)))
            .collect()
    };
    Ok(MassComparison {
        initial_area: a.initial_area,
        dlm_status: a.status,
        feibm_status: b.status,
        dlm_area: history(&a),
        feibm_area: history(&b),
        dlm_drift: a.final_area_drift(),
        feibm_drift: b.final_area_drift(),
    })
}

impl MassComparison {
    /// Writes `mass_history.csv` (per-step areas and drifts) and
    /// `mass_summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        create_dir(dir)?;
        let n = self.dlm_area.len().max(self.feibm_area.len());
        let cell = |v: &[(f64, f64)], k: usize, f: &dyn Fn(f64) -> f64| v.get(k).map_or(String::new(), |p| fmt_f64(f(p.1)));
        let drift = |a: f64| (a - self.initial_area).abs() / self.initial_area.abs();
        let rows: Vec<Vec<String>> = (0..n)
            .map(|k| {
                let t = self.dlm_area.get(k).or(self.feibm_area.get(k)).map_or(0.0, |p| p.0);
                vec![
                    k.to_string(),
                    fmt_f64(t),
                    cell(&self.dlm_area, k, &|a| a),
                    cell(&self.feibm_area, k, &|a| a),
                    cell(&self.dlm_area, k, &drift),
                    cell(&self.feibm_area, k, &drift),
                ]
            })
            .collect();
        let history = dir.join("mass_history.csv");
        write_table(
            &history,
            &["step", "t", "area_dlm", "area_feibm", "drift_dlm", "drift_feibm"],
            &rows,
        )?;
        let summary = dir.join("mass_summary.csv");
        write_table(
            &summary,
            &["scheme", "status", "initial_area", "final_relative_drift"],
            &[
                vec!["dlm".into(), self.dlm_status.as_str().into(), fmt_f64(self.initial_area), fmt_f64(self.dlm_drift)],
                vec![
                    "feibm".into(),
                    self.feibm_status.as_str().into(),
                    fmt_f64(self.initial_area),
                    fmt_f64(self.feibm_drift),
                ],
            ],
        )?;
        Ok(vec![history, summary])
    }
}
