use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dlm_ibm::config::{parse_config, ParsedConfig, SimulationConfig};
use dlm_ibm::diagnostics::RunStatus;
use dlm_ibm::experiments::{
    cmd_run, convergence_space, convergence_time, default_codim1_sweep, default_space_levels, default_time_levels,
    mass_compare, space_protocol_config, stability_map, time_protocol_config, write_stability_map,
};

/// Immersed-boundary fluid-structure benchmarks (DLM and FE-IBM).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation.
    Run {
        #[command(flatten)]
        common: Common,
        /// Times at which to write VTK snapshots, e.g. 0,1,2.
        #[arg(long, value_delimiter = ',')]
        vtk_times: Option<Vec<f64>>,
    },
    /// Run both schemes over a (dt, h_x, h_s, delta_rho) grid.
    StabilityMap {
        #[command(flatten)]
        common: Common,
    },
    /// Spatial or temporal convergence study.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Compare area conservation of DLM and FE-IBM.
    MassCompare {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Space,
    Time,
}

fn load(path: Option<&Path>) -> dlm_ibm::Result<Option<ParsedConfig>> {
    let Some(path) = path else { return Ok(None) };
    let parsed = parse_config(path)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Some(parsed))
}

fn exit_for(statuses: impl IntoIterator<Item = RunStatus>) -> u8 {
    let mut code = 0;
    for s in statuses {
        match s {
            RunStatus::EnergyBlowupDetected => code = code.max(2),
            RunStatus::Completed | RunStatus::Running => {}
            _ => code = code.max(1),
        }
    }
    code
}

fn create_out(dir: &Path) -> dlm_ibm::Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| dlm_ibm::Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn execute(cli: Cli) -> dlm_ibm::Result<u8> {
    match cli.command {
        Command::Run { common, vtk_times } => {
            let parsed = load(common.config.as_deref())?;
            let config = parsed.map(|p| p.config).unwrap_or_default();
            let times = vtk_times.unwrap_or_else(|| config.vtk_times.clone());
            let manifest = cmd_run(&config, &common.out, &times)?;
            let last = manifest.records.last();
            println!(
                "{}: {} steps, final energy ratio {:.6e}",
                manifest.status.as_str(),
                manifest.steps,
                last.map_or(1.0, |r| r.energy_ratio)
            );
            if let Some(m) = &manifest.message {
                eprintln!("{m}");
            }
            Ok(match manifest.status {
                RunStatus::Completed => 0,
                RunStatus::EnergyBlowupDetected => 2,
                _ => 1,
            })
        }
        Command::StabilityMap { common } => {
            let parsed = load(common.config.as_deref())?;
            let (config, sweep) = match parsed {
                Some(p) => (p.config, p.sweep.unwrap_or_else(default_codim1_sweep)),
                None => (SimulationConfig::default(), default_codim1_sweep()),
            };
            let cells = stability_map(&config, &sweep);
            create_out(&common.out)?;
            write_stability_map(&common.out.join("stability_map.csv"), &cells)?;
            for c in &cells {
                println!(
                    "{:<16} dt={:<6} h_x={:<9.6} h_s={:<9.6} drho={:<4} {:<24} ratio={:.4e}",
                    c.scheme.name(),
                    c.dt,
                    c.h_x,
                    c.h_s,
                    c.delta_rho,
                    c.status_str(),
                    c.final_energy_ratio
                );
            }
            // Cells that failed to run are recorded in the CSV, not fatal.
            Ok(if cells.iter().any(|c| c.status == Some(RunStatus::EnergyBlowupDetected)) { 2 } else { 0 })
        }
        Command::Convergence { common, kind } => {
            let parsed = load(common.config.as_deref())?;
            let spec = parsed.as_ref().and_then(|p| p.convergence.clone()).unwrap_or_default();
            let mut base = match (&parsed, kind) {
                (Some(p), _) => p.config.clone(),
                (None, Kind::Space) => space_protocol_config(),
                (None, Kind::Time) => time_protocol_config(),
            };
            if let Some(t) = spec.t_final {
                base.t_final = t;
            }
            create_out(&common.out)?;
            let (table, file, level) = match kind {
                Kind::Space => {
                    let levels = spec.levels.unwrap_or_else(default_space_levels);
                    (convergence_space(&base, &levels)?, "convergence_space.csv", "h")
                }
                Kind::Time => {
                    let levels = spec.levels.unwrap_or_else(default_time_levels);
                    (convergence_time(&base, &levels, spec.reference_dt.unwrap_or(1e-3))?, "convergence_time.csv", "dt")
                }
            };
            table.write(&common.out.join(file), level)?;
            for (i, (name, errs)) in table.columns.iter().enumerate() {
                let errs: Vec<String> = errs.iter().map(|e| format!("{e:.4e}")).collect();
                println!("{name}: errors [{}] rates {:.3?}", errs.join(", "), table.rates(i)?);
            }
            Ok(0)
        }
        Command::MassCompare { common } => {
            let parsed = load(common.config.as_deref())?;
            let config = parsed.map(|p| p.config).unwrap_or_default();
            let cmp = mass_compare(&config)?;
            cmp.write(&common.out)?;
            println!(
                "relative area drift: dlm {:.4e} ({}), feibm {:.4e} ({})",
                cmp.dlm_drift,
                cmp.dlm_status.as_str(),
                cmp.feibm_drift,
                cmp.feibm_status.as_str()
            );
            Ok(exit_for([cmp.dlm_status, cmp.feibm_status]))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
