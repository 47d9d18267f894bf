//! Writes the artifacts of one run (diagnostics CSV, VTK snapshots and a JSON
//! manifest) into a directory, then reads the CSV back.
//!
//! Usage: cargo run --example write_outputs -- [out_dir]

use std::path::PathBuf;

use dlm_ibm::config::parse_config_str;
use dlm_ibm::experiments::cmd_run;
use dlm_ibm::output::read_diagnostics_csv;

fn main() -> dlm_ibm::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("dlm-ibm-demo"), PathBuf::from);
    let parsed = parse_config_str(
        r#"
[numerics]
scheme = "dlm"
dt = 0.1
t_final = 0.5
h_x = "1/16"
h_s = "1/16"

[output]
vtk_times = [0.0, 0.5]
"#,
    )?;
    let config = parsed.config;
    let manifest = cmd_run(&config, &out, &config.vtk_times)?;
    println!("wrote {} ({})", out.display(), manifest.status.as_str());
    for f in &manifest.vtk_files {
        println!("  {f}");
    }
    let rows = read_diagnostics_csv(out.join("diagnostics.csv"))?;
    assert_eq!(rows, manifest.records);
    println!("{} diagnostics rows read back", rows.len());
    Ok(())
}
