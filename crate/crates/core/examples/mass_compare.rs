//! Enclosed-area conservation of DLM against FE-IBM on the ellipse benchmark.

use dlm_ibm::config::SimulationConfig;
use dlm_ibm::experiments::mass_compare;

fn main() -> dlm_ibm::Result<()> {
    let base = SimulationConfig {
        h_x: 1.0 / 16.0,
        ..Default::default()
    };
    let cmp = mass_compare(&base)?;
    for (d, f) in cmp.dlm_area.iter().zip(&cmp.feibm_area).step_by(4) {
        println!("t={:.1} dlm area {:.6} feibm area {:.6}", d.0, d.1, f.1);
    }
    println!(
        "final relative drift: dlm {:.3e}, feibm {:.3e}",
        cmp.dlm_drift, cmp.feibm_drift
    );
    Ok(())
}
