//! Runs both schemes over a small h_s sweep at dt = 0.1 and prints the final
//! energy ratio of every cell. The finest FE-IBM cell blows up; DLM cells
//! stay stable.

use dlm_ibm::config::{SimulationConfig, SweepSpec};
use dlm_ibm::experiments::stability_map;

fn main() {
    let base = SimulationConfig {
        h_x: 1.0 / 32.0,
        t_final: 2.0,
        ..Default::default()
    };
    let sweep = SweepSpec {
        dt: vec![0.1],
        h_x: vec![1.0 / 32.0],
        h_s: vec![1.0 / 8.0, 1.0 / 32.0, 1.0 / 64.0],
        delta_rho: vec![0.0],
    };
    for c in stability_map(&base, &sweep) {
        println!(
            "{:<6} dt={:<5} h_s=1/{:<3} {:<24} ratio={:.4e}",
            c.scheme.name(),
            c.dt,
            (1.0 / c.h_s).round(),
            c.status_str(),
            c.final_energy_ratio
        );
    }
}
