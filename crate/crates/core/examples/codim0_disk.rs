//! A thick elastic body (codimension zero): a disk stretched into an ellipse
//! is released and swings back, with a denser structure (delta_rho > 0).

use dlm_ibm::config::{GeometryPreset, SimulationConfig};
use dlm_ibm::schemes::Simulation;

fn main() -> dlm_ibm::Result<()> {
    let mut config = SimulationConfig {
        kappa: 1.0,
        nu: 0.05,
        delta_rho: 0.3,
        h_x: 1.0 / 16.0,
        h_s: 1.0 / 8.0,
        t_final: 2.0,
        ..Default::default()
    };
    config.geometry.preset = GeometryPreset::EllipseCodim0;
    let mut sim = Simulation::new(config)?;
    println!(
        "{} structure nodes, {} triangles",
        sim.disc.structure.n_nodes(),
        sim.disc.structure.n_cells()
    );
    let traj = sim.run(false)?;
    for r in traj.records.iter().step_by(2) {
        println!(
            "t={:.2} kinetic={:.3e} structure kinetic={:.3e} elastic={:.5} ratio={:.5}",
            r.t, r.kinetic_fluid, r.kinetic_structure, r.elastic, r.energy_ratio
        );
    }
    println!("status {}, area drift {:.2e}", traj.status.as_str(), traj.final_area_drift());
    Ok(())
}
