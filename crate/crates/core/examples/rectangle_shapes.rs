//! Rectangular structures: a closed rectangular curve and a square body
//! stretched into a rectangle.

use dlm_ibm::config::{GeometryPreset, SimulationConfig};
use dlm_ibm::schemes::Simulation;

fn main() -> dlm_ibm::Result<()> {
    for preset in [GeometryPreset::RectangleCodim1, GeometryPreset::RectangleCodim0] {
        let mut config = SimulationConfig {
            h_x: 1.0 / 16.0,
            h_s: 1.0 / 16.0,
            t_final: 1.0,
            ..Default::default()
        };
        config.geometry.preset = preset;
        config.geometry.rect_size = [0.5, 0.25];
        let mut sim = Simulation::new(config)?;
        let traj = sim.run(false)?;
        println!(
            "{preset:?}: {} nodes, final energy ratio {:.4}, area {:.5} -> {:.5}",
            sim.disc.structure.n_nodes(),
            traj.final_energy_ratio(),
            traj.initial_area,
            traj.records.last().map_or(traj.initial_area, |r| r.area)
        );
    }
    Ok(())
}
