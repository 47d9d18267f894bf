//! Temporal convergence of the codim-0 benchmark against a fine-step
//! reference solution. Uses a short horizon to keep the runtime small.

use dlm_ibm::experiments::{convergence_time, time_protocol_config};

fn main() -> dlm_ibm::Result<()> {
    let mut base = time_protocol_config();
    base.t_final = 0.4;
    let levels = [0.1, 0.05, 0.025];
    let table = convergence_time(&base, &levels, 0.0025)?;
    for (i, (name, errs)) in table.columns.iter().enumerate() {
        print!("{name:>9}: errors");
        for e in errs {
            print!(" {e:.3e}");
        }
        println!(", rates {:.2?}", table.rates(i)?);
    }
    Ok(())
}
