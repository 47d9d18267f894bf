//! Spatial convergence on a circle in equilibrium: exact velocity zero and a
//! pressure jump equal to the stiffness across the curve.

use dlm_ibm::experiments::{convergence_space, space_protocol_config};

fn main() -> dlm_ibm::Result<()> {
    let base = space_protocol_config();
    let levels = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 24.0];
    let table = convergence_space(&base, &levels)?;
    let (u_rates, p_rates) = (table.rates(0)?, table.rates(1)?);
    println!("{:>8} {:>12} {:>6} {:>12} {:>6}", "h", "|u|", "rate", "|p - p*|", "rate");
    for k in 0..levels.len() {
        let rate = |r: &[f64]| if k == 0 { String::from("-") } else { format!("{:.2}", r[k - 1]) };
        println!(
            "{:>8.5} {:>12.4e} {:>6} {:>12.4e} {:>6}",
            levels[k],
            table.columns[0].1[k],
            rate(&u_rates),
            table.columns[1].1[k],
            rate(&p_rates)
        );
    }
    Ok(())
}
