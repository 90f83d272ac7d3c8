//! Energy per dimension as the number of independent temperature
//! coordinates grows, at a reduced batch size.
//!
//! Run with `cargo run --release --example sweep`.

use mfpid::cli::{preset, ModeName};
use mfpid::simulate::run_bridge;

fn main() -> mfpid::Result<()> {
    let cfg = preset("d-sweep")?;
    println!(
        "{:>3} {:>9} {:>9} {:>8}",
        "d", "mf E/d", "ia0 E/d", "saving"
    );
    for ((_, target, initial), &value) in cfg.scenarios()?.iter().zip(&cfg.sweep.values) {
        let d = cfg.sweep.point_dim(value) as f64;
        let mut e = Vec::new();
        for mode in [ModeName::Mf, ModeName::Ia0] {
            let mut sim = cfg.sim_config(target, initial.as_ref(), mode)?;
            sim.batch = 1000;
            sim.n_steps = 800;
            e.push(run_bridge(&sim)?.report.total / d);
        }
        println!(
            "{d:>3} {:>9.3} {:>9.3} {:>7.2}%",
            e[0],
            e[1],
            100.0 * (e[1] - e[0]) / e[1]
        );
    }
    Ok(())
}
