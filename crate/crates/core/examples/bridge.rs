//! Particle simulation of Scenario A (occupied and unoccupied zones cooling
//! to a shared set-point) under mean-field and independent-agent guidance.
//!
//! Run with `cargo run --release --example bridge`.

use mfpid::cli::{preset, ModeName};
use mfpid::simulate::run_bridge;

fn main() -> mfpid::Result<()> {
    let cfg = preset("scenario-a")?;
    let target = cfg.target.as_ref().expect("preset has a target");
    let mut totals = Vec::new();
    for mode in [ModeName::Ia0, ModeName::Iam, ModeName::Mf] {
        let mut sim = cfg.sim_config(target, cfg.initial.as_ref(), mode)?;
        sim.batch = 2000;
        sim.n_steps = 1000;
        let run = run_bridge(&sim)?;
        println!(
            "{mode}: E(1) = {:.3} ± {:.3}",
            run.report.total, run.report.stderr
        );
        for c in run.report.per_component() {
            println!(
                "  zone type {}: {} particles, E = {:.3}",
                c.component, c.count, c.energy
            );
        }
        for m in &run.report.terminal {
            println!(
                "  terminal component {}: mean {:.3} (target {:.3}), std {:.3} (target {:.3})",
                m.component, m.mean[0], m.target_mean[0], m.std[0], m.target_std[0]
            );
        }
        totals.push(run.report.total);
    }
    println!(
        "saving mf vs ia(0): {:.2}%",
        100.0 * (totals[0] - totals[2]) / totals[0]
    );
    Ok(())
}
