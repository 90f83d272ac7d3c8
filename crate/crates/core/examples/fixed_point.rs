//! Picard iteration for the self-consistent guidance, compared with the
//! straight line between the endpoint means.
//!
//! Run with `cargo run --release --example fixed_point`.

use mfpid::cli::{preset, ModeName};
use mfpid::guidance::{fixed_point_guidance, linear_guidance};

fn main() -> mfpid::Result<()> {
    let cfg = preset("scenario-b")?;
    let mut sim = cfg.sim_config(
        cfg.target.as_ref().expect("preset has a target"),
        cfg.initial.as_ref(),
        ModeName::Mf,
    )?;
    sim.batch = 2000;
    sim.n_steps = 1000;
    let fp = fixed_point_guidance(&sim, 2e-4, 15)?;
    for r in &fp.log {
        println!(
            "iteration {:>2}: max update {:.2e}, max residual {:.4}",
            r.iteration,
            r.max_update,
            r.residuals.iter().cloned().fold(0.0, f64::max)
        );
    }
    println!("converged: {}", fp.converged);
    let line =
        linear_guidance(&sim.initial_mean(), &sim.target.mean())?.per_interval(&sim.schedule)?;
    let nu = fp.guidance.per_interval(&sim.schedule)?;
    for (i, (v, l)) in nu.iter().zip(&line).enumerate() {
        println!("  interval {i}: nu = {:.4}, line = {:.4}", v[0], l[0]);
    }
    Ok(())
}
