//! Closed-form marginal density of the Scenario B bridge started from a
//! Gaussian mixture, printed as a coarse text plot at several times.
//!
//! Run with `cargo run --release --example density`.

use mfpid::cli::{preset, ModeName};

fn main() -> mfpid::Result<()> {
    let cfg = preset("scenario-b")?;
    let sim = cfg.sim_config(
        cfg.target.as_ref().expect("preset has a target"),
        cfg.initial.as_ref(),
        ModeName::Mf,
    )?;
    let ctx = sim.context()?;
    for t in [0.1, 0.3, 0.5, 0.7, 0.95] {
        let p = ctx.marginal(t)?;
        println!("t = {t}: {} components, mean {:.3}", p.len(), p.mean()[0]);
        for k in 0..24 {
            let x = -1.0 + 0.3 * k as f64;
            let v = p.pdf(&[x]);
            println!(
                "  {x:>5.2} {:<60} {v:.3}",
                "#".repeat((v * 25.0).round() as usize)
            );
        }
    }
    Ok(())
}
