//! Optimal control of a single particle: probe law, posterior over target
//! components and the closed-form score for a two-component target.
//!
//! Run with `cargo run --release --example score`.

use mfpid::guidance::linear_guidance;
use mfpid::schedule::geometric_schedule;
use mfpid::score::{Covariance, GaussianMixture, ScoreContext};

fn main() -> mfpid::Result<()> {
    let schedule = geometric_schedule(12.0, 0.65, 8)?;
    let target = GaussianMixture::new(
        vec![0.6, 0.4],
        vec![vec![0.0], vec![1.5]],
        vec![Covariance::isotropic(0.2, 1), Covariance::isotropic(0.3, 1)],
    )?;
    let guidance = linear_guidance(&[2.8], &target.mean())?;
    let ctx = ScoreContext::new(&schedule, &guidance, target, None)?;

    for t in [0.1, 0.5, 0.9] {
        println!("t = {t}");
        for x in [-1.0, 0.5, 1.7, 3.0, 5.0] {
            let probe = ctx.probe(t, &[x])?;
            let post = ctx.posterior(t, &[x])?;
            let u = ctx.score_at(t, &[x])?;
            println!(
                "  x = {x:>5.2}: K = {:.3}, mu = {:.4}, weights = [{:.4}, {:.4}], y_hat = {:.4}, u = {:.4}",
                probe.k, probe.mu[0], post.weights[0], post.weights[1], post.y_hat[0], u[0]
            );
        }
    }
    Ok(())
}
