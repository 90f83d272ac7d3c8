//! Scalar LQG mean-field bridge for a thermostatically controlled load
//! population, compared with two independent-agent baselines.
//!
//! Run with `cargo run --release --example lqg_bridge`.

use mfpid::lqg::{ia_baseline, lqg_metrics, solve_lqg, LqgProblem};

fn main() -> mfpid::Result<()> {
    let problem = LqgProblem::new(0.8, 2.0, 1.5, 0.3)?;
    let mf = solve_lqg(&problem)?;
    println!("rho = {:.6}, S_1 = {:.6}", mf.rho, mf.s_one);

    let ia0 = ia_baseline(&mf, 0.0)?;
    let iam = ia_baseline(&mf, problem.m_tar)?;
    println!(
        "{:>5} {:>9} {:>9} {:>9} {:>9}",
        "t", "m_t", "Sigma_t", "S_t", "s_t"
    );
    for k in 0..=10 {
        let t = k as f64 / 10.0;
        println!(
            "{t:>5.1} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            mf.mean(t),
            mf.variance(t),
            mf.riccati(t),
            mf.offset(t)
        );
    }

    let e_mf = lqg_metrics(&mf, 2001)?.total_energy();
    let e_ia0 = lqg_metrics(&ia0, 2001)?.total_energy();
    let e_iam = lqg_metrics(&iam, 2001)?.total_energy();
    println!("E(1): mf {e_mf:.4}, ia(0) {e_ia0:.4}, ia(m_tar) {e_iam:.4}");
    println!("saving vs ia(0): {:.2}%", 100.0 * (e_ia0 - e_mf) / e_ia0);
    Ok(())
}
