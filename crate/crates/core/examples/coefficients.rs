//! Closed-form Green-function coefficients for a geometric stiffness
//! schedule, with the shift propagators and guidance-dependent terms.
//!
//! Run with `cargo run --release --example coefficients`.

use mfpid::greens::GreenScalars;
use mfpid::guidance::linear_guidance;
use mfpid::schedule::geometric_schedule;

fn main() -> mfpid::Result<()> {
    let schedule = geometric_schedule(12.0, 0.65, 8)?;
    println!("betas: {:?}", schedule.betas());

    let green = GreenScalars::new(&schedule)?;
    let nu = linear_guidance(&[2.8], &[0.6])?.per_interval(&schedule)?;
    let linear = green.linear(&nu)?;
    let shift = green.shift_propagators();

    println!(
        "{:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "t", "a+", "a-", "b-", "c-", "theta+", "theta_x", "lambda+"
    );
    for k in 1..20 {
        let t = k as f64 / 20.0;
        let b = green.backward(t);
        let v = linear.eval(&green, t);
        let l = shift.eval(&green, t);
        println!(
            "{t:>6.3} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            green.a_plus(t),
            b.a,
            b.b,
            b.c,
            v.theta_plus[0],
            v.theta_x[0],
            l.lambda_plus
        );
    }
    println!("a+(1) = {:.6}, K_t = c-(t) - a+(1)", green.a_plus_one());
    Ok(())
}
