use mfpid::greens::GreenScalars;
use mfpid::oracles::{rk4_backward, rk4_forward};
use mfpid::schedule::geometric_schedule;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-2)
}

#[test]
fn geometric_schedule_matches_rk4() {
    let s = geometric_schedule(12.0, 0.65, 8).unwrap();
    let g = GreenScalars::new(&s).unwrap();
    let nu: Vec<f64> = (0..8).map(|i| 2.8 - 2.2 * s.midpoint(i)).collect();
    let lin = g
        .linear(&nu.iter().map(|v| vec![*v]).collect::<Vec<_>>())
        .unwrap();
    let shift = g.shift_propagators();
    let times: Vec<f64> = (1..200).map(|k| k as f64 / 200.0).collect();
    let fwd = rk4_forward(&s, &nu, &times).unwrap();
    let back = rk4_backward(&s, &nu, &times).unwrap();
    let fwd1 = rk4_forward(&s, &[1.0; 8], &times).unwrap();
    let back1 = rk4_backward(&s, &[1.0; 8], &times).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..times.len() {
        let t = times[k];
        let b = g.backward(t);
        let v = lin.eval(&g, t);
        let l = shift.eval(&g, t);
        for (x, y) in [
            (g.a_plus(t), fwd[k].a_plus),
            (b.a, back[k].a),
            (b.b, back[k].b),
            (b.c, back[k].c),
            (v.theta_plus[0], fwd[k].theta_plus),
            (v.theta_x[0], back[k].theta_x),
            (v.theta_y[0], back[k].theta_y),
            (l.lambda_plus, fwd1[k].theta_plus),
            (l.lambda_x, back1[k].theta_x),
            (l.lambda_y, back1[k].theta_y),
        ] {
            worst = worst.max(rel(x, y));
        }
    }
    println!("worst {worst:e}");
    assert!(worst < 1e-4);
}
