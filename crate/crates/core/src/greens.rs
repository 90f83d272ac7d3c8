//! Closed-form coefficients of the forward and backward Gaussian Green
//! kernels for a piecewise-constant stiffness protocol.
//!
//! The forward kernel started from the origin is
//! `G+(x) ∝ exp(-a+ |x|²/2 + θ+·x)` and the backward kernel is
//! `G-(x; y) ∝ exp(-a- |x|²/2 + b- x·y - c- |y|²/2 + θx·x + θy·y)`.
//! The linear coefficients are kept in absolute coordinates. The scalar
//! coefficients solve
//!
//! ```text
//! d/dt a+ = β - (a+)²      d/dt a- = (a-)² - β
//! d/dt b- = a- b-          d/dt c- = (b-)²
//! ```
//!
//! and the linear ones `d/dt θ+ = -a+ θ+ + βν`, `d/dt θx = a- θx - βν`,
//! `d/dt θy = -b- θx`. On each interval the solutions are hyperbolic
//! functions anchored at the left end (forward) or right end (backward).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::schedule::PwcSchedule;

const COTH_GUARD: f64 = 1e-12;

/// Backward scalar coefficients at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardScalars {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Hyperbolic building blocks of a propagation over a gap `tau` with
/// anchor coefficient `a0`.
#[derive(Debug, Clone, Copy)]
struct Propagator {
    /// `cosh(ωτ) - 1`
    chm1: f64,
    /// `sinh(ωτ) / ω`
    sc: f64,
    /// `cosh(ωτ) + a0 sinh(ωτ) / ω`
    d: f64,
}

impl Propagator {
    fn new(beta: f64, tau: f64, a0: f64) -> Self {
        let omega = beta.sqrt();
        let x = omega * tau;
        let half = (0.5 * x).sinh();
        let chm1 = 2.0 * half * half;
        let sc = if omega > 0.0 { x.sinh() / omega } else { tau };
        Self {
            chm1,
            sc,
            d: 1.0 + chm1 + a0 * sc,
        }
    }
}

/// `ω tanh(ωτ/2)`: the source gain accumulated from a singular anchor.
fn singular_gain(beta: f64, tau: f64) -> f64 {
    let omega = beta.sqrt();
    omega * (0.5 * omega * tau).tanh()
}

/// Scalar Riccati coefficients for one schedule.
#[derive(Debug, Clone)]
pub struct GreenScalars {
    schedule: PwcSchedule,
    phi_plus: Vec<f64>,
    a_plus_start: Vec<f64>,
    right: Vec<BackwardScalars>,
    a_plus_one: f64,
}

impl GreenScalars {
    pub fn new(schedule: &PwcSchedule) -> Result<Self> {
        let m = schedule.len();
        let mut out = Self {
            schedule: schedule.clone(),
            phi_plus: vec![0.0; m],
            a_plus_start: vec![f64::INFINITY; m],
            right: vec![
                BackwardScalars {
                    a: f64::INFINITY,
                    b: f64::INFINITY,
                    c: f64::INFINITY,
                };
                m
            ],
            a_plus_one: 0.0,
        };

        for i in 1..m {
            let a = out.a_plus_on(i - 1, schedule.start(i));
            out.a_plus_start[i] = a;
            let beta = schedule.beta(i);
            if beta > 0.0 {
                let omega = beta.sqrt();
                let x = a / omega;
                if !(x > 1.0 + COTH_GUARD) {
                    return Err(Error::CothRange {
                        interval: i,
                        a_plus: a,
                        omega,
                    });
                }
                out.phi_plus[i] = 0.5 * (2.0 / (x - 1.0)).ln_1p();
            }
        }
        out.a_plus_one = out.a_plus_on(m - 1, 1.0);

        for i in (0..m.saturating_sub(1)).rev() {
            out.right[i] = out.backward_on(i + 1, schedule.end(i));
        }
        Ok(out)
    }

    pub fn schedule(&self) -> &PwcSchedule {
        &self.schedule
    }

    /// Forward phases `φ_i`; zero on the first interval.
    pub fn phases(&self) -> &[f64] {
        &self.phi_plus
    }

    /// `a+(1)`, the forward precision at the terminal time.
    pub fn a_plus_one(&self) -> f64 {
        self.a_plus_one
    }

    pub fn a_plus(&self, t: f64) -> f64 {
        self.a_plus_on(self.schedule.locate(t), t)
    }

    pub fn backward(&self, t: f64) -> BackwardScalars {
        self.backward_on(self.schedule.locate(t), t)
    }

    /// Evaluates the closed form of interval `i` at `t`, which may be either
    /// endpoint of that interval.
    pub fn a_plus_on(&self, i: usize, t: f64) -> f64 {
        let tau = t - self.schedule.start(i);
        let beta = self.schedule.beta(i);
        if beta > 0.0 {
            let omega = beta.sqrt();
            omega / (omega * tau + self.phi_plus[i]).tanh()
        } else {
            let a0 = self.a_plus_start[i];
            if a0.is_infinite() {
                1.0 / tau
            } else {
                a0 / (1.0 + a0 * tau)
            }
        }
    }

    pub fn backward_on(&self, i: usize, t: f64) -> BackwardScalars {
        let tau = self.schedule.end(i) - t;
        let beta = self.schedule.beta(i);
        if i + 1 == self.schedule.len() {
            if beta > 0.0 {
                let omega = beta.sqrt();
                let a = omega / (omega * tau).tanh();
                BackwardScalars {
                    a,
                    b: omega / (omega * tau).sinh(),
                    c: a,
                }
            } else {
                let r = 1.0 / tau;
                BackwardScalars { a: r, b: r, c: r }
            }
        } else {
            let BackwardScalars {
                a: a0,
                b: b0,
                c: c0,
            } = self.right[i];
            let p = Propagator::new(beta, tau, a0);
            BackwardScalars {
                a: (a0 * (1.0 + p.chm1) + beta * p.sc) / p.d,
                b: b0 / p.d,
                c: c0 - b0 * b0 * p.sc / p.d,
            }
        }
    }

    /// Forward and backward coefficients of the linear terms for a guidance
    /// given as one `d`-vector per interval.
    pub fn linear(&self, nu: &[Vec<f64>]) -> Result<LinearCoefficients> {
        LinearCoefficients::new(self, nu)
    }

    /// Shift propagators: the linear coefficients for a scalar unit guidance.
    pub fn shift_propagators(&self) -> ShiftPropagators {
        let ones = vec![vec![1.0]; self.schedule.len()];
        ShiftPropagators(
            LinearCoefficients::new(self, &ones).expect("unit guidance matches the schedule"),
        )
    }
}

/// Linear coefficient values at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearValues {
    pub theta_plus: Vec<f64>,
    pub theta_x: Vec<f64>,
    pub theta_y: Vec<f64>,
}

/// How the backward linear coefficients respond to the guidance of the
/// current interval: `θx` moves by `gain_x · δν` and `θy` by `gain_y · δν`
/// when `ν_i` alone is shifted by `δν`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceGains {
    pub gain_x: f64,
    pub gain_y: f64,
}

#[derive(Debug, Clone)]
pub struct LinearCoefficients {
    dim: usize,
    nu: Vec<Vec<f64>>,
    theta_plus_start: Vec<Vec<f64>>,
    theta_plus_one: Vec<f64>,
    theta_x_right: Vec<Vec<f64>>,
    theta_y_right: Vec<Vec<f64>>,
}

impl LinearCoefficients {
    fn new(green: &GreenScalars, nu: &[Vec<f64>]) -> Result<Self> {
        let s = &green.schedule;
        let m = s.len();
        if nu.len() != m {
            return Err(Error::Dimension {
                expected: m,
                got: nu.len(),
            });
        }
        let dim = nu[0].len();
        if let Some(bad) = nu.iter().find(|v| v.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: bad.len(),
            });
        }
        if nu.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("guidance".into()));
        }
        let mut out = Self {
            dim,
            nu: nu.to_vec(),
            theta_plus_start: vec![vec![0.0; dim]; m],
            theta_plus_one: vec![0.0; dim],
            theta_x_right: vec![vec![0.0; dim]; m],
            theta_y_right: vec![vec![0.0; dim]; m],
        };
        let mut buf = vec![0.0; dim];
        for i in 1..m {
            out.theta_plus_on(green, i - 1, s.start(i), &mut buf);
            out.theta_plus_start[i].copy_from_slice(&buf);
        }
        out.theta_plus_on(green, m - 1, 1.0, &mut buf);
        out.theta_plus_one.copy_from_slice(&buf);

        let mut bx = vec![0.0; dim];
        let mut by = vec![0.0; dim];
        for i in (0..m.saturating_sub(1)).rev() {
            out.backward_on(green, i + 1, s.end(i), &mut bx, &mut by);
            out.theta_x_right[i].copy_from_slice(&bx);
            out.theta_y_right[i].copy_from_slice(&by);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn guidance(&self) -> &[Vec<f64>] {
        &self.nu
    }

    /// `θ+(1)`.
    pub fn theta_plus_one(&self) -> &[f64] {
        &self.theta_plus_one
    }

    pub fn eval(&self, green: &GreenScalars, t: f64) -> LinearValues {
        let i = green.schedule.locate(t);
        self.eval_on(green, i, t)
    }

    pub fn eval_on(&self, green: &GreenScalars, i: usize, t: f64) -> LinearValues {
        let mut v = LinearValues {
            theta_plus: vec![0.0; self.dim],
            theta_x: vec![0.0; self.dim],
            theta_y: vec![0.0; self.dim],
        };
        self.theta_plus_on(green, i, t, &mut v.theta_plus);
        self.backward_on(green, i, t, &mut v.theta_x, &mut v.theta_y);
        v
    }

    pub fn eval_into(
        &self,
        green: &GreenScalars,
        t: f64,
        theta_plus: &mut [f64],
        theta_x: &mut [f64],
        theta_y: &mut [f64],
    ) {
        let i = green.schedule.locate(t);
        self.theta_plus_on(green, i, t, theta_plus);
        self.backward_on(green, i, t, theta_x, theta_y);
    }

    /// Sensitivity of `(θx, θy)` at `t` to the guidance value of the interval
    /// containing `t`.
    pub fn gains(green: &GreenScalars, t: f64) -> GuidanceGains {
        let s = &green.schedule;
        let i = s.locate(t);
        let tau = s.end(i) - t;
        let beta = s.beta(i);
        if i + 1 == s.len() {
            let g = singular_gain(beta, tau);
            GuidanceGains {
                gain_x: g,
                gain_y: g,
            }
        } else {
            let BackwardScalars { a: a0, b: b0, .. } = green.right[i];
            let p = Propagator::new(beta, tau, a0);
            GuidanceGains {
                gain_x: (a0 * p.chm1 + beta * p.sc) / p.d,
                gain_y: b0 * p.chm1 / p.d,
            }
        }
    }

    fn theta_plus_on(&self, green: &GreenScalars, i: usize, t: f64, out: &mut [f64]) {
        let s = &green.schedule;
        let tau = t - s.start(i);
        let beta = s.beta(i);
        let nu = &self.nu[i];
        let start = &self.theta_plus_start[i];
        if i == 0 {
            let g = singular_gain(beta, tau);
            for (o, v) in out.iter_mut().zip(nu) {
                *o = g * v;
            }
            return;
        }
        let (hom, part) = if beta > 0.0 {
            let omega = beta.sqrt();
            let phi = green.phi_plus[i];
            let arg = omega * tau + phi;
            let sh = arg.sinh();
            let hom = phi.sinh() / sh;
            let part = omega * 2.0 * (0.5 * (arg + phi)).sinh() * (0.5 * omega * tau).sinh() / sh;
            (hom, part)
        } else {
            (1.0 / (1.0 + green.a_plus_start[i] * tau), 0.0)
        };
        for ((o, s0), v) in out.iter_mut().zip(start).zip(nu) {
            *o = hom * s0 + part * v;
        }
    }

    fn backward_on(
        &self,
        green: &GreenScalars,
        i: usize,
        t: f64,
        theta_x: &mut [f64],
        theta_y: &mut [f64],
    ) {
        let s = &green.schedule;
        let tau = s.end(i) - t;
        let beta = s.beta(i);
        let nu = &self.nu[i];
        if i + 1 == s.len() {
            let g = singular_gain(beta, tau);
            for ((x, y), v) in theta_x.iter_mut().zip(theta_y.iter_mut()).zip(nu) {
                *x = g * v;
                *y = g * v;
            }
            return;
        }
        let BackwardScalars { a: a0, b: b0, .. } = green.right[i];
        let p = Propagator::new(beta, tau, a0);
        let gx = (a0 * p.chm1 + beta * p.sc) / p.d;
        let gy = b0 * p.chm1 / p.d;
        let cross = b0 * p.sc / p.d;
        let x0 = &self.theta_x_right[i];
        let y0 = &self.theta_y_right[i];
        for j in 0..self.dim {
            theta_x[j] = x0[j] / p.d + gx * nu[j];
            theta_y[j] = y0[j] + cross * x0[j] + gy * nu[j];
        }
    }
}

/// Scalar propagators `(λ+, λx, λy)` that carry a deterministic start shift.
#[derive(Debug, Clone)]
pub struct ShiftPropagators(LinearCoefficients);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftValues {
    pub lambda_plus: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
}

impl ShiftPropagators {
    pub fn eval(&self, green: &GreenScalars, t: f64) -> ShiftValues {
        let v = self.0.eval(green, t);
        ShiftValues {
            lambda_plus: v.theta_plus[0],
            lambda_x: v.theta_x[0],
            lambda_y: v.theta_y[0],
        }
    }

    /// `λ+(1)`.
    pub fn lambda_plus_one(&self) -> f64 {
        self.0.theta_plus_one[0]
    }
}

/// Dense tables of all coefficients on a uniform grid of `n_steps + 1`
/// points. The singular endpoint entries hold `+inf`.
#[derive(Debug, Clone)]
pub struct CoeffTables {
    pub grid: Vec<f64>,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub b_minus: Vec<f64>,
    pub c_minus: Vec<f64>,
    pub phi_plus: Vec<f64>,
    pub theta_plus: Vec<Vec<f64>>,
    pub theta_x_minus: Vec<Vec<f64>>,
    pub theta_y_minus: Vec<Vec<f64>>,
    pub lambda_plus: Vec<f64>,
    pub lambda_x_minus: Vec<f64>,
    pub lambda_y_minus: Vec<f64>,
}

impl CoeffTables {
    pub fn build(schedule: &PwcSchedule, nu: &[Vec<f64>], n_steps: usize) -> Result<Self> {
        if n_steps < 8 * schedule.len() {
            return Err(Error::InvalidArgument(format!(
                "{n_steps} steps do not give 8 points per interval"
            )));
        }
        let green = GreenScalars::new(schedule)?;
        let linear = green.linear(nu)?;
        let shift = green.shift_propagators();
        let n = n_steps + 1;
        let mut t = Self {
            grid: (0..n).map(|k| k as f64 / n_steps as f64).collect(),
            a_plus: Vec::with_capacity(n),
            a_minus: Vec::with_capacity(n),
            b_minus: Vec::with_capacity(n),
            c_minus: Vec::with_capacity(n),
            phi_plus: green.phases().to_vec(),
            theta_plus: Vec::with_capacity(n),
            theta_x_minus: Vec::with_capacity(n),
            theta_y_minus: Vec::with_capacity(n),
            lambda_plus: Vec::with_capacity(n),
            lambda_x_minus: Vec::with_capacity(n),
            lambda_y_minus: Vec::with_capacity(n),
        };
        for k in 0..n {
            let tk = t.grid[k];
            let back = green.backward(tk);
            t.a_plus.push(green.a_plus(tk));
            t.a_minus.push(back.a);
            t.b_minus.push(back.b);
            t.c_minus.push(back.c);
            let v = linear.eval(&green, tk);
            t.theta_plus.push(v.theta_plus);
            t.theta_x_minus.push(v.theta_x);
            t.theta_y_minus.push(v.theta_y);
            let l = shift.eval(&green, tk);
            t.lambda_plus.push(l.lambda_plus);
            t.lambda_x_minus.push(l.lambda_x);
            t.lambda_y_minus.push(l.lambda_y);
        }
        Ok(t)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let dim = self.theta_plus.first().map_or(0, Vec::len);
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "t,a_plus,a_minus,b_minus,c_minus")?;
        for name in ["theta_plus", "theta_x_minus", "theta_y_minus"] {
            for j in 0..dim {
                write!(w, ",{name}_{j}")?;
            }
        }
        writeln!(w, ",lambda_plus,lambda_x_minus,lambda_y_minus")?;
        for k in 0..self.grid.len() {
            write!(
                w,
                "{},{},{},{},{}",
                self.grid[k], self.a_plus[k], self.a_minus[k], self.b_minus[k], self.c_minus[k]
            )?;
            for col in [&self.theta_plus, &self.theta_x_minus, &self.theta_y_minus] {
                for v in &col[k] {
                    write!(w, ",{v}")?;
                }
            }
            writeln!(
                w,
                ",{},{},{}",
                self.lambda_plus[k], self.lambda_x_minus[k], self.lambda_y_minus[k]
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::geometric_schedule;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn five_point(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
        (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn single_interval_values() {
        let s = PwcSchedule::uniform(vec![4.0]).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        let coth1 = 1.0 / 1f64.tanh();
        assert!(rel(g.a_plus(0.5), 2.0 * coth1) < 1e-14);
        let back = g.backward(0.5);
        assert!(rel(back.a, 2.0 * coth1) < 1e-14);
        assert!(rel(back.c, 2.0 * coth1) < 1e-14);
        assert!(rel(back.b, 2.0 / 1f64.sinh()) < 1e-14);
    }

    #[test]
    fn brownian_limit() {
        let s = PwcSchedule::brownian(4).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        for k in 1..100 {
            let t = k as f64 / 100.0;
            assert!(rel(g.a_plus(t), 1.0 / t) < 1e-13);
            let b = g.backward(t);
            for v in [b.a, b.b, b.c] {
                assert!(rel(v, 1.0 / (1.0 - t)) < 1e-12, "t={t} v={v}");
            }
        }
        let shift = g.shift_propagators();
        let l = shift.eval(&g, 0.3);
        assert_eq!((l.lambda_plus, l.lambda_x, l.lambda_y), (0.0, 0.0, 0.0));
    }

    #[test]
    fn small_beta_limit() {
        let s = geometric_schedule(1e-8, 0.65, 8).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        for k in 1..1000 {
            let t = k as f64 / 1000.0;
            assert!(rel(g.a_plus(t), 1.0 / t) < 1e-4);
            assert!(rel(g.backward(t).a, 1.0 / (1.0 - t)) < 1e-4);
        }
    }

    #[test]
    fn endpoint_asymptotics() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        let t = 1e-4;
        assert!((t * g.a_plus(t) - 1.0).abs() < 1e-3);
        let b = g.backward(1.0 - t);
        for v in [b.a, b.b, b.c] {
            assert!((t * v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn zero_guidance_gives_zero_theta() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        let lin = g.linear(&vec![vec![0.0, 0.0]; 8]).unwrap();
        for k in 1..50 {
            let v = lin.eval(&g, k as f64 / 50.0);
            assert!(v
                .theta_plus
                .iter()
                .chain(&v.theta_x)
                .chain(&v.theta_y)
                .all(|&x| x == 0.0));
        }
    }

    #[test]
    fn constant_protocol_theta_plus_one() {
        let beta = 3.7;
        let nu = -0.8;
        let s = PwcSchedule::uniform(vec![beta]).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        let lin = g.linear(&[vec![nu]]).unwrap();
        let w = beta.sqrt();
        let expect = beta / w * nu * (w.cosh() - 1.0) / w.sinh();
        assert!(rel(lin.theta_plus_one()[0], expect) < 1e-14);
        let split = PwcSchedule::new(vec![0.0, 0.3, 0.55, 1.0], vec![beta; 3]).unwrap();
        let g2 = GreenScalars::new(&split).unwrap();
        let lin2 = g2.linear(&vec![vec![nu]; 3]).unwrap();
        assert!(rel(lin2.theta_plus_one()[0], expect) < 1e-13);
        assert!(rel(g2.a_plus_one(), g.a_plus_one()) < 1e-13);
        let (b1, b2) = (g.backward(0.2), g2.backward(0.2));
        assert!(rel(b1.b, b2.b) < 1e-13 && rel(b1.c, b2.c) < 1e-13);
    }

    #[test]
    fn shift_propagators_are_unit_guidance() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        let unit = g.linear(&vec![vec![1.0]; 8]).unwrap();
        let shift = g.shift_propagators();
        for k in 1..40 {
            let t = k as f64 / 40.0;
            let a = unit.eval(&g, t);
            let l = shift.eval(&g, t);
            assert_eq!(a.theta_plus[0], l.lambda_plus);
            assert_eq!(a.theta_x[0], l.lambda_x);
            assert_eq!(a.theta_y[0], l.lambda_y);
        }
    }

    #[test]
    fn square_root_ratio_matches() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        for i in 0..7 {
            let anchor = g.backward_on(i + 1, s.end(i));
            for k in 0..10 {
                let t = s.start(i) + (k as f64 + 0.5) / 10.0 * (s.end(i) - s.start(i));
                let v = g.backward_on(i, t);
                let beta = s.beta(i);
                let ratio = ((v.a * v.a - beta) / (anchor.a * anchor.a - beta)).sqrt();
                assert!(rel(v.b, anchor.b * ratio) < 1e-12);
                let w = beta.sqrt();
                let tau = s.end(i) - t;
                let mobius =
                    w * (anchor.a + w * (w * tau).tanh()) / (w + anchor.a * (w * tau).tanh());
                assert!(rel(v.a, mobius) < 1e-13);
            }
        }
    }

    #[test]
    fn gains_match_finite_guidance_perturbation() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = GreenScalars::new(&s).unwrap();
        let base: Vec<Vec<f64>> = (0..8).map(|i| vec![0.3 * i as f64]).collect();
        let lin = g.linear(&base).unwrap();
        for &t in &[0.05, 0.4, 0.6, 0.93] {
            let i = s.interval_of(t).unwrap();
            let mut nu = base.clone();
            nu[i][0] += 1.0;
            let pert = g.linear(&nu).unwrap();
            let (a, b) = (lin.eval(&g, t), pert.eval(&g, t));
            let gains = LinearCoefficients::gains(&g, t);
            assert!((b.theta_x[0] - a.theta_x[0] - gains.gain_x).abs() < 1e-12);
            assert!((b.theta_y[0] - a.theta_y[0] - gains.gain_y).abs() < 1e-12);
        }
    }

    #[test]
    fn table_dump() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let nu: Vec<Vec<f64>> = (0..8).map(|i| vec![2.8 - 2.2 * s.midpoint(i)]).collect();
        let tab = CoeffTables::build(&s, &nu, 80).unwrap();
        assert_eq!(tab.grid.len(), 81);
        assert!(tab.a_plus[0].is_infinite() && tab.a_minus[80].is_infinite());
        assert_eq!(tab.theta_plus[0][0], 0.0);
        assert_eq!(tab.theta_x_minus[80][0], 0.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        tab.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.starts_with("t,a_plus,a_minus,b_minus,c_minus,theta_plus_0"));
        assert_eq!(text.lines().count(), 82);
        assert!(CoeffTables::build(&s, &nu, 40).is_err());
    }

    fn random_schedule() -> impl Strategy<Value = PwcSchedule> {
        (
            prop::sample::select(vec![1usize, 2, 4, 8]),
            0.5f64..20.0,
            0.3f64..1.0,
        )
            .prop_map(|(m, b0, g)| geometric_schedule(b0, g, m).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn continuity_across_breakpoints(s in random_schedule(), nu0 in -3.0f64..3.0, nu1 in -3.0f64..3.0) {
            let g = GreenScalars::new(&s).unwrap();
            let m = s.len();
            let nu: Vec<Vec<f64>> = (0..m).map(|i| vec![nu0 + (nu1 - nu0) * s.midpoint(i)]).collect();
            let lin = g.linear(&nu).unwrap();
            for i in 1..m {
                let t = s.start(i);
                let scale = |x: f64| x.abs().max(1.0);
                let (l, r) = (g.a_plus_on(i - 1, t), g.a_plus_on(i, t));
                prop_assert!((l - r).abs() / scale(r) < 1e-9);
                let (l, r) = (g.backward_on(i - 1, t), g.backward_on(i, t));
                for (x, y) in [(l.a, r.a), (l.b, r.b), (l.c, r.c)] {
                    prop_assert!((x - y).abs() / scale(y) < 1e-9);
                }
                let (l, r) = (lin.eval_on(&g, i - 1, t), lin.eval_on(&g, i, t));
                for (x, y) in [(&l.theta_plus, &r.theta_plus), (&l.theta_x, &r.theta_x), (&l.theta_y, &r.theta_y)] {
                    prop_assert!((x[0] - y[0]).abs() / scale(y[0]) < 1e-9);
                }
            }
        }

        #[test]
        fn riccati_residuals(s in random_schedule(), nu0 in -3.0f64..3.0) {
            let g = GreenScalars::new(&s).unwrap();
            let m = s.len();
            let nu: Vec<Vec<f64>> = (0..m).map(|i| vec![nu0 * (1.0 - s.midpoint(i))]).collect();
            let lin = g.linear(&nu).unwrap();
            let h = 1e-5;
            for i in 0..m {
                let beta = s.beta(i);
                for k in 1..8 {
                    let t = s.start(i) + k as f64 / 8.0 * (s.end(i) - s.start(i));
                    if !(0.01..=0.99).contains(&t) {
                        continue;
                    }
                    let ap = g.a_plus_on(i, t);
                    let dap = five_point(|u| g.a_plus_on(i, u), t, h);
                    prop_assert!((dap - beta + ap * ap).abs() < 1e-5 * ap.max(1.0).powi(2));
                    let bk = g.backward_on(i, t);
                    let da = five_point(|u| g.backward_on(i, u).a, t, h);
                    let db = five_point(|u| g.backward_on(i, u).b, t, h);
                    let dc = five_point(|u| g.backward_on(i, u).c, t, h);
                    let sc = bk.a.max(1.0).powi(2);
                    prop_assert!((da - bk.a * bk.a + beta).abs() < 1e-5 * sc);
                    prop_assert!((db - bk.a * bk.b).abs() < 1e-5 * sc);
                    prop_assert!((dc - bk.b * bk.b).abs() < 1e-5 * sc);
                    let v = lin.eval_on(&g, i, t);
                    let dtp = five_point(|u| lin.eval_on(&g, i, u).theta_plus[0], t, h);
                    let dtx = five_point(|u| lin.eval_on(&g, i, u).theta_x[0], t, h);
                    let dty = five_point(|u| lin.eval_on(&g, i, u).theta_y[0], t, h);
                    let n = nu[i][0];
                    prop_assert!((dtp + ap * v.theta_plus[0] - beta * n).abs() < 1e-5 * sc);
                    prop_assert!((dtx - bk.a * v.theta_x[0] + beta * n).abs() < 1e-5 * sc);
                    prop_assert!((dty + bk.b * v.theta_x[0]).abs() < 1e-5 * sc);
                }
            }
        }

        #[test]
        fn coefficients_positive(s in random_schedule()) {
            let g = GreenScalars::new(&s).unwrap();
            for k in 1..200 {
                let t = k as f64 / 200.0;
                prop_assert!(g.a_plus(t) > 0.0);
                let b = g.backward(t);
                prop_assert!(b.a > 0.0 && b.b > 0.0 && b.c > 0.0);
                prop_assert!(b.c - g.a_plus_one() > 0.0);
            }
        }
    }
}
