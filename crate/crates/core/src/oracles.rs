//! Brute-force references for testing the closed forms.
//!
//! Everything here is computed from the defining differential equations or
//! integrals: fourth-order Runge–Kutta for the Riccati and linear systems,
//! composite Simpson quadrature for the potential `ψ_t`, and bisection for
//! shooting problems. No code is shared with [`crate::greens`],
//! [`crate::lqg`] or [`crate::score`].

use crate::error::{Error, Result};
use crate::schedule::PwcSchedule;

/// Offset from a singular endpoint where integration starts.
pub const SINGULAR_OFFSET: f64 = 1e-6;
const H_MAX: f64 = 1e-4;
const H_REL: f64 = 1e-3;

/// Root of a continuous function with a sign change on `[lo, hi]`, located
/// to an absolute width of `tol`.
///
/// Every eighth halving, and after every successful probe, a tight bracket
/// around the secant estimate is tested and kept when the sign change is
/// confirmed there, so smooth objectives converge in far fewer evaluations
/// while the bracket stays guaranteed.
pub fn bisection_shoot(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let mut probe_hit = false;
    for iteration in 1..=400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        if (probe_hit || iteration % 8 == 0) && flo.is_finite() && fhi.is_finite() {
            let shrink = if probe_hit { 1e-6 } else { 1e-3 };
            probe_hit = false;
            let guess = lo - flo * (hi - lo) / (fhi - flo);
            let delta = ((hi - lo) * shrink).max(tol);
            let (a, b) = ((guess - delta).max(lo), (guess + delta).min(hi));
            if a > lo || b < hi {
                let fa = if a > lo { f(a) } else { flo };
                let fb = if b < hi { f(b) } else { fhi };
                if fa.signum() == flo.signum() && fb.signum() != flo.signum() && !fb.is_nan() {
                    lo = a;
                    flo = fa;
                    hi = b;
                    fhi = fb;
                    probe_hit = true;
                }
            }
        }
    }
    Ok(0.5 * (lo + hi))
}

fn rk4_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    s: f64,
    y: &mut [f64; N],
    h: f64,
) {
    let add = |y: &[f64; N], k: &[f64; N], c: f64| {
        let mut o = *y;
        for i in 0..N {
            o[i] += c * k[i];
        }
        o
    };
    let k1 = f(s, y);
    let k2 = f(s + 0.5 * h, &add(y, &k1, 0.5 * h));
    let k3 = f(s + 0.5 * h, &add(y, &k2, 0.5 * h));
    let k4 = f(s + h, &add(y, &k3, h));
    for i in 0..N {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Integrates `dy/ds = f(s, y)` from `s0` to `s1` with steps that shrink
/// geometrically near `s = 0`.
fn integrate<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    y: &mut [f64; N],
    s0: f64,
    s1: f64,
) {
    let mut s = s0;
    while s < s1 {
        let h = (H_REL * s).clamp(0.0, H_MAX).max(1e-12).min(s1 - s);
        rk4_step(f, s, y, h);
        s = if s1 - s - h < 1e-15 { s1 } else { s + h };
    }
}

/// Forward reference values at one time.
#[derive(Debug, Clone, Copy)]
pub struct ForwardSample {
    pub t: f64,
    pub a_plus: f64,
    pub theta_plus: f64,
}

/// Backward reference values at one time.
#[derive(Debug, Clone, Copy)]
pub struct BackwardSample {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub theta_x: f64,
    pub theta_y: f64,
}

fn check_times(times: &[f64], lo: f64, hi: f64) -> Result<()> {
    for &t in times {
        if !(t >= lo && t <= hi) {
            return Err(Error::OpenTimeOutOfRange { t });
        }
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("query times must be sorted".into()));
    }
    Ok(())
}

/// RK4 solution of `da/dt = β - a²`, `dθ/dt = -aθ + βν` from the singular
/// start, for scalar per-interval guidance `nu`, evaluated at sorted `times`
/// in `[SINGULAR_OFFSET, 1]`.
pub fn rk4_forward(
    schedule: &PwcSchedule,
    nu: &[f64],
    times: &[f64],
) -> Result<Vec<ForwardSample>> {
    check_times(times, SINGULAR_OFFSET, 1.0)?;
    let eps = SINGULAR_OFFSET;
    let b0 = schedule.betas()[0];
    let mut y = [1.0 / eps + b0 * eps / 3.0, b0 * nu[0] * eps / 2.0];
    let mut t = eps;
    let bp = schedule.breakpoints();
    let mut out = Vec::with_capacity(times.len());
    let mut i = 0;
    for &tq in times {
        while t < tq {
            while i + 1 < schedule.len() && t >= bp[i + 1] {
                i += 1;
            }
            let stop = if i + 1 < schedule.len() {
                tq.min(bp[i + 1])
            } else {
                tq
            };
            let beta = schedule.betas()[i];
            let n = nu[i];
            let rhs = |_s: f64, y: &[f64; 2]| [beta - y[0] * y[0], -y[0] * y[1] + beta * n];
            integrate(&rhs, &mut y, t, stop);
            t = stop;
        }
        out.push(ForwardSample {
            t: tq,
            a_plus: y[0],
            theta_plus: y[1],
        });
    }
    Ok(out)
}

/// RK4 solution of the backward system from the singular terminal point,
/// evaluated at sorted `times` in `[0, 1 - SINGULAR_OFFSET]`.
pub fn rk4_backward(
    schedule: &PwcSchedule,
    nu: &[f64],
    times: &[f64],
) -> Result<Vec<BackwardSample>> {
    check_times(times, 0.0, 1.0 - SINGULAR_OFFSET)?;
    let eps = SINGULAR_OFFSET;
    let m = schedule.len();
    let bl = schedule.betas()[m - 1];
    let big = 1.0 / eps;
    let mut y = [
        big + bl * eps / 3.0,
        big - bl * eps / 6.0,
        big + bl * eps / 3.0,
        bl * nu[m - 1] * eps / 2.0,
        bl * nu[m - 1] * eps / 2.0,
    ];
    // s = 1 - t runs forward.
    let mut s = eps;
    let bp = schedule.breakpoints();
    let mut out = Vec::with_capacity(times.len());
    let mut i = m - 1;
    for &tq in times.iter().rev() {
        let sq = 1.0 - tq;
        while s < sq {
            while i > 0 && s >= 1.0 - bp[i] {
                i -= 1;
            }
            let stop = if i > 0 { sq.min(1.0 - bp[i]) } else { sq };
            let beta = schedule.betas()[i];
            let n = nu[i];
            let rhs = |_s: f64, y: &[f64; 5]| {
                [
                    beta - y[0] * y[0],
                    -y[0] * y[1],
                    -y[1] * y[1],
                    -y[0] * y[3] + beta * n,
                    y[1] * y[3],
                ]
            };
            integrate(&rhs, &mut y, s, stop);
            s = stop;
        }
        out.push(BackwardSample {
            t: tq,
            a: y[0],
            b: y[1],
            c: y[2],
            theta_x: y[3],
            theta_y: y[4],
        });
    }
    out.reverse();
    Ok(out)
}

/// A one-dimensional Gaussian mixture described by raw parameters.
#[derive(Debug, Clone)]
pub struct Mixture1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Mixture1d {
    fn log_component(&self, k: usize, y: f64) -> f64 {
        let z = (y - self.means[k]) / self.stds[k];
        self.weights[k].ln()
            - 0.5 * z * z
            - self.stds[k].ln()
            - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Coefficients needed to evaluate `ψ_t` at one time.
#[derive(Debug, Clone, Copy)]
pub struct PsiCoefficients {
    pub backward: BackwardSample,
    pub a_plus_one: f64,
    pub theta_plus_one: f64,
}

impl PsiCoefficients {
    /// Computes all coefficients for time `t` by RK4.
    pub fn at(schedule: &PwcSchedule, nu: &[f64], t: f64) -> Result<Self> {
        let fwd = rk4_forward(schedule, nu, &[1.0])?[0];
        let back = rk4_backward(schedule, nu, &[t])?[0];
        Ok(Self {
            backward: back,
            a_plus_one: fwd.a_plus,
            theta_plus_one: fwd.theta_plus,
        })
    }
}

/// Composite Simpson nodes and weights.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn simpson(lo: f64, hi: f64, n: usize) -> Self {
        let n = if n % 2 == 0 { n + 1 } else { n.max(3) };
        let h = (hi - lo) / (n - 1) as f64;
        let nodes = (0..n).map(|k| lo + h * k as f64).collect();
        let weights = (0..n)
            .map(|k| {
                let w = if k == 0 || k == n - 1 {
                    1.0
                } else if k % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * h / 3.0
            })
            .collect();
        Self { nodes, weights }
    }

    /// Grid covering every mixture component, the probe law at `x`, and each
    /// component's posterior, resolving the narrowest of them.
    pub fn for_psi(target: &Mixture1d, coeffs: &PsiCoefficients, xs: &[f64]) -> Self {
        let bk = &coeffs.backward;
        let k_prec = bk.c - coeffs.a_plus_one;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut finest = f64::INFINITY;
        for k in 0..target.weights.len() {
            let (m, s) = (target.means[k], target.stds[k]);
            lo = lo.min(m - 8.0 * s);
            hi = hi.max(m + 8.0 * s);
            let post_sd = (1.0 / (s * s) + k_prec).powf(-0.5);
            finest = finest.min(post_sd);
            for &x in xs {
                let mu = (bk.b * x + bk.theta_y - coeffs.theta_plus_one) / k_prec;
                let pm = (m / (s * s) + k_prec * mu) * post_sd * post_sd;
                lo = lo.min(pm - 10.0 * post_sd).min(mu - 8.0 / k_prec.sqrt());
                hi = hi.max(pm + 10.0 * post_sd).max(mu + 8.0 / k_prec.sqrt());
            }
        }
        let n = (((hi - lo) / (finest / 40.0)).ceil() as usize).max(2001);
        Self::simpson(lo, hi, n)
    }
}

/// `log ψ_t(x)` up to an `x`-independent constant, by quadrature of
/// `p_tar(y) G-_t(x; y) / G+_1(y)` in the log domain.
pub fn log_psi(target: &Mixture1d, coeffs: &PsiCoefficients, grid: &QuadratureGrid, x: f64) -> f64 {
    let bk = &coeffs.backward;
    let logs: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&y| {
            let lp = log_sum_exp((0..target.weights.len()).map(|k| target.log_component(k, y)));
            let g_minus = -0.5 * bk.a * x * x + bk.b * x * y - 0.5 * bk.c * y * y
                + bk.theta_x * x
                + bk.theta_y * y;
            let g_plus = -0.5 * coeffs.a_plus_one * y * y + coeffs.theta_plus_one * y;
            lp + g_minus - g_plus
        })
        .collect();
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = logs
        .iter()
        .zip(&grid.weights)
        .map(|(l, w)| w * (l - mx).exp())
        .sum();
    mx + s.ln()
}

/// Central-difference derivative of [`log_psi`].
pub fn score_fd(target: &Mixture1d, coeffs: &PsiCoefficients, x: f64, h: f64) -> f64 {
    let grid = QuadratureGrid::for_psi(target, coeffs, &[x - h, x + h]);
    (log_psi(target, coeffs, &grid, x + h) - log_psi(target, coeffs, &grid, x - h)) / (2.0 * h)
}

/// Posterior component weights and mean of the terminal point given `x_t = x`
/// by quadrature.
pub fn posterior_quadrature(
    target: &Mixture1d,
    coeffs: &PsiCoefficients,
    x: f64,
) -> (Vec<f64>, f64) {
    let grid = QuadratureGrid::for_psi(target, coeffs, &[x]);
    let bk = &coeffs.backward;
    let kk = target.weights.len();
    let mut mass = vec![0.0; kk];
    let mut first = 0.0;
    let mut logs = Vec::with_capacity(grid.nodes.len() * kk);
    for &y in &grid.nodes {
        let kern =
            bk.b * x * y - 0.5 * bk.c * y * y + bk.theta_y * y + 0.5 * coeffs.a_plus_one * y * y
                - coeffs.theta_plus_one * y;
        for k in 0..kk {
            logs.push(target.log_component(k, y) + kern);
        }
    }
    let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (j, &y) in grid.nodes.iter().enumerate() {
        for k in 0..kk {
            let v = grid.weights[j] * (logs[j * kk + k] - mx).exp();
            mass[k] += v;
            first += v * y;
        }
    }
    let total: f64 = mass.iter().sum();
    (mass.iter().map(|m| m / total).collect(), first / total)
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Reference trajectories for the scalar LQG bridge on a uniform grid.
#[derive(Debug, Clone)]
pub struct LqgReference {
    pub grid: Vec<f64>,
    pub s_quad: Vec<f64>,
    pub sigma: Vec<f64>,
    pub s1: f64,
    pub rho: f64,
}

/// Number of intervals on the LQG reference grid.
pub const LQG_STEPS: usize = 20_000;

fn riccati_backward(kappa: f64, q: f64, s1: f64) -> Vec<f64> {
    // Values on the half-step grid, index k ↔ t = k / (2 LQG_STEPS).
    let n = 2 * LQG_STEPS;
    let h = 1.0 / n as f64;
    let mut out = vec![0.0; n + 1];
    let mut y = [s1];
    out[n] = s1;
    let rhs = |_s: f64, y: &[f64; 1]| [-(y[0] * y[0] + 2.0 * kappa * y[0] - q)];
    for k in (0..n).rev() {
        rk4_step(&rhs, 0.0, &mut y, h);
        out[k] = if y[0].is_finite() { y[0] } else { f64::NAN };
    }
    out
}

fn variance_forward(kappa: f64, s_half: &[f64]) -> Vec<f64> {
    let h = 1.0 / LQG_STEPS as f64;
    let mut out = vec![0.0; LQG_STEPS + 1];
    let mut v = 0.0;
    for k in 0..LQG_STEPS {
        let (s0, sm, s1) = (s_half[2 * k], s_half[2 * k + 1], s_half[2 * k + 2]);
        let f = |s: f64, v: f64| -2.0 * (kappa + s) * v + 1.0;
        let k1 = f(s0, v);
        let k2 = f(sm, v + 0.5 * h * k1);
        let k3 = f(sm, v + 0.5 * h * k2);
        let k4 = f(s1, v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out[k + 1] = v;
    }
    out
}

/// Shoots the terminal Riccati value so that the RK4 variance hits
/// `sigma_tar²` at `t = 1`.
pub fn rk4_lqg(kappa: f64, q: f64, sigma_tar: f64) -> Result<LqgReference> {
    let target = sigma_tar * sigma_tar;
    let terminal_var = |s1: f64| {
        let s = riccati_backward(kappa, q, s1);
        if s.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        let v = variance_forward(kappa, &s)[LQG_STEPS];
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let hi = 1e4;
    let mut lo = -kappa - 1.0;
    while terminal_var(lo) - target < 0.0 {
        lo = -kappa - 2.0 * (kappa + lo).abs() - 1.0;
        if lo < -1e6 {
            return Err(Error::NoSignChange { lo, hi });
        }
    }
    let s1 = bisection_shoot(|s1| terminal_var(s1) - target, lo, hi, 1e-13)?;
    let s_half = riccati_backward(kappa, q, s1);
    let sigma = variance_forward(kappa, &s_half);
    let delta = (kappa * kappa + q).sqrt();
    Ok(LqgReference {
        grid: (0..=LQG_STEPS)
            .map(|k| k as f64 / LQG_STEPS as f64)
            .collect(),
        s_quad: s_half.iter().step_by(2).copied().collect(),
        sigma,
        s1,
        rho: (s1 + kappa - delta) / (s1 + kappa + delta),
    })
}

/// Mean and linear coefficient of the control shot to `m_1 = m_tar`.
///
/// With `m_bar = None` the interaction centre is the mean itself; otherwise
/// it is the fixed value `m_bar`.
pub fn rk4_lqg_mean(
    kappa: f64,
    q: f64,
    m_tar: f64,
    reference: &LqgReference,
    m_bar: Option<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let s_half = riccati_backward(kappa, q, reference.s1);
    let run = |s0: f64| {
        let h = 1.0 / LQG_STEPS as f64;
        let mut ms = vec![0.0; LQG_STEPS + 1];
        let mut ss = vec![s0; LQG_STEPS + 1];
        let mut y = [0.0, s0];
        for k in 0..LQG_STEPS {
            let f = |sq: f64, y: [f64; 2]| {
                let centre = m_bar.unwrap_or(y[0]);
                [
                    -(kappa + sq) * y[0] - y[1],
                    (kappa + sq) * y[1] + q * centre,
                ]
            };
            let (a, b, c) = (s_half[2 * k], s_half[2 * k + 1], s_half[2 * k + 2]);
            let k1 = f(a, y);
            let k2 = f(b, [y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
            let k3 = f(b, [y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
            let k4 = f(c, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            for j in 0..2 {
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            ms[k + 1] = y[0];
            ss[k + 1] = y[1];
        }
        (ms, ss)
    };
    let s0 = bisection_shoot(|s0| run(s0).0[LQG_STEPS] - m_tar, -1e4, 1e4, 1e-13)?;
    Ok(run(s0))
}
