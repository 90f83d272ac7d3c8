//! Closed-form scalar linear-quadratic mean-field bridge and its
//! independent-agent baselines.
//!
//! The state follows `dx = (-κx + u) dt + dW` with interaction cost
//! `q/2 (x - ν)²` and the affine optimal control `u = -(S_t x + s_t)`.
//! The Riccati coefficient `S` and the variance `Σ` are shared by the
//! mean-field and independent-agent problems; only the offset `s` differs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::guidance::{sinh_arc, sinh_arc_rate};

const DELTA_LIMIT: f64 = 1e-8;

/// Number of grid points used by the baseline quadratures and metrics.
pub const QUAD_POINTS: usize = 4001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LqgProblem {
    pub kappa: f64,
    pub q: f64,
    pub m_tar: f64,
    pub sigma_tar: f64,
}

impl LqgProblem {
    pub fn new(kappa: f64, q: f64, m_tar: f64, sigma_tar: f64) -> Result<Self> {
        let p = Self {
            kappa,
            q,
            m_tar,
            sigma_tar,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kappa = {} must be >= 0",
                self.kappa
            )));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "q = {} must be >= 0",
                self.q
            )));
        }
        if !self.m_tar.is_finite() {
            return Err(Error::InvalidArgument("m_tar must be finite".into()));
        }
        if !(self.sigma_tar > 0.0 && self.sigma_tar.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma_tar = {} must be positive",
                self.sigma_tar
            )));
        }
        Ok(())
    }
}

/// Closed-form mean-field solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LqgSolution {
    pub problem: LqgProblem,
    /// `Δ = sqrt(κ² + q)`.
    pub delta: f64,
    /// Shooting parameter; `NaN` in the `Δ → 0` limit where it is not used.
    pub rho: f64,
    /// `S_1`.
    pub s_one: f64,
    r0: f64,
    w0: f64,
}

/// Solves the Riccati bridge so that `Σ_1 = sigma_tar²` and `m_1 = m_tar`.
pub fn solve_lqg(problem: &LqgProblem) -> Result<LqgSolution> {
    problem.validate()?;
    let LqgProblem {
        kappa,
        q,
        sigma_tar,
        ..
    } = *problem;
    let delta = (kappa * kappa + q).sqrt();
    let var = sigma_tar * sigma_tar;
    if delta < DELTA_LIMIT {
        let c = 1.0 - var;
        return Ok(LqgSolution {
            problem: *problem,
            delta,
            rho: f64::NAN,
            s_one: c / (1.0 - c),
            r0: 1.0,
            w0: 1.0,
        });
    }
    let r0 = (-2.0 * delta).exp();
    let a = 2.0 * delta * var / -(-2.0 * delta).exp_m1();
    let denom = a * r0 - 1.0;
    let rho = (a - 1.0) / denom;
    if !rho.is_finite() || denom.abs() < 1e-12 {
        return Err(Error::InfeasibleVariance { a, r0, rho });
    }
    let mut sol = LqgSolution {
        problem: *problem,
        delta,
        rho,
        s_one: 0.0,
        r0,
        w0: 1.0 - rho * r0,
    };
    sol.s_one = sol.riccati(1.0);
    if !sol.s_one.is_finite() {
        return Err(Error::InfeasibleVariance { a, r0, rho });
    }
    Ok(sol)
}

impl LqgSolution {
    fn limit(&self) -> bool {
        self.delta < DELTA_LIMIT
    }

    fn limit_c(&self) -> f64 {
        1.0 - self.problem.sigma_tar * self.problem.sigma_tar
    }

    /// `w(t) = 1 - ρ exp(-2Δ(1 - t))`.
    fn w(&self, t: f64) -> f64 {
        1.0 - self.rho * (-2.0 * self.delta * (1.0 - t)).exp()
    }

    /// Riccati coefficient `S_t`.
    pub fn riccati(&self, t: f64) -> f64 {
        if self.limit() {
            let c = self.limit_c();
            return c / (1.0 - c * t);
        }
        let re = self.rho * (-2.0 * self.delta * (1.0 - t)).exp();
        -self.problem.kappa + self.delta * (1.0 + re) / (1.0 - re)
    }

    /// State variance `Σ_t`.
    pub fn variance(&self, t: f64) -> f64 {
        if self.limit() {
            return t * (1.0 - self.limit_c() * t);
        }
        let d2 = 2.0 * self.delta;
        self.w(t) * -(-d2 * t).exp_m1() / (d2 * self.w0)
    }

    /// Mean `m_t`, the sinh arc.
    pub fn mean(&self, t: f64) -> f64 {
        sinh_arc(self.problem.kappa, t) * self.problem.m_tar
    }

    /// Time derivative of [`LqgSolution::mean`].
    pub fn mean_rate(&self, t: f64) -> f64 {
        sinh_arc_rate(self.problem.kappa, t) * self.problem.m_tar
    }

    /// Mean-field offset `s_t`.
    pub fn offset(&self, t: f64) -> f64 {
        -self.mean_rate(t) - (self.problem.kappa + self.riccati(t)) * self.mean(t)
    }

    /// Integrating factor `g(t) = exp(∫_0^t (κ + S_u) du)`.
    pub fn growth(&self, t: f64) -> f64 {
        if self.limit() {
            return 1.0 / (1.0 - self.limit_c() * t);
        }
        (self.delta * t).exp() * self.w0 / self.w(t)
    }

    /// `J(t) = ∫_0^t du / g(u)`.
    pub fn growth_integral(&self, t: f64) -> f64 {
        if self.limit() {
            return t - 0.5 * self.limit_c() * t * t;
        }
        let d = self.delta;
        (-(-d * t).exp_m1() - self.rho * self.r0 * (d * t).exp_m1()) / (d * self.w0)
    }
}

fn simpson_weights(n: usize, h: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| {
        let w = if k == 0 || k == n - 1 {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        w * h / 3.0
    })
}

/// Composite Simpson integral of samples on a uniform grid with an odd
/// number of points.
pub fn simpson(f: &[f64], h: f64) -> f64 {
    simpson_weights(f.len(), h).zip(f).map(|(w, v)| w * v).sum()
}

/// Running Simpson integral: entry `k` approximates `∫_0^{t_k} f`.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut k = 0;
    while k + 2 < n || k + 1 < n {
        if k + 2 < n {
            out[k + 1] = out[k] + h * (5.0 * f[k] + 8.0 * f[k + 1] - f[k + 2]) / 12.0;
            out[k + 2] = out[k] + h * (f[k] + 4.0 * f[k + 1] + f[k + 2]) / 3.0;
            k += 2;
        } else {
            out[k + 1] = out[k] + h * (-f[k - 1] + 8.0 * f[k] + 5.0 * f[k + 1]) / 12.0;
            k += 1;
        }
    }
    out
}

/// Independent-agent baseline with the fixed interaction centre `m_bar`.
#[derive(Debug, Clone, Serialize)]
pub struct IaBaseline {
    pub solution: LqgSolution,
    pub m_bar: f64,
    pub s0: f64,
    pub a_tilde: f64,
    pub b_tilde: f64,
    means: Vec<f64>,
}

/// Builds the baseline whose mean reaches `m_tar` at `t = 1`.
pub fn ia_baseline(solution: &LqgSolution, m_bar: f64) -> Result<IaBaseline> {
    let n = QUAD_POINTS;
    let h = 1.0 / (n - 1) as f64;
    let ts: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
    let g: Vec<f64> = ts.iter().map(|&t| solution.growth(t)).collect();
    let j: Vec<f64> = ts.iter().map(|&t| solution.growth_integral(t)).collect();
    let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
    let g2j: Vec<f64> = g2.iter().zip(&j).map(|(a, b)| a * b).collect();
    if g2j.iter().chain(&g2).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("baseline quadrature".into()));
    }
    let g_one = g[n - 1];
    let a_tilde = simpson(&g2, h) / g_one;
    let b_tilde = simpson(&g2j, h) / g_one;
    let p = &solution.problem;
    let s0 = -(p.m_tar + p.q * m_bar * b_tilde) / a_tilde;
    let c2 = cumulative_simpson(&g2, h);
    let cj = cumulative_simpson(&g2j, h);
    let means = (0..n)
        .map(|k| -(s0 * c2[k] + p.q * m_bar * cj[k]) / g[k])
        .collect();
    Ok(IaBaseline {
        solution: *solution,
        m_bar,
        s0,
        a_tilde,
        b_tilde,
        means,
    })
}

impl IaBaseline {
    /// Offset `s_t` of the baseline control.
    pub fn offset(&self, t: f64) -> f64 {
        let s = &self.solution;
        s.growth(t) * (self.s0 + s.problem.q * self.m_bar * s.growth_integral(t))
    }

    /// Mean `m_t`, linearly interpolated between quadrature nodes.
    pub fn mean(&self, t: f64) -> f64 {
        let n = self.means.len();
        let x = t.clamp(0.0, 1.0) * (n - 1) as f64;
        let k = (x.floor() as usize).min(n - 2);
        let f = x - k as f64;
        self.means[k] * (1.0 - f) + self.means[k + 1] * f
    }

    /// Mean at `t = 1`.
    pub fn terminal_mean(&self) -> f64 {
        self.means[self.means.len() - 1]
    }
}

/// An affine feedback `u = -(S_t x + s_t)` together with the state moments
/// it induces.
pub trait AffineFeedback {
    fn gain(&self, t: f64) -> f64;
    fn offset(&self, t: f64) -> f64;
    fn mean(&self, t: f64) -> f64;
    fn variance(&self, t: f64) -> f64;
}

impl AffineFeedback for LqgSolution {
    fn gain(&self, t: f64) -> f64 {
        self.riccati(t)
    }
    fn offset(&self, t: f64) -> f64 {
        LqgSolution::offset(self, t)
    }
    fn mean(&self, t: f64) -> f64 {
        LqgSolution::mean(self, t)
    }
    fn variance(&self, t: f64) -> f64 {
        LqgSolution::variance(self, t)
    }
}

impl AffineFeedback for IaBaseline {
    fn gain(&self, t: f64) -> f64 {
        self.solution.riccati(t)
    }
    fn offset(&self, t: f64) -> f64 {
        IaBaseline::offset(self, t)
    }
    fn mean(&self, t: f64) -> f64 {
        IaBaseline::mean(self, t)
    }
    fn variance(&self, t: f64) -> f64 {
        self.solution.variance(t)
    }
}

/// Control statistics on a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct LqgMetrics {
    pub t: Vec<f64>,
    /// Mean control `-(S m + s)`.
    pub mu_u: Vec<f64>,
    /// Control variance `S² Σ`.
    pub sigma_u2: Vec<f64>,
    /// Power `E u² = S²Σ + (S m + s)²`.
    pub power: Vec<f64>,
    /// Cumulative energy `∫_0^t P`.
    pub energy: Vec<f64>,
}

impl LqgMetrics {
    pub fn total_energy(&self) -> f64 {
        *self.energy.last().unwrap_or(&0.0)
    }
}

pub fn lqg_metrics(feedback: &impl AffineFeedback, n_points: usize) -> Result<LqgMetrics> {
    if n_points < 3 {
        return Err(Error::InvalidArgument(
            "metrics need at least 3 points".into(),
        ));
    }
    let h = 1.0 / (n_points - 1) as f64;
    let t: Vec<f64> = (0..n_points).map(|k| k as f64 * h).collect();
    let mut mu_u = Vec::with_capacity(n_points);
    let mut sigma_u2 = Vec::with_capacity(n_points);
    let mut power = Vec::with_capacity(n_points);
    for &tk in &t {
        let s = feedback.gain(tk);
        let mu = -(s * feedback.mean(tk) + feedback.offset(tk));
        let var = s * s * feedback.variance(tk);
        mu_u.push(mu);
        sigma_u2.push(var);
        power.push(var + mu * mu);
    }
    if power.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("control power".into()));
    }
    let energy = cumulative_simpson(&power, h);
    Ok(LqgMetrics {
        t,
        mu_u,
        sigma_u2,
        power,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central(f: impl Fn(f64) -> f64, t: f64) -> f64 {
        let h = 1e-5;
        (f(t + h) - f(t - h)) / (2.0 * h)
    }

    #[test]
    fn zero_interaction_free_variance() {
        let k: f64 = 1.0;
        let var = (1.0 - (-2.0 * k).exp()) / 2.0;
        let sol = solve_lqg(&LqgProblem::new(k, 0.0, 0.0, var.sqrt()).unwrap()).unwrap();
        assert!(sol.rho.abs() < 1e-14);
        for i in 0..=10 {
            assert!(sol.riccati(i as f64 / 10.0).abs() < 1e-14);
        }
    }

    #[test]
    fn brownian_limit_mean() {
        let sol = solve_lqg(&LqgProblem::new(0.0, 0.0, 1.0, 0.5).unwrap()).unwrap();
        assert!((sol.mean(0.5) - 0.5).abs() < 1e-15);
        assert!((sol.variance(1.0) - 0.25).abs() < 1e-15);
        let sol = solve_lqg(&LqgProblem::new(1e-10, 0.0, 1.0, 0.5).unwrap()).unwrap();
        assert!((sol.mean(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tcl_bridge_constraints() {
        let sol = solve_lqg(&LqgProblem::new(0.8, 2.0, 1.5, 0.3).unwrap()).unwrap();
        assert_eq!(sol.variance(0.0), 0.0);
        assert!((sol.variance(1.0) - 0.09).abs() < 1e-12);
        assert_eq!(sol.mean(0.0), 0.0);
        assert!((sol.mean(1.0) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid() {
        assert!(LqgProblem::new(-1.0, 0.0, 0.0, 1.0).is_err());
        assert!(LqgProblem::new(1.0, -1.0, 0.0, 1.0).is_err());
        assert!(LqgProblem::new(1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn ia_trivial_cases() {
        let sol = solve_lqg(&LqgProblem::new(0.8, 2.0, 0.0, 0.3).unwrap()).unwrap();
        let ia = ia_baseline(&sol, 0.0).unwrap();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert!(ia.offset(t).abs() < 1e-14);
            assert!(ia.mean(t).abs() < 1e-14);
        }
        let sol = solve_lqg(&LqgProblem::new(0.8, 0.0, 1.2, 0.3).unwrap()).unwrap();
        let (a, b) = (
            ia_baseline(&sol, 0.0).unwrap(),
            ia_baseline(&sol, 5.0).unwrap(),
        );
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert_eq!(a.offset(t), b.offset(t));
        }
    }

    #[test]
    fn ia_reaches_target() {
        let sol = solve_lqg(&LqgProblem::new(0.8, 2.0, 1.5, 0.3).unwrap()).unwrap();
        for m_bar in [0.0, 0.75, 1.5] {
            let ia = ia_baseline(&sol, m_bar).unwrap();
            assert!((ia.terminal_mean() - 1.5).abs() < 1e-8);
        }
    }

    #[test]
    fn cumulative_simpson_polynomial() {
        let n = 101;
        let h = 1.0 / 100.0;
        let f: Vec<f64> = (0..n).map(|k| (k as f64 * h).powi(2)).collect();
        let c = cumulative_simpson(&f, h);
        for k in 0..n {
            let t = k as f64 * h;
            assert!((c[k] - t.powi(3) / 3.0).abs() < 1e-14);
        }
        assert!((simpson(&f, h) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn zero_control_zero_energy() {
        struct Zero;
        impl AffineFeedback for Zero {
            fn gain(&self, _: f64) -> f64 {
                0.0
            }
            fn offset(&self, _: f64) -> f64 {
                0.0
            }
            fn mean(&self, _: f64) -> f64 {
                0.0
            }
            fn variance(&self, t: f64) -> f64 {
                t
            }
        }
        let m = lqg_metrics(&Zero, 2001).unwrap();
        assert!(m.power.iter().chain(&m.energy).all(|&v| v == 0.0));
    }

    #[test]
    fn mean_field_beats_baselines() {
        let sol = solve_lqg(&LqgProblem::new(0.8, 2.0, 1.5, 0.3).unwrap()).unwrap();
        let mf = lqg_metrics(&sol, QUAD_POINTS).unwrap().total_energy();
        for k in 0..=10 {
            let ia = ia_baseline(&sol, 0.15 * k as f64).unwrap();
            let e = lqg_metrics(&ia, QUAD_POINTS).unwrap().total_energy();
            assert!(mf < e, "m_bar={} mf={mf} ia={e}", 0.15 * k as f64);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bridge_constraints(kappa in 0.0f64..3.0, q in 0.0f64..5.0, sig in 0.05f64..1.5, m in -3.0f64..3.0) {
            let sol = solve_lqg(&LqgProblem::new(kappa, q, m, sig).unwrap()).unwrap();
            prop_assert!((sol.variance(1.0) - sig * sig).abs() < 1e-10);
            prop_assert!((sol.mean(1.0) - m).abs() < 1e-12);
            prop_assert_eq!(sol.variance(0.0), 0.0);
        }

        #[test]
        fn ode_residuals(kappa in 0.0f64..3.0, q in 0.0f64..5.0, sig in 0.05f64..1.5, m in -3.0f64..3.0) {
            let sol = solve_lqg(&LqgProblem::new(kappa, q, m, sig).unwrap()).unwrap();
            for k in 1..=98 {
                let t = 0.01 + k as f64 * 0.01 - 0.01;
                let s = sol.riccati(t);
                let r1 = central(|u| sol.riccati(u), t) - (s * s + 2.0 * kappa * s - q);
                let r2 = central(|u| sol.variance(u), t) - (-2.0 * (kappa + s) * sol.variance(t) + 1.0);
                let r3 = central(|u| sol.mean(u), t) + (kappa + s) * sol.mean(t) + sol.offset(t);
                let r4 = central(|u| sol.offset(u), t) - ((kappa + s) * sol.offset(t) + q * sol.mean(t));
                let scale = 1.0f64.max(s.abs()).powi(2);
                for r in [r1, r2, r3, r4] {
                    prop_assert!(r.abs() < 1e-5 * scale, "t={} r={}", t, r);
                }
            }
        }

        #[test]
        fn energy_ordering(kappa in 0.0f64..3.0, q in 0.1f64..5.0, sig in 0.05f64..1.5, m in 0.2f64..3.0) {
            let sol = solve_lqg(&LqgProblem::new(kappa, q, m, sig).unwrap()).unwrap();
            let mf = lqg_metrics(&sol, 2001).unwrap().total_energy();
            for k in 0..=4 {
                let ia = ia_baseline(&sol, m * k as f64 / 4.0).unwrap();
                let e = lqg_metrics(&ia, 2001).unwrap().total_energy();
                prop_assert!(mf <= e * (1.0 + 1e-9));
            }
        }
    }
}
