//! Closed-form Gaussian-mixture score, posterior and marginal density of
//! the mean-field bridge.
//!
//! Conditioning the backward kernel on the forward kernel turns the
//! terminal law into a Gaussian pseudo-observation, the probe
//! `N(y; μ_t(x), K_t⁻¹ I)` with `K_t = c-_t - a+_1`. The score is then
//!
//! ```text
//! u*(t, x) = b-_t ŷ(t, x) - a-_t x + θx_t
//! ```
//!
//! where `ŷ` is the posterior mean of the terminal point under the target
//! mixture and the probe.

mod mixture;

pub use mixture::{Covariance, Factor, GaussianMixture};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::greens::{GreenScalars, GuidanceGains, LinearCoefficients, ShiftPropagators};
use crate::guidance::GuidanceTrajectory;
use crate::schedule::PwcSchedule;
use mixture::log_sum_exp;

/// Probe parameters at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub k: f64,
    pub mu: Vec<f64>,
}

/// Posterior over the terminal point given `x_t = x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub y_hat: Vec<f64>,
}

/// Everything the score needs that does not depend on the particle.
#[derive(Debug, Clone)]
pub struct ScoreContext {
    green: GreenScalars,
    linear: LinearCoefficients,
    shift: ShiftPropagators,
    target: GaussianMixture,
    initial: Option<GaussianMixture>,
}

impl ScoreContext {
    /// `initial = None` means a delta start at the origin.
    pub fn new(
        schedule: &PwcSchedule,
        guidance: &GuidanceTrajectory,
        target: GaussianMixture,
        initial: Option<GaussianMixture>,
    ) -> Result<Self> {
        let d = target.dim();
        if guidance.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                got: guidance.dim(),
            });
        }
        if let Some(init) = &initial {
            if init.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: init.dim(),
                });
            }
        }
        let green = GreenScalars::new(schedule)?;
        let linear = green.linear(&guidance.per_interval(schedule)?)?;
        let shift = green.shift_propagators();
        Ok(Self {
            green,
            linear,
            shift,
            target,
            initial,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn target(&self) -> &GaussianMixture {
        &self.target
    }

    pub fn initial(&self) -> Option<&GaussianMixture> {
        self.initial.as_ref()
    }

    pub fn green(&self) -> &GreenScalars {
        &self.green
    }

    pub fn linear(&self) -> &LinearCoefficients {
        &self.linear
    }

    /// Per-time cache for `t ∈ (0, 1)`.
    pub fn slice(&self, t: f64) -> Result<TimeSlice<'_>> {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::OpenTimeOutOfRange { t });
        }
        let back = self.green.backward(t);
        let a_plus_one = self.green.a_plus_one();
        let k = back.c - a_plus_one;
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::NonPositiveProbe { t, k });
        }
        let d = self.dim();
        let mut theta_plus = vec![0.0; d];
        let mut theta_x = vec![0.0; d];
        let mut theta_y = vec![0.0; d];
        self.linear
            .eval_into(&self.green, t, &mut theta_plus, &mut theta_x, &mut theta_y);
        let lambda = self.shift.eval(&self.green, t);
        let factors = self
            .target
            .covariances()
            .iter()
            .map(|c| c.factor(1.0 / k))
            .collect::<Result<Vec<_>>>()?;
        let log_prior = self
            .target
            .weights()
            .iter()
            .zip(&factors)
            .map(|(w, f)| w.ln() - 0.5 * f.log_det())
            .collect();
        let interval = self.green.schedule().locate(t);
        Ok(TimeSlice {
            ctx: self,
            t,
            a_plus: self.green.a_plus(t),
            a_minus: back.a,
            b_minus: back.b,
            c_minus: back.c,
            k,
            theta_plus,
            theta_x,
            theta_y,
            lambda_plus: lambda.lambda_plus,
            lambda_x: lambda.lambda_x,
            lambda_y: lambda.lambda_y,
            lambda_plus_one: self.shift.lambda_plus_one(),
            gains: LinearCoefficients::gains(&self.green, t),
            interval,
            factors,
            log_prior,
        })
    }

    pub fn probe(&self, t: f64, x: &[f64]) -> Result<Probe> {
        let s = self.slice(t)?;
        check_dim(x, self.dim())?;
        let mut mu = vec![0.0; self.dim()];
        s.probe_mean(x, None, &mut mu);
        Ok(Probe { k: s.k, mu })
    }

    pub fn posterior(&self, t: f64, x: &[f64]) -> Result<Posterior> {
        let s = self.slice(t)?;
        check_dim(x, self.dim())?;
        Ok(s.posterior(x, None))
    }

    pub fn score_at(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let zero = vec![0.0; self.dim()];
        self.shifted_score(t, x, &zero)
    }

    /// Score for a particle started deterministically at `z`.
    pub fn shifted_score(&self, t: f64, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        let s = self.slice(t)?;
        check_dim(x, self.dim())?;
        check_dim(z, self.dim())?;
        let mut ws = ScoreWorkspace::new(self.dim(), self.target.len());
        let mut out = vec![0.0; self.dim()];
        s.score_into(x, z, None, &mut ws, &mut out);
        Ok(out)
    }

    /// Optimal marginal at time `t` for a deterministic start `z`.
    pub fn marginal_from(&self, t: f64, z: &[f64]) -> Result<GaussianMixture> {
        check_dim(z, self.dim())?;
        let s = self.slice(t)?;
        let parts = s.marginal_parts(z)?;
        let covs = parts
            .iter()
            .map(|p| Covariance::Dense(p.cov.clone()))
            .collect();
        let means = parts
            .iter()
            .map(|p| p.mean.iter().copied().collect())
            .collect();
        GaussianMixture::new(self.target.weights().to_vec(), means, covs)
    }

    /// Optimal marginal at time `t` for the context's initial law: `J × K`
    /// components for a mixture start, `K` for a delta start.
    pub fn marginal(&self, t: f64) -> Result<GaussianMixture> {
        let d = self.dim();
        let Some(init) = &self.initial else {
            return self.marginal_from(t, &vec![0.0; d]);
        };
        let s = self.slice(t)?;
        let base = s.marginal_parts(&vec![0.0; d])?;
        let mut gains = Vec::with_capacity(d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            gains.push(s.marginal_parts(&e)?);
        }
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covs = Vec::new();
        for (jw, (jm, jc)) in init
            .weights()
            .iter()
            .zip(init.means().iter().zip(init.covariances()))
        {
            let sigma = jc.to_dense();
            for (k, (kw, part)) in self.target.weights().iter().zip(&base).enumerate() {
                let a = DMatrix::from_fn(d, d, |r, c| gains[c][k].mean[r] - part.mean[r]);
                let mean = &part.mean + &a * DVector::from_column_slice(jm);
                let cov = &part.cov + &a * &sigma * a.transpose();
                let cov = (&cov + cov.transpose()) * 0.5;
                weights.push(jw * kw);
                means.push(mean.iter().copied().collect());
                covs.push(Covariance::Dense(cov));
            }
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|w| w / total).collect();
        GaussianMixture::new(weights, means, covs)
    }

    pub fn marginal_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        check_dim(x, self.dim())?;
        Ok(self.marginal(t)?.pdf(x))
    }

    /// Log of the unnormalised component weights of the delta-start marginal,
    /// `log π_k - ½log|S_k| - ½log|M_k| + ½hᵀM⁻¹h - ½rᵀS⁻¹r`.
    pub fn marginal_log_weights(&self, t: f64) -> Result<Vec<f64>> {
        let s = self.slice(t)?;
        let parts = s.marginal_parts(&vec![0.0; self.dim()])?;
        Ok(parts.iter().map(|p| p.log_weight).collect())
    }
}

fn check_dim(v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: v.len(),
        });
    }
    Ok(())
}

/// Scratch buffers for repeated score evaluations.
#[derive(Debug, Clone)]
pub struct ScoreWorkspace {
    xs: Vec<f64>,
    tx: Vec<f64>,
    mu: Vec<f64>,
    diff: Vec<f64>,
    w: Vec<f64>,
    y_hat: Vec<f64>,
    logw: Vec<f64>,
    comp: Vec<f64>,
}

impl ScoreWorkspace {
    pub fn new(dim: usize, components: usize) -> Self {
        Self {
            xs: vec![0.0; dim],
            tx: vec![0.0; dim],
            mu: vec![0.0; dim],
            diff: vec![0.0; dim],
            w: vec![0.0; dim],
            y_hat: vec![0.0; dim],
            logw: vec![0.0; components],
            comp: vec![0.0; dim * components],
        }
    }
}

struct MarginalPart {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_weight: f64,
}

/// Coefficients and per-component factors of `S_k = Σ_k + K⁻¹I` at one time.
#[derive(Debug, Clone)]
pub struct TimeSlice<'a> {
    ctx: &'a ScoreContext,
    pub t: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub b_minus: f64,
    pub c_minus: f64,
    pub k: f64,
    pub theta_plus: Vec<f64>,
    pub theta_x: Vec<f64>,
    pub theta_y: Vec<f64>,
    pub lambda_plus: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub lambda_plus_one: f64,
    pub gains: GuidanceGains,
    interval: usize,
    factors: Vec<Factor>,
    log_prior: Vec<f64>,
}

impl<'a> TimeSlice<'a> {
    pub fn components(&self) -> usize {
        self.factors.len()
    }

    /// Guidance value of the interval containing `t`.
    pub fn guidance(&self) -> &[f64] {
        &self.ctx.linear.guidance()[self.interval]
    }

    fn probe_mean(&self, x: &[f64], z: Option<&[f64]>, mu: &mut [f64]) {
        let tp1 = self.ctx.linear.theta_plus_one();
        for j in 0..x.len() {
            let zj = z.map_or(0.0, |z| z[j]);
            let ty = self.theta_y[j] - self.lambda_y * zj;
            let tp = tp1[j] - self.lambda_plus_one * zj;
            mu[j] = (self.b_minus * (x[j] - zj) + ty - tp) / self.k + zj;
        }
    }

    fn posterior(&self, x: &[f64], z: Option<&[f64]>) -> Posterior {
        let d = x.len();
        let kk = self.factors.len();
        let mut ws = ScoreWorkspace::new(d, kk);
        let mut mu = vec![0.0; d];
        self.probe_mean(x, z, &mut mu);
        ws.mu.copy_from_slice(&mu);
        self.posterior_in(&mut ws);
        Posterior {
            weights: ws.logw.clone(),
            means: ws.comp.chunks(d).map(<[f64]>::to_vec).collect(),
            y_hat: ws.y_hat.clone(),
        }
    }

    /// Fills `ws.logw` with normalised weights, `ws.comp` with component
    /// posterior means and `ws.y_hat` from the probe mean in `ws.mu`.
    fn posterior_in(&self, ws: &mut ScoreWorkspace) {
        let target = &self.ctx.target;
        let d = ws.mu.len();
        for k in 0..self.factors.len() {
            let m = &target.means()[k];
            for j in 0..d {
                ws.diff[j] = ws.mu[j] - m[j];
            }
            let q = self.factors[k].solve_quad(&ws.diff, &mut ws.w);
            ws.logw[k] = self.log_prior[k] - 0.5 * q;
            let out = &mut ws.comp[k * d..(k + 1) * d];
            match &target.covariances()[k] {
                Covariance::Diagonal(var) => {
                    for j in 0..d {
                        out[j] = m[j] + var[j] * ws.w[j];
                    }
                }
                Covariance::Dense(sigma) => {
                    for r in 0..d {
                        let mut s = m[r];
                        for c in 0..d {
                            s += sigma[(r, c)] * ws.w[c];
                        }
                        out[r] = s;
                    }
                }
            }
        }
        let z = log_sum_exp(&ws.logw);
        for v in ws.logw.iter_mut() {
            *v = (*v - z).exp();
        }
        ws.y_hat.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..self.factors.len() {
            let p = ws.logw[k];
            for j in 0..d {
                ws.y_hat[j] += p * ws.comp[k * d + j];
            }
        }
    }

    /// Score at `x` for a particle started at `z`. `offset`, if given, is
    /// added to the guidance of the current interval before scoring.
    pub fn score_into(
        &self,
        x: &[f64],
        z: &[f64],
        offset: Option<&[f64]>,
        ws: &mut ScoreWorkspace,
        out: &mut [f64],
    ) {
        let d = x.len();
        let tp1 = self.ctx.linear.theta_plus_one();
        let g = self.gains;
        for j in 0..d {
            let zj = z[j];
            let dv = offset.map_or(0.0, |o| o[j]);
            ws.xs[j] = x[j] - zj;
            ws.tx[j] = self.theta_x[j] - self.lambda_x * zj + g.gain_x * dv;
            let ty = self.theta_y[j] - self.lambda_y * zj + g.gain_y * dv;
            let tp = tp1[j] - self.lambda_plus_one * zj;
            ws.mu[j] = (self.b_minus * ws.xs[j] + ty - tp) / self.k + zj;
        }
        self.posterior_in(ws);
        for j in 0..d {
            out[j] = self.b_minus * (ws.y_hat[j] - z[j]) - self.a_minus * ws.xs[j] + ws.tx[j];
        }
    }

    fn marginal_parts(&self, z: &[f64]) -> Result<Vec<MarginalPart>> {
        let d = z.len();
        let target = &self.ctx.target;
        let tp1 = self.ctx.linear.theta_plus_one();
        let alpha = self.b_minus / self.k;
        let base = self.a_plus + self.a_minus - self.b_minus * alpha;
        let dbar = DVector::from_fn(d, |j, _| {
            let ty = self.theta_y[j] - self.lambda_y * z[j];
            let tp = tp1[j] - self.lambda_plus_one * z[j];
            (ty - tp) / self.k
        });
        let lin = DVector::from_fn(d, |j, _| {
            self.theta_plus[j] - self.lambda_plus * z[j] + self.theta_x[j] - self.lambda_x * z[j]
                + self.b_minus * dbar[j]
        });
        let shift = DVector::from_column_slice(z);
        let mut parts = Vec::with_capacity(target.len());
        for k in 0..target.len() {
            let s = target.covariances()[k].to_dense() + DMatrix::identity(d, d) / self.k;
            let s_inv = s
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NonPdCovariance(format!("S_k at t = {}", self.t)))?
                .inverse();
            let r = DVector::from_column_slice(&target.means()[k]) - &shift - &dbar;
            let m = DMatrix::identity(d, d) * base + &s_inv * (alpha * alpha);
            let h = &lin + &s_inv * &r * alpha;
            let ch = m
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NonPdCovariance(format!("M_k at t = {}", self.t)))?;
            let cov = ch.inverse();
            let mean_shifted = &cov * &h;
            let log_weight =
                target.weights()[k].ln() - 0.5 * s.determinant().ln() - 0.5 * m.determinant().ln()
                    + 0.5 * h.dot(&mean_shifted)
                    - 0.5 * r.dot(&(&s_inv * &r));
            parts.push(MarginalPart {
                mean: mean_shifted + &shift,
                cov: (&cov + cov.transpose()) * 0.5,
                log_weight,
            });
        }
        Ok(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::{constant_guidance, linear_guidance};
    use crate::schedule::geometric_schedule;

    fn scenario_a() -> (GaussianMixture, GaussianMixture) {
        let tar = GaussianMixture::new(
            vec![0.6, 0.4],
            vec![vec![0.0], vec![1.5]],
            vec![Covariance::isotropic(0.2, 1), Covariance::isotropic(0.3, 1)],
        )
        .unwrap();
        let init = GaussianMixture::new(
            vec![0.6, 0.4],
            vec![vec![1.0], vec![6.0]],
            vec![Covariance::isotropic(3.0, 1); 2],
        )
        .unwrap();
        (tar, init)
    }

    fn ctx_a() -> ScoreContext {
        let (tar, init) = scenario_a();
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = linear_guidance(&init.mean(), &tar.mean()).unwrap();
        ScoreContext::new(&s, &g, tar, Some(init)).unwrap()
    }

    #[test]
    fn brownian_probe() {
        let s = PwcSchedule::brownian(1).unwrap();
        let tar = GaussianMixture::gaussian(vec![0.0], Covariance::isotropic(1.0, 1)).unwrap();
        let ctx = ScoreContext::new(&s, &constant_guidance(&[0.0]), tar, None).unwrap();
        for &t in &[0.1, 0.5, 0.9] {
            let p = ctx.probe(t, &[0.7]).unwrap();
            assert!((p.k - t / (1.0 - t)).abs() < 1e-12);
            assert!((p.mu[0] - 0.7 / t).abs() < 1e-12);
            assert!(ctx.score_at(t, &[0.7]).unwrap()[0].abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_posterior() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let tar = GaussianMixture::gaussian(vec![0.3], Covariance::isotropic(0.5, 1)).unwrap();
        let ctx =
            ScoreContext::new(&s, &linear_guidance(&[0.0], &[0.3]).unwrap(), tar, None).unwrap();
        let p = ctx.posterior(0.4, &[1.0]).unwrap();
        assert_eq!(p.weights, vec![1.0]);
        assert_eq!(p.y_hat, p.means[0]);
    }

    #[test]
    fn dominance_far_in_basin() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let tar = GaussianMixture::new(
            vec![0.5, 0.5],
            vec![vec![0.0], vec![20.0]],
            vec![Covariance::isotropic(1.0, 1); 2],
        )
        .unwrap();
        let ctx = ScoreContext::new(&s, &constant_guidance(&[10.0]), tar, None).unwrap();
        let p = ctx.posterior(0.9, &[20.0]).unwrap();
        assert!(p.weights[1] > 1.0 - 1e-6);
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_with_zero_shift_is_identical() {
        let ctx = ctx_a();
        for &(t, x) in &[(0.1, -0.3), (0.5, 1.7), (0.97, 3.0)] {
            let a = ctx.score_at(t, &[x]).unwrap();
            let b = ctx.shifted_score(t, &[x], &[0.0]).unwrap();
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn marginal_weights_are_target_weights() {
        let ctx = ctx_a();
        for &t in &[0.05, 0.3, 0.6, 0.95] {
            let lw = ctx.marginal_log_weights(t).unwrap();
            let z = log_sum_exp(&lw);
            let w: Vec<f64> = lw.iter().map(|l| (l - z).exp()).collect();
            assert!(
                (w[0] - 0.6).abs() < 1e-9 && (w[1] - 0.4).abs() < 1e-9,
                "t={t} {w:?}"
            );
        }
    }

    #[test]
    fn marginal_endpoint_limits() {
        let ctx = ctx_a();
        let (tar, init) = scenario_a();
        let l1 = |p: &GaussianMixture, q: &GaussianMixture| {
            let h = 1e-3;
            (-20000..30000)
                .map(|k| {
                    let x = [k as f64 * h];
                    (p.pdf(&x) - q.pdf(&x)).abs() * h
                })
                .sum::<f64>()
        };
        let end = ctx.marginal(0.9995).unwrap();
        let start = ctx.marginal(1e-4).unwrap();
        let (e, s) = (l1(&end, &tar), l1(&start, &init));
        assert!(e < 1e-2 && s < 1e-2, "end {e} start {s} {end:?}");
    }

    #[test]
    fn delta_start_marginal_reaches_target() {
        let (tar, _) = scenario_a();
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = linear_guidance(&[0.0], &tar.mean()).unwrap();
        let ctx = ScoreContext::new(&s, &g, tar.clone(), None).unwrap();
        let p = ctx.marginal(0.999).unwrap();
        let h = 1e-4;
        let l1: f64 = (-30000..30000)
            .map(|k| {
                let x = [k as f64 * h];
                (p.pdf(&x) - tar.pdf(&x)).abs() * h
            })
            .sum();
        assert!(l1 < 1e-2, "{l1}");
    }

    #[test]
    fn marginal_mean_follows_guidance() {
        let ctx = ctx_a();
        for &t in &[0.2, 0.5, 0.8] {
            let m = ctx.marginal(t).unwrap().mean()[0];
            let lin = 3.0 - 2.4 * t;
            assert!((m - lin).abs() < 0.02, "t={t} m={m}");
        }
    }

    #[test]
    fn brownian_single_gaussian_matches_bridge() {
        let s = PwcSchedule::brownian(2).unwrap();
        let (m1, s1) = (1.3, 0.4);
        let tar = GaussianMixture::gaussian(vec![m1], Covariance::isotropic(s1, 1)).unwrap();
        let ctx = ScoreContext::new(&s, &constant_guidance(&[0.0]), tar, None).unwrap();
        let sol =
            crate::lqg::solve_lqg(&crate::lqg::LqgProblem::new(0.0, 0.0, m1, s1).unwrap()).unwrap();
        for &t in &[0.1, 0.4, 0.7] {
            let p = ctx.marginal(t).unwrap();
            assert!((p.mean()[0] - sol.mean(t)).abs() < 1e-12);
            assert!((p.variance()[0] - sol.variance(t)).abs() < 1e-12);
        }
    }
}
