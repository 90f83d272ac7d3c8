//! Piecewise-constant interaction protocol on the unit bridge interval.
//!
//! A [`PwcSchedule`] holds the breakpoints `0 = t_0 < ... < t_M = 1` and the
//! stiffness `beta_i` on each interval `[t_i, t_{i+1})`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwcSchedule {
    breakpoints: Vec<f64>,
    betas: Vec<f64>,
}

impl PwcSchedule {
    /// Builds a schedule with strictly positive `betas`.
    pub fn new(breakpoints: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        Self::build(breakpoints, betas, false)
    }

    /// Like [`PwcSchedule::new`] but also accepts `beta_i == 0`, the
    /// Schrödinger-bridge limit.
    pub fn with_zero_limit(breakpoints: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        Self::build(breakpoints, betas, true)
    }

    /// Uniform breakpoints `i/M` with the given interval values.
    pub fn uniform(betas: Vec<f64>) -> Result<Self> {
        let m = betas.len();
        if m == 0 {
            return Err(Error::Schedule("at least one interval is required".into()));
        }
        Self::new(uniform_breakpoints(m), betas)
    }

    /// All-zero stiffness over `m` uniform intervals.
    pub fn brownian(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Schedule("at least one interval is required".into()));
        }
        Self::with_zero_limit(uniform_breakpoints(m), vec![0.0; m])
    }

    fn build(breakpoints: Vec<f64>, betas: Vec<f64>, allow_zero: bool) -> Result<Self> {
        let m = betas.len();
        if m == 0 {
            return Err(Error::Schedule("at least one interval is required".into()));
        }
        if breakpoints.len() != m + 1 {
            return Err(Error::Schedule(format!(
                "{} breakpoints for {} intervals",
                breakpoints.len(),
                m
            )));
        }
        if breakpoints[0] != 0.0 || breakpoints[m] != 1.0 {
            return Err(Error::Schedule(
                "breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Schedule(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        for (i, &b) in betas.iter().enumerate() {
            let ok = b.is_finite() && (b > 0.0 || (allow_zero && b == 0.0));
            if !ok {
                return Err(Error::Schedule(format!(
                    "beta[{i}] = {b} is not admissible"
                )));
            }
        }
        Ok(Self { breakpoints, betas })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.betas[i]
    }

    pub fn start(&self, i: usize) -> f64 {
        self.breakpoints[i]
    }

    pub fn end(&self, i: usize) -> f64 {
        self.breakpoints[i + 1]
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        0.5 * (self.breakpoints[i] + self.breakpoints[i + 1])
    }

    /// Index `i` with `t_i <= t < t_{i+1}`; `t = 1` maps to the last interval.
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange { t });
        }
        Ok(self.locate(t))
    }

    pub(crate) fn locate(&self, t: f64) -> usize {
        let m = self.len();
        let i = self.breakpoints.partition_point(|&b| b <= t);
        i.saturating_sub(1).min(m - 1)
    }
}

/// `betas[j] = beta0 * gamma^j` on `m` uniform intervals.
pub fn geometric_schedule(beta0: f64, gamma: f64, m: usize) -> Result<PwcSchedule> {
    if !(beta0 > 0.0) || !beta0.is_finite() {
        return Err(Error::Schedule(format!("beta0 = {beta0} must be positive")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Schedule(format!(
            "gamma = {gamma} must lie in (0, 1]"
        )));
    }
    if m == 0 {
        return Err(Error::Schedule("M must be at least 1".into()));
    }
    let mut betas = Vec::with_capacity(m);
    let mut b = beta0;
    for _ in 0..m {
        betas.push(b);
        b *= gamma;
    }
    PwcSchedule::new(uniform_breakpoints(m), betas)
}

fn uniform_breakpoints(m: usize) -> Vec<f64> {
    (0..=m).map(|i| i as f64 / m as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_geometric_schedule() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        assert_eq!(s.beta(0), 12.0);
        assert!((s.beta(1) - 7.8).abs() < 1e-12);
        assert_eq!(s.breakpoints()[1], 0.125);
        assert_eq!(s.breakpoints()[8], 1.0);
    }

    #[test]
    fn constant_when_gamma_is_one() {
        let s = geometric_schedule(5.0, 1.0, 4).unwrap();
        assert_eq!(s.betas(), &[5.0, 5.0, 5.0, 5.0]);
    }

    #[test]
    fn lookup_is_left_closed() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        assert_eq!(s.interval_of(0.0).unwrap(), 0);
        assert_eq!(s.interval_of(0.999).unwrap(), 7);
        assert_eq!(s.interval_of(0.125).unwrap(), 1);
        assert_eq!(s.interval_of(1.0).unwrap(), 7);
        assert!(s.interval_of(1.0 + 1e-12).is_err());
        assert!(s.interval_of(-1e-12).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(geometric_schedule(0.0, 0.5, 4).is_err());
        assert!(geometric_schedule(1.0, 0.0, 4).is_err());
        assert!(geometric_schedule(1.0, 1.5, 4).is_err());
        assert!(geometric_schedule(1.0, 0.5, 0).is_err());
        assert!(PwcSchedule::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(PwcSchedule::with_zero_limit(vec![0.0, 1.0], vec![0.0]).is_ok());
        assert!(PwcSchedule::new(vec![0.0, 0.6, 0.5, 1.0], vec![1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn lookup_brackets_t(m in 1usize..40, t in 0.0f64..1.0) {
            let s = geometric_schedule(3.0, 0.8, m).unwrap();
            let i = s.interval_of(t).unwrap();
            prop_assert!(s.start(i) <= t && t < s.end(i));
        }

        #[test]
        fn geometric_ratio(b0 in 0.1f64..50.0, g in 0.05f64..1.0, m in 2usize..30) {
            let s = geometric_schedule(b0, g, m).unwrap();
            for w in s.betas().windows(2) {
                prop_assert!((w[1] / w[0] - g).abs() <= 1e-15);
            }
        }
    }
}
