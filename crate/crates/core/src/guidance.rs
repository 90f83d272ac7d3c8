//! Mean-field guidance trajectories `ν_t`.
//!
//! With zero base drift the population mean of the optimal bridge moves on
//! the straight line between the endpoint means, whatever the stiffness
//! protocol. With an Ornstein–Uhlenbeck drift it follows the sinh arc. The
//! fixed-point iteration re-estimates `ν` from simulated ensembles and is
//! kept as a numerical cross-check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schedule::PwcSchedule;
use crate::simulate::{run_bridge, GuidanceMode, SimConfig};

const KAPPA_LIMIT: f64 = 1e-8;

/// `sinh(κt) / sinh(κ)`, or `t` for `κ <= 1e-8`.
pub fn sinh_arc(kappa: f64, t: f64) -> f64 {
    if kappa <= KAPPA_LIMIT {
        t
    } else {
        (kappa * t).sinh() / kappa.sinh()
    }
}

/// Time derivative of [`sinh_arc`].
pub fn sinh_arc_rate(kappa: f64, t: f64) -> f64 {
    if kappa <= KAPPA_LIMIT {
        1.0
    } else {
        kappa * (kappa * t).cosh() / kappa.sinh()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Shape {
    Linear {
        m_in: Vec<f64>,
        m_tar: Vec<f64>,
    },
    Ou {
        kappa: f64,
        m_tar: Vec<f64>,
    },
    Constant {
        value: Vec<f64>,
    },
    Piecewise {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// A guidance trajectory with a dense evaluator and a per-interval
/// representative for the piecewise-constant coefficient recursions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuidanceTrajectory {
    shape: Shape,
}

pub fn linear_guidance(m_in: &[f64], m_tar: &[f64]) -> Result<GuidanceTrajectory> {
    if m_in.len() != m_tar.len() {
        return Err(Error::Dimension {
            expected: m_in.len(),
            got: m_tar.len(),
        });
    }
    Ok(GuidanceTrajectory {
        shape: Shape::Linear {
            m_in: m_in.to_vec(),
            m_tar: m_tar.to_vec(),
        },
    })
}

pub fn ou_guidance(kappa: f64, m_tar: &[f64]) -> Result<GuidanceTrajectory> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "kappa = {kappa} must be >= 0"
        )));
    }
    if kappa <= KAPPA_LIMIT {
        return linear_guidance(&vec![0.0; m_tar.len()], m_tar);
    }
    Ok(GuidanceTrajectory {
        shape: Shape::Ou {
            kappa,
            m_tar: m_tar.to_vec(),
        },
    })
}

pub fn constant_guidance(value: &[f64]) -> GuidanceTrajectory {
    GuidanceTrajectory {
        shape: Shape::Constant {
            value: value.to_vec(),
        },
    }
}

/// One value per interval of `schedule`.
pub fn piecewise_guidance(
    schedule: &PwcSchedule,
    values: Vec<Vec<f64>>,
) -> Result<GuidanceTrajectory> {
    if values.len() != schedule.len() {
        return Err(Error::Dimension {
            expected: schedule.len(),
            got: values.len(),
        });
    }
    let d = values[0].len();
    if values.iter().any(|v| v.len() != d) {
        return Err(Error::InvalidArgument("ragged guidance values".into()));
    }
    Ok(GuidanceTrajectory {
        shape: Shape::Piecewise {
            breakpoints: schedule.breakpoints().to_vec(),
            values,
        },
    })
}

impl GuidanceTrajectory {
    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Linear { m_in, .. } => m_in.len(),
            Shape::Ou { m_tar, .. } => m_tar.len(),
            Shape::Constant { value } => value.len(),
            Shape::Piecewise { values, .. } => values[0].len(),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match &self.shape {
            Shape::Linear { m_in, m_tar } => m_in
                .iter()
                .zip(m_tar)
                .map(|(a, b)| (1.0 - t) * a + t * b)
                .collect(),
            Shape::Ou { kappa, m_tar } => {
                let f = sinh_arc(*kappa, t);
                m_tar.iter().map(|m| f * m).collect()
            }
            Shape::Constant { value } => value.clone(),
            Shape::Piecewise {
                breakpoints,
                values,
            } => {
                let m = values.len();
                let i = breakpoints
                    .partition_point(|&b| b <= t)
                    .saturating_sub(1)
                    .min(m - 1);
                values[i].clone()
            }
        }
    }

    /// Representative value on each interval of `schedule`: the interval
    /// midpoint value for continuous shapes, the stored value otherwise.
    pub fn per_interval(&self, schedule: &PwcSchedule) -> Result<Vec<Vec<f64>>> {
        match &self.shape {
            Shape::Piecewise {
                breakpoints,
                values,
            } => {
                if breakpoints.as_slice() != schedule.breakpoints() {
                    return Err(Error::InvalidArgument(
                        "piecewise guidance was built for a different schedule".into(),
                    ));
                }
                Ok(values.clone())
            }
            _ => Ok((0..schedule.len())
                .map(|i| self.eval(schedule.midpoint(i)))
                .collect()),
        }
    }
}

/// One Picard step record.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `max_i |ν_i^(k+1) - ν_i^(k)|` over intervals and coordinates.
    pub max_update: f64,
    /// `max_j |ν_i,j - ν_lin,j(t_mid,i)|` per interval after the update.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointResult {
    pub guidance: GuidanceTrajectory,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

impl FixedPointResult {
    pub fn iterations(&self) -> usize {
        self.log.len()
    }

    /// Largest midpoint deviation from the linear interpolant at the end.
    pub fn max_residual(&self) -> f64 {
        self.log.last().map_or(f64::NAN, |r| {
            r.residuals.iter().cloned().fold(0.0, f64::max)
        })
    }
}

/// Picard iteration `ν^(k+1)_i = E[x_{t_mid,i}]` under guidance `ν^(k)`,
/// started from the constant target mean. Every iteration reuses the seed of
/// `config`, so successive iterates differ only through the guidance.
pub fn fixed_point_guidance(
    config: &SimConfig,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    let schedule = &config.schedule;
    let m_tar = config.target.mean();
    let m_in = config.initial_mean();
    let lin = linear_guidance(&m_in, &m_tar)?;
    let lin_mid = lin.per_interval(schedule)?;
    let mut nu: Vec<Vec<f64>> = vec![m_tar.clone(); schedule.len()];
    let mut log = Vec::new();
    let mut converged = false;
    for iteration in 1..=max_iter {
        let mut cfg = config.clone();
        cfg.mode = GuidanceMode::Fixed(piecewise_guidance(schedule, nu.clone())?);
        cfg.record_paths = 0;
        let run = run_bridge(&cfg)?;
        let next: Vec<Vec<f64>> = (0..schedule.len())
            .map(|i| run.mean_at(schedule.midpoint(i)))
            .collect();
        let max_update = next
            .iter()
            .zip(&nu)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        let residuals = next
            .iter()
            .zip(&lin_mid)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        nu = next;
        log.push(IterationRecord {
            iteration,
            max_update,
            residuals,
        });
        if max_update < tol {
            converged = true;
            break;
        }
    }
    Ok(FixedPointResult {
        guidance: piecewise_guidance(schedule, nu)?,
        log,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::geometric_schedule;

    #[test]
    fn scenario_lines() {
        let a = linear_guidance(&[2.8], &[0.6]).unwrap();
        assert!((a.eval(0.5)[0] - 1.7).abs() < 1e-15);
        let b = linear_guidance(&[2.3], &[0.6]).unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert!((b.eval(t)[0] - (2.3 - 1.7 * t)).abs() < 1e-14);
        }
        let c = linear_guidance(&[0.4, -1.0], &[0.4, -1.0]).unwrap();
        assert_eq!(c.eval(0.37), vec![0.4, -1.0]);
    }

    #[test]
    fn sinh_arc_values() {
        let g = ou_guidance(1.0, &[1.0]).unwrap();
        assert!((g.eval(0.5)[0] - 0.5f64.sinh() / 1f64.sinh()).abs() < 1e-15);
        assert!((g.eval(0.5)[0] - 0.4434).abs() < 1e-4);
        let tiny = ou_guidance(1e-9, &[1.0]).unwrap();
        let lin = linear_guidance(&[0.0], &[1.0]).unwrap();
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert!((tiny.eval(t)[0] - lin.eval(t)[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn sinh_arc_is_shared_with_lqg() {
        let p = crate::lqg::LqgProblem::new(0.8, 2.0, 1.5, 0.3).unwrap();
        let sol = crate::lqg::solve_lqg(&p).unwrap();
        let g = ou_guidance(0.8, &[1.5]).unwrap();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            assert_eq!(g.eval(t)[0].to_bits(), sol.mean(t).to_bits());
        }
    }

    #[test]
    fn per_interval_uses_midpoints() {
        let s = geometric_schedule(12.0, 0.65, 8).unwrap();
        let g = linear_guidance(&[2.8], &[0.6]).unwrap();
        let v = g.per_interval(&s).unwrap();
        assert_eq!(v.len(), 8);
        assert!((v[0][0] - (2.8 - 2.2 / 16.0)).abs() < 1e-15);
        let p = piecewise_guidance(&s, v.clone()).unwrap();
        assert_eq!(p.per_interval(&s).unwrap(), v);
        assert_eq!(p.eval(0.126), v[1]);
        let other = geometric_schedule(12.0, 0.65, 4).unwrap();
        assert!(p.per_interval(&other).is_err());
    }
}
