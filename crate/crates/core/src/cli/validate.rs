//! Structural checks and a numerical dry run of an experiment config.

use serde::Serialize;

use super::config::{ExperimentConfig, SweepAxis};
use crate::error::Error;
use crate::lqg::{solve_lqg, LqgProblem};
use crate::score::ScoreContext;
use crate::simulate::{InitialLaw, SimConfig};

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    /// Input errors: malformed mixtures, schedules or sweep parameters.
    pub errors: Vec<String>,
    /// Failures of the dry-run coefficient construction or `K_t` scan.
    pub numerical: Vec<String>,
    /// Checks that passed.
    pub passed: Vec<String>,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty() && self.numerical.is_empty()
    }

    /// 0 when clean, 1 with any input error, 2 with numerical failures only.
    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            1
        } else if !self.numerical.is_empty() {
            2
        } else {
            0
        }
    }

    fn record(&mut self, label: &str, err: Error) {
        let msg = format!("{label}: {err}");
        if err.is_numerical() {
            self.numerical.push(msg);
        } else {
            self.errors.push(msg);
        }
    }
}

/// Validates every scenario of `config` and scans `K_t > 0` on the full
/// simulation grid.
pub fn validate(config: &ExperimentConfig) -> Diagnostics {
    let mut diag = Diagnostics::default();
    if config.sim.batch < 2 {
        diag.errors.push("sim.batch must be at least 2".into());
    }
    if config.sim.n_steps < 2 {
        diag.errors.push("sim.n_steps must be at least 2".into());
    }
    if config.modes.is_empty() {
        diag.errors.push("modes is empty".into());
    }
    if let Some(l) = &config.lqg {
        match LqgProblem::new(l.kappa, l.q, l.m_tar, l.sigma_tar).and_then(|p| solve_lqg(&p)) {
            Ok(sol) => diag
                .passed
                .push(format!("lqg: feasible, rho = {:.6}", sol.rho)),
            Err(e) => diag.record("lqg", e),
        }
        if config.target.is_none() && config.sweep.axis == SweepAxis::None {
            return diag;
        }
    }
    let schedule = match config.schedule() {
        Ok(s) => {
            diag.passed.push(format!("schedule: {} intervals", s.len()));
            Some(s)
        }
        Err(e) => {
            diag.record("schedule", e);
            None
        }
    };
    let scenarios = match config.scenarios() {
        Ok(s) => s,
        Err(e) => {
            diag.record("scenarios", e);
            return diag;
        }
    };
    for (label, target, initial) in scenarios {
        let target = match target.build() {
            Ok(t) => t,
            Err(e) => {
                diag.record(&format!("{label} target"), e);
                continue;
            }
        };
        let initial = match initial.map(|i| i.build()).transpose() {
            Ok(i) => i,
            Err(e) => {
                diag.record(&format!("{label} initial"), e);
                continue;
            }
        };
        if let Some(i) = &initial {
            if i.dim() != target.dim() {
                diag.record(
                    &format!("{label} initial"),
                    Error::Dimension {
                        expected: target.dim(),
                        got: i.dim(),
                    },
                );
                continue;
            }
        }
        diag.passed.push(format!(
            "{label}: target has {} components in {} dimensions",
            target.len(),
            target.dim()
        ));
        let Some(schedule) = &schedule else { continue };
        let mut sim = SimConfig::new(
            schedule.clone(),
            match &initial {
                Some(i) => InitialLaw::Mixture(i.clone()),
                None => InitialLaw::Delta,
            },
            target,
        );
        for mode in &config.modes {
            sim.mode = mode.guidance_mode();
            if let Err(e) = sim
                .context()
                .and_then(|ctx| scan(&ctx, config.sim.n_steps.max(2)))
            {
                diag.record(&format!("{label} {mode}"), e);
            }
        }
        diag.passed.push(format!(
            "{label}: K_t positive on {} grid points",
            config.sim.n_steps.max(2) - 1
        ));
    }
    diag
}

fn scan(ctx: &ScoreContext, n: usize) -> crate::error::Result<()> {
    for k in 1..n {
        ctx.slice(k as f64 / n as f64)?;
    }
    Ok(())
}
