//! Experiment driver behind the `mfpid` binary.
//!
//! Verbs: `lqg`, `bridge`, `sweep`, `density`, `guidance-check` and
//! `validate`. Each reads a preset or a config file, applies the command
//! line overrides and writes CSV/JSON artifacts to `--out`. Exit status is
//! 0 on success, 1 for invalid input and 2 for numerical failures.

pub mod config;
pub mod run;
pub mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use config::{preset, ExperimentConfig, ModeName, PRESETS};
pub use validate::{validate, Diagnostics};

#[derive(Debug, Parser)]
#[command(
    name = "mfpid",
    version,
    about = "Mean-field path-integral diffusion experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Closed-form scalar LQG bridge and independent-agent baselines.
    Lqg(CommonArgs),
    /// Particle simulation of one scenario under each guidance mode.
    Bridge(CommonArgs),
    /// Dimension, component-count or AR(1) sweep.
    Sweep(CommonArgs),
    /// Analytic marginal density against a simulated histogram.
    Density(CommonArgs),
    /// Fixed-point iteration against the linear guidance.
    GuidanceCheck(CommonArgs),
    /// Structural checks and a coefficient dry run.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Built-in configuration: scenario-a, scenario-b, d-sweep, k-sweep,
    /// ar-sweep or lqg-tcl.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// TOML config file, or JSON when the extension is `.json`.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Comma-separated guidance modes, e.g. `mf,ia0,iam`.
    #[arg(long, value_delimiter = ',')]
    pub modes: Option<Vec<ModeName>>,
    /// Run independent scenarios and modes concurrently.
    #[arg(long)]
    pub parallel: bool,
}

impl CommonArgs {
    /// Loads the preset or config file and applies overrides.
    pub fn resolve(&self, default_preset: Option<&str>) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.preset, &self.config, default_preset) {
            (Some(name), _, _) => preset(name)?,
            (None, Some(path), _) => ExperimentConfig::load(path)?,
            (None, None, Some(name)) => preset(name)?,
            (None, None, None) => {
                return Err(Error::Config("pass --preset NAME or --config PATH".into()));
            }
        };
        if let Some(seed) = self.seed {
            cfg.sim.seed = seed;
        }
        if let Some(modes) = &self.modes {
            cfg.modes = modes.clone();
        }
        Ok(cfg)
    }
}

/// Exit status for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

fn execute(verb: &Verb) -> Result<i32> {
    match verb {
        Verb::Lqg(a) => {
            let cfg = a.resolve(Some("lqg-tcl"))?;
            let s = run::run_lqg(&cfg, &a.out)?;
            println!(
                "lqg: E_mf = {:.4}, E_ia0 = {:.4}, E_iam = {:.4}, saving {:.2}%",
                s.energy["mf"], s.energy["ia0"], s.energy["iam"], s.saving_pct
            );
            for (mode, mc) in &s.monte_carlo {
                println!("  monte carlo {mode}: {:.4} ± {:.4}", mc.energy, mc.stderr);
            }
        }
        Verb::Bridge(a) => {
            let cfg = a.resolve(None)?;
            for s in run::run_bridge_experiment(&cfg, &a.out, a.parallel)? {
                println!("{} (d = {}):", s.label, s.dim);
                for m in &s.modes {
                    println!("  {:<12} E(1) = {:.4} ± {:.4}", m.mode, m.total, m.stderr);
                }
                if let Some(v) = s.savings_pct.get("mf_vs_ia0") {
                    println!("  saving mf vs ia0: {v:.2}%");
                }
            }
        }
        Verb::Sweep(a) => {
            let cfg = a.resolve(None)?;
            let rows = run::run_sweep(&cfg, &a.out, a.parallel)?;
            println!(
                "{:>6} {:>4} {:>10} {:>10} {:>10} {:>8}",
                cfg.sweep.axis, "d", "mf", "ia0", "iam", "saving"
            );
            for r in rows {
                let get = |k: &str| r.per_dim.get(k).copied().unwrap_or(f64::NAN);
                println!(
                    "{:>6} {:>4} {:>10.4} {:>10.4} {:>10.4} {:>7.2}%",
                    r.value,
                    r.dim,
                    get("mf"),
                    get("ia0"),
                    get("iam"),
                    r.saving_pct
                );
            }
        }
        Verb::Density(a) => {
            let cfg = a.resolve(None)?;
            let s = run::run_density(&cfg, &a.out)?;
            for (t, l1) in s.times.iter().zip(&s.histogram_l1) {
                println!("t = {t}: L1(analytic, histogram) = {l1:.4}");
            }
        }
        Verb::GuidanceCheck(a) => {
            let cfg = a.resolve(None)?;
            for s in run::run_guidance_check(&cfg, &a.out, a.parallel)? {
                println!(
                    "{}: converged = {}, iterations = {}, max residual = {:.4}",
                    s.scenario, s.converged, s.iterations, s.max_residual
                );
            }
        }
        Verb::Validate(a) => {
            let cfg = a.resolve(None)?;
            let d = validate(&cfg);
            for p in &d.passed {
                println!("pass: {p}");
            }
            for e in d.errors.iter().chain(&d.numerical) {
                eprintln!("error: {e}");
            }
            if d.is_ok() {
                println!("ok");
            }
            return Ok(d.exit_code());
        }
    }
    Ok(0)
}

/// Runs a parsed command line and returns the exit status.
pub fn run_cli(cli: &Cli) -> i32 {
    match execute(&cli.verb) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    run_cli(&Cli::parse())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "mfpid",
            "bridge",
            "--preset",
            "scenario-b",
            "--seed",
            "7",
            "--modes",
            "mf,ia0",
            "--parallel",
        ])
        .unwrap();
        let Verb::Bridge(a) = &cli.verb else { panic!() };
        let cfg = a.resolve(None).unwrap();
        assert_eq!(cfg.sim.seed, 7);
        assert_eq!(cfg.modes, vec![ModeName::Mf, ModeName::Ia0]);
        assert!(a.parallel);
    }

    #[test]
    fn rejects_unknown_mode_and_conflicts() {
        assert!(Cli::try_parse_from(["mfpid", "bridge", "--modes", "mf,xx"]).is_err());
        assert!(
            Cli::try_parse_from(["mfpid", "bridge", "--preset", "a", "--config", "b"]).is_err()
        );
    }

    #[test]
    fn exit_codes() {
        let cli = Cli::try_parse_from(["mfpid", "validate", "--preset", "nope"]).unwrap();
        assert_eq!(run_cli(&cli), 1);
        assert_eq!(
            exit_code(&Error::Diverged {
                particle: 0,
                t: 0.5
            }),
            2
        );
    }
}
