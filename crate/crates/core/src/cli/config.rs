//! Experiment configuration: schema, presets and scenario construction.
//!
//! Configs are TOML with dotted sections (`[schedule]`, `[sim]`, `[target]`,
//! `[initial]`, `[sweep]`, `[lqg]`, `[density]`, `[fixed_point]`); files
//! ending in `.json` are read as JSON with the same schema. Unknown keys are
//! rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{geometric_schedule, PwcSchedule};
use crate::score::{Covariance, GaussianMixture};
use crate::simulate::{GuidanceMode, InitialLaw, SimConfig};

pub const PRESETS: [&str; 6] = [
    "scenario-a",
    "scenario-b",
    "d-sweep",
    "k-sweep",
    "ar-sweep",
    "lqg-tcl",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub beta0: f64,
    pub gamma: f64,
    pub intervals: usize,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            beta0: 12.0,
            gamma: 0.65,
            intervals: 8,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<PwcSchedule> {
        geometric_schedule(self.beta0, self.gamma, self.intervals)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSpec {
    pub batch: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub midpoint_eval: bool,
    pub record_paths: usize,
    pub affine_diagnostics: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            batch: 8000,
            n_steps: 2500,
            seed: 20250101,
            midpoint_eval: false,
            record_paths: 50,
            affine_diagnostics: true,
        }
    }
}

/// A Gaussian mixture given by weights, means and per-component standard
/// deviations. A single standard deviation is broadcast over coordinates.
/// `ar_rho` turns every component into an AR(1) covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ar_rho: Option<f64>,
}

impl MixtureSpec {
    pub fn build(&self) -> Result<GaussianMixture> {
        let d = self.means.first().map_or(0, Vec::len);
        if self.stds.len() != self.weights.len() {
            return Err(Error::Mixture(format!(
                "{} weights but {} std entries",
                self.weights.len(),
                self.stds.len()
            )));
        }
        let covs = self
            .stds
            .iter()
            .map(|s| match (s.len(), self.ar_rho) {
                (1, Some(rho)) => Ok(Covariance::ar1(s[0], rho, d)),
                (_, Some(_)) => Err(Error::Mixture("ar_rho needs one std per component".into())),
                (1, None) => Ok(Covariance::isotropic(s[0], d)),
                (n, None) if n == d => Ok(Covariance::from_stds(s)),
                (n, None) => Err(Error::Dimension {
                    expected: d,
                    got: n,
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(self.weights.clone(), self.means.clone(), covs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    #[default]
    None,
    Dimension,
    Components,
    ArRho,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::None => "none",
            SweepAxis::Dimension => "d",
            SweepAxis::Components => "K",
            SweepAxis::ArRho => "rho",
        })
    }
}

/// Sweep axis and the parameters of the generated scenarios.
///
/// * `dimension`: two components with zone profile `z_j = sin(2πj/d)`,
///   target means `0.1 + 0.15 z` and `1.5 - 0.15 z`, initial means displaced
///   by `displacement[k]`.
/// * `components`: `K` components in `dim` coordinates with means evenly
///   spaced on `[-1, 2]` and weights proportional to `K, K-1, …, 1`.
/// * `ar-rho`: the two-component zone scenario in `dim` coordinates with
///   AR(1) covariances of correlation `ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub target_std: Vec<f64>,
    pub initial_std: Vec<f64>,
    pub displacement: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::None,
            values: Vec::new(),
            dim: 1,
            weights: vec![0.6, 0.4],
            target_std: vec![0.2, 0.3],
            initial_std: vec![0.5, 0.7],
            displacement: vec![1.5, 4.0],
        }
    }
}

fn per_component(v: &[f64], k: usize, what: &str) -> Result<Vec<f64>> {
    match v.len() {
        1 => Ok(vec![v[0]; k]),
        n if n == k => Ok(v.to_vec()),
        n => Err(Error::Config(format!(
            "sweep.{what} has {n} entries, expected 1 or {k}"
        ))),
    }
}

fn integer_value(v: f64, what: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!(
            "sweep value {v} is not a valid {what}"
        )))
    }
}

impl SweepSpec {
    /// Target and initial mixture specs for one sweep value.
    pub fn point(&self, value: f64) -> Result<(MixtureSpec, MixtureSpec)> {
        match self.axis {
            SweepAxis::None => Err(Error::Config("no sweep axis".into())),
            SweepAxis::Dimension => self.zones(integer_value(value, "dimension")?, None),
            SweepAxis::ArRho => {
                if !(0.0..1.0).contains(&value) {
                    return Err(Error::Config(format!(
                        "AR(1) correlation {value} outside [0, 1)"
                    )));
                }
                self.zones(self.dim, Some(value))
            }
            SweepAxis::Components => {
                let k = integer_value(value, "component count")?;
                if k < 2 {
                    return Err(Error::Config("component sweep needs K >= 2".into()));
                }
                let total = (k * (k + 1) / 2) as f64;
                let weights: Vec<f64> = (0..k).map(|i| (k - i) as f64 / total).collect();
                let tstd = per_component(&self.target_std, k, "target_std")?;
                let istd = per_component(&self.initial_std, k, "initial_std")?;
                let disp = per_component(&self.displacement, k, "displacement")?;
                let means: Vec<Vec<f64>> = (0..k)
                    .map(|i| vec![-1.0 + 3.0 * i as f64 / (k - 1) as f64; self.dim])
                    .collect();
                let init_means = means
                    .iter()
                    .zip(&disp)
                    .map(|(m, s)| m.iter().map(|v| v + s).collect())
                    .collect();
                Ok((
                    MixtureSpec {
                        weights: weights.clone(),
                        means,
                        stds: tstd.iter().map(|s| vec![*s]).collect(),
                        ar_rho: None,
                    },
                    MixtureSpec {
                        weights,
                        means: init_means,
                        stds: istd.iter().map(|s| vec![*s]).collect(),
                        ar_rho: None,
                    },
                ))
            }
        }
    }

    fn zones(&self, d: usize, rho: Option<f64>) -> Result<(MixtureSpec, MixtureSpec)> {
        if self.weights.len() != 2 {
            return Err(Error::Config(
                "zone scenarios have exactly two components".into(),
            ));
        }
        let tstd = per_component(&self.target_std, 2, "target_std")?;
        let istd = per_component(&self.initial_std, 2, "initial_std")?;
        let disp = per_component(&self.displacement, 2, "displacement")?;
        let z: Vec<f64> = (0..d)
            .map(|j| (2.0 * std::f64::consts::PI * j as f64 / d as f64).sin())
            .collect();
        let means = vec![
            z.iter().map(|v| 0.1 + 0.15 * v).collect::<Vec<_>>(),
            z.iter().map(|v| 1.5 - 0.15 * v).collect::<Vec<_>>(),
        ];
        let init_means = means
            .iter()
            .zip(&disp)
            .map(|(m, s)| m.iter().map(|v| v + s).collect())
            .collect();
        let ar_rho = rho.filter(|r| *r != 0.0);
        Ok((
            MixtureSpec {
                weights: self.weights.clone(),
                means,
                stds: tstd.iter().map(|s| vec![*s]).collect(),
                ar_rho,
            },
            MixtureSpec {
                weights: self.weights.clone(),
                means: init_means,
                stds: istd.iter().map(|s| vec![*s]).collect(),
                ar_rho,
            },
        ))
    }

    /// Dimension of the scenario generated for `value`.
    pub fn point_dim(&self, value: f64) -> usize {
        match self.axis {
            SweepAxis::Dimension => value as usize,
            _ => self.dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqgSpec {
    pub kappa: f64,
    pub q: f64,
    pub m_tar: f64,
    pub sigma_tar: f64,
    /// Points of the `m̄` grid on `[0, m_tar]` for the ordering check.
    #[serde(default = "default_m_bar_points")]
    pub m_bar_points: usize,
    /// Particles for the Monte-Carlo cross-check; 0 disables it.
    #[serde(default)]
    pub mc_batch: usize,
}

fn default_m_bar_points() -> usize {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySpec {
    pub times: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Compare against a histogram of a simulated MF ensemble.
    pub histogram: bool,
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self {
            times: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            lo: -2.0,
            hi: 10.0,
            points: 241,
            histogram: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointSpec {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointSpec {
    fn default() -> Self {
        Self {
            tol: 2e-4,
            max_iter: 15,
        }
    }
}

/// Guidance modes selectable from configs and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Mf,
    Ia0,
    Iam,
    ClosedLoop,
}

impl ModeName {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModeName::Mf => "mf",
            ModeName::Ia0 => "ia0",
            ModeName::Iam => "iam",
            ModeName::ClosedLoop => "closed-loop",
        }
    }

    pub fn guidance_mode(&self) -> GuidanceMode {
        match self {
            ModeName::Mf => GuidanceMode::MfLinear,
            ModeName::Ia0 => GuidanceMode::IaZero,
            ModeName::Iam => GuidanceMode::IaTargetMean,
            ModeName::ClosedLoop => GuidanceMode::ClosedLoopEmpirical,
        }
    }
}

impl fmt::Display for ModeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mf" => Ok(ModeName::Mf),
            "ia0" => Ok(ModeName::Ia0),
            "iam" => Ok(ModeName::Iam),
            "closed-loop" => Ok(ModeName::ClosedLoop),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected mf, ia0, iam or closed-loop)"
            ))),
        }
    }
}

fn default_modes() -> Vec<ModeName> {
    vec![ModeName::Ia0, ModeName::Iam, ModeName::Mf]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub sim: SimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<MixtureSpec>,
    /// Absent means a point mass at the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<MixtureSpec>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default = "default_modes")]
    pub modes: Vec<ModeName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqg: Option<LqgSpec>,
    #[serde(default)]
    pub density: DensitySpec,
    #[serde(default)]
    pub fixed_point: FixedPointSpec,
}

const TARGET_WEIGHTS: [f64; 2] = [0.6, 0.4];

fn target_spec() -> MixtureSpec {
    MixtureSpec {
        weights: TARGET_WEIGHTS.to_vec(),
        means: vec![vec![0.0], vec![1.5]],
        stds: vec![vec![0.2], vec![0.3]],
        ar_rho: None,
    }
}

fn scenario(name: &str, means: [f64; 2], stds: [f64; 2], density_hi: f64) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        schedule: ScheduleSpec::default(),
        sim: SimSpec::default(),
        target: Some(target_spec()),
        initial: Some(MixtureSpec {
            weights: TARGET_WEIGHTS.to_vec(),
            means: vec![vec![means[0]], vec![means[1]]],
            stds: vec![vec![stds[0]], vec![stds[1]]],
            ar_rho: None,
        }),
        sweep: SweepSpec::default(),
        modes: default_modes(),
        lqg: None,
        density: DensitySpec {
            hi: density_hi,
            ..DensitySpec::default()
        },
        fixed_point: FixedPointSpec::default(),
    }
}

fn sweep_preset(name: &str, sweep: SweepSpec) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        schedule: ScheduleSpec::default(),
        sim: SimSpec {
            batch: 4000,
            record_paths: 0,
            affine_diagnostics: false,
            ..SimSpec::default()
        },
        target: None,
        initial: None,
        sweep,
        modes: default_modes(),
        lqg: None,
        density: DensitySpec::default(),
        fixed_point: FixedPointSpec::default(),
    }
}

/// Built-in configurations for the demand-response scenarios and sweeps.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "scenario-a" => Ok(scenario(name, [1.0, 6.0], [3.0, 3.0], 16.0)),
        "scenario-b" => Ok(scenario(name, [1.5, 5.5], [0.5, 0.7], 8.0)),
        "d-sweep" => Ok(sweep_preset(
            name,
            SweepSpec {
                axis: SweepAxis::Dimension,
                values: vec![1.0, 2.0, 4.0, 8.0],
                ..SweepSpec::default()
            },
        )),
        "k-sweep" => Ok(sweep_preset(
            name,
            SweepSpec {
                axis: SweepAxis::Components,
                values: vec![2.0, 3.0, 4.0, 8.0],
                dim: 4,
                weights: Vec::new(),
                target_std: vec![0.2],
                initial_std: vec![0.5],
                displacement: vec![4.0],
            },
        )),
        "ar-sweep" => Ok(sweep_preset(
            name,
            SweepSpec {
                axis: SweepAxis::ArRho,
                values: vec![0.0, 0.5, 0.8],
                dim: 8,
                ..SweepSpec::default()
            },
        )),
        "lqg-tcl" => Ok(ExperimentConfig {
            lqg: Some(LqgSpec {
                kappa: 0.8,
                q: 2.0,
                m_tar: 1.5,
                sigma_tar: 0.3,
                m_bar_points: default_m_bar_points(),
                mc_batch: 8000,
            }),
            ..sweep_preset(name, SweepSpec::default())
        }),
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (known: {})",
            PRESETS.join(", ")
        ))),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{e} (line {}, column {})", e.line(), e.column())))
    }

    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Result<PwcSchedule> {
        self.schedule.build()
    }

    /// `(label, target, initial)` for every scenario the config describes.
    pub fn scenarios(&self) -> Result<Vec<(String, MixtureSpec, Option<MixtureSpec>)>> {
        if self.sweep.axis == SweepAxis::None {
            let target = self
                .target
                .clone()
                .ok_or_else(|| Error::Config("missing [target] section".into()))?;
            return Ok(vec![(self.name.clone(), target, self.initial.clone())]);
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Config("sweep.values is empty".into()));
        }
        self.sweep
            .values
            .iter()
            .map(|&v| {
                let (t, i) = self.sweep.point(v)?;
                Ok((format!("{}={}", self.sweep.axis, v), t, Some(i)))
            })
            .collect()
    }

    /// Simulation config for one scenario and mode.
    pub fn sim_config(
        &self,
        target: &MixtureSpec,
        initial: Option<&MixtureSpec>,
        mode: ModeName,
    ) -> Result<SimConfig> {
        let target = target.build()?;
        let initial = match initial {
            Some(spec) => InitialLaw::Mixture(spec.build()?),
            None => InitialLaw::Delta,
        };
        let mut cfg = SimConfig::new(self.schedule()?, initial, target);
        cfg.batch = self.sim.batch;
        cfg.n_steps = self.sim.n_steps;
        cfg.seed = self.sim.seed;
        cfg.midpoint_eval = self.sim.midpoint_eval;
        cfg.record_paths = self.sim.record_paths;
        cfg.affine_diagnostics = self.sim.affine_diagnostics;
        cfg.mode = mode.guidance_mode();
        Ok(cfg)
    }
}
