//! Euler–Maruyama particle simulation of the controlled bridge.
//!
//! Each step fills one [`TimeSlice`] on the calling thread and then moves
//! every particle by `x ← x + u dt + √dt ξ`. Particles own counter-based
//! random streams keyed by `(seed, index)`, and all batch reductions run
//! sequentially in particle order, so results do not depend on the number
//! of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::guidance::{constant_guidance, linear_guidance, GuidanceTrajectory};
use crate::lqg::AffineFeedback;
use crate::schedule::PwcSchedule;
use crate::score::{GaussianMixture, ScoreContext, ScoreWorkspace, TimeSlice};

/// How the guidance `ν` entering the score is chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceMode {
    /// Linear interpolant between the initial and target means.
    MfLinear,
    /// Independent agents with `ν ≡ 0`.
    IaZero,
    /// Independent agents with `ν ≡` target mean.
    IaTargetMean,
    Fixed(GuidanceTrajectory),
    /// Linear guidance with the current interval's value replaced by the
    /// batch empirical mean at every step.
    ClosedLoopEmpirical,
}

impl GuidanceMode {
    pub fn label(&self) -> &'static str {
        match self {
            GuidanceMode::MfLinear => "mf",
            GuidanceMode::IaZero => "ia0",
            GuidanceMode::IaTargetMean => "iam",
            GuidanceMode::Fixed(_) => "fixed",
            GuidanceMode::ClosedLoopEmpirical => "closed-loop",
        }
    }
}

/// Law of `x_0`.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    /// Point mass at the origin.
    Delta,
    Mixture(GaussianMixture),
}

#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub batch: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub mode: GuidanceMode,
    pub initial: InitialLaw,
    pub target: GaussianMixture,
    pub schedule: PwcSchedule,
    /// Evaluate the score at `t + dt/2` instead of the step start.
    pub midpoint_eval: bool,
    /// Number of particle paths to keep for plotting.
    pub record_paths: usize,
    /// Fit `u_0 ≈ -S x_0 - s` across the batch at every step.
    pub affine_diagnostics: bool,
    /// Times at which full ensemble snapshots are kept.
    pub snapshots: Vec<f64>,
    pub parallel: bool,
}

impl SimConfig {
    /// Defaults: 8000 particles, 2500 steps, MF-linear guidance, no
    /// recording, parallel.
    pub fn new(schedule: PwcSchedule, initial: InitialLaw, target: GaussianMixture) -> Self {
        Self {
            batch: 8000,
            n_steps: 2500,
            seed: 20250101,
            mode: GuidanceMode::MfLinear,
            initial,
            target,
            schedule,
            midpoint_eval: false,
            record_paths: 0,
            affine_diagnostics: false,
            snapshots: Vec::new(),
            parallel: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn initial_mean(&self) -> Vec<f64> {
        match &self.initial {
            InitialLaw::Delta => vec![0.0; self.dim()],
            InitialLaw::Mixture(m) => m.mean(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 {
            return Err(Error::InvalidArgument("batch must be at least 2".into()));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidArgument("n_steps must be at least 2".into()));
        }
        if let InitialLaw::Mixture(m) = &self.initial {
            if m.dim() != self.dim() {
                return Err(Error::Dimension {
                    expected: self.dim(),
                    got: m.dim(),
                });
            }
        }
        if let GuidanceMode::Fixed(g) = &self.mode {
            if g.dim() != self.dim() {
                return Err(Error::Dimension {
                    expected: self.dim(),
                    got: g.dim(),
                });
            }
        }
        if self.snapshots.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidArgument(
                "snapshot times must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// The guidance trajectory the score is built on.
    pub fn guidance(&self) -> Result<GuidanceTrajectory> {
        match &self.mode {
            GuidanceMode::MfLinear | GuidanceMode::ClosedLoopEmpirical => {
                linear_guidance(&self.initial_mean(), &self.target.mean())
            }
            GuidanceMode::IaZero => Ok(constant_guidance(&vec![0.0; self.dim()])),
            GuidanceMode::IaTargetMean => Ok(constant_guidance(&self.target.mean())),
            GuidanceMode::Fixed(g) => Ok(g.clone()),
        }
    }

    pub fn context(&self) -> Result<ScoreContext> {
        let initial = match &self.initial {
            InitialLaw::Delta => None,
            InitialLaw::Mixture(m) => Some(m.clone()),
        };
        ScoreContext::new(
            &self.schedule,
            &self.guidance()?,
            self.target.clone(),
            initial,
        )
    }
}

/// One particle: position, start point, stream and running energy.
#[derive(Debug, Clone)]
pub struct Particle {
    pub x: Vec<f64>,
    /// Start point, the shift entering the score.
    pub z: Vec<f64>,
    /// Sampled initial component, 0 for a delta start.
    pub label: usize,
    pub energy: f64,
    /// Per-coordinate share of `energy`.
    pub coord_energy: Vec<f64>,
    /// Most recent control.
    pub u: Vec<f64>,
    /// First coordinate of the position `u` was evaluated at.
    pub x0_eval: f64,
    rng: ChaCha8Rng,
}

/// The batch at one grid time.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub particles: Vec<Particle>,
    pub step: usize,
}

fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn sample_initial(config: &SimConfig) -> EnsembleState {
    let d = config.dim();
    let particles = (0..config.batch)
        .map(|i| {
            let mut rng = particle_rng(config.seed, i);
            let mut z = vec![0.0; d];
            let label = match &config.initial {
                InitialLaw::Delta => 0,
                InitialLaw::Mixture(m) => m.sample_into(&mut rng, &mut z),
            };
            Particle {
                x: z.clone(),
                z,
                label,
                energy: 0.0,
                coord_energy: vec![0.0; d],
                u: vec![0.0; d],
                x0_eval: 0.0,
                rng,
            }
        })
        .collect();
    EnsembleState { particles, step: 0 }
}

fn advance(
    p: &mut Particle,
    slice: &TimeSlice<'_>,
    offset: Option<&[f64]>,
    dt: f64,
    ws: &mut ScoreWorkspace,
) {
    let mut u = std::mem::take(&mut p.u);
    slice.score_into(&p.x, &p.z, offset, ws, &mut u);
    let sq = dt.sqrt();
    p.x0_eval = p.x[0];
    for j in 0..u.len() {
        let xi: f64 = p.rng.sample(StandardNormal);
        p.x[j] += u[j] * dt + sq * xi;
        let e = u[j] * u[j] * dt;
        p.coord_energy[j] += e;
        p.energy += e;
    }
    p.u = u;
}

/// Advances every particle by one step of size `dt` from grid time `t`.
pub fn step(
    state: &mut EnsembleState,
    slice: &TimeSlice<'_>,
    offset: Option<&[f64]>,
    dt: f64,
    parallel: bool,
) -> Result<()> {
    let d = slice.theta_x.len();
    let k = slice.components();
    if parallel {
        state.particles.par_iter_mut().for_each_init(
            || ScoreWorkspace::new(d, k),
            |ws, p| advance(p, slice, offset, dt, ws),
        );
    } else {
        let mut ws = ScoreWorkspace::new(d, k);
        for p in state.particles.iter_mut() {
            advance(p, slice, offset, dt, &mut ws);
        }
    }
    state.step += 1;
    let t = state.step as f64 * dt;
    if let Some(i) = state
        .particles
        .iter()
        .position(|p| p.x.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Diverged { particle: i, t });
    }
    Ok(())
}

/// Energy split over a group of particles.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ComponentEnergy {
    pub component: usize,
    pub count: usize,
    pub energy: f64,
    pub stderr: f64,
}

/// Terminal moments of one target component, weighted by the target
/// responsibilities of the final positions.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TerminalMoments {
    pub component: usize,
    /// Share of total responsibility mass.
    pub mass: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Attribution {
    Initial,
    Terminal,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EnergyReport {
    pub mode: String,
    pub batch: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// `E(1) = (1/B) Σ_i ∫ ‖u‖² dt`.
    pub total: f64,
    pub stderr: f64,
    pub attribution: Attribution,
    /// Split by sampled initial component; empty for a delta start.
    pub per_component_initial: Vec<ComponentEnergy>,
    /// Split by most responsible target component at `t = 1`.
    pub per_component_terminal: Vec<ComponentEnergy>,
    /// Per-coordinate energy.
    pub per_coordinate: Vec<f64>,
    pub times: Vec<f64>,
    /// Batch mean of `‖u‖²` on each step, at the step start time.
    pub power: Vec<f64>,
    /// `E(t)` at every grid time.
    pub cumulative: Vec<f64>,
    pub terminal: Vec<TerminalMoments>,
}

impl EnergyReport {
    /// The per-component split selected by [`EnergyReport::attribution`].
    pub fn per_component(&self) -> &[ComponentEnergy] {
        match self.attribution {
            Attribution::Initial => &self.per_component_initial,
            Attribution::Terminal => &self.per_component_terminal,
        }
    }
}

/// Weighted least-squares fit of `u_0` against `x_0` at one step.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct AffineFit {
    pub t: f64,
    /// `S` in `u ≈ -S x - s`.
    pub gain: f64,
    pub offset: f64,
    pub r2: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub positions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BridgeRun {
    pub report: EnergyReport,
    /// Grid times `k/n`, `k = 0..=n`.
    pub times: Vec<f64>,
    /// Ensemble mean per grid time.
    pub mean: Vec<Vec<f64>>,
    /// Ensemble standard deviation per grid time.
    pub std: Vec<Vec<f64>>,
    /// Guidance `ν` per grid time.
    pub guidance: Vec<Vec<f64>>,
    /// `paths[p][k]` is the position of particle `p` at grid time `k`.
    pub paths: Vec<Vec<Vec<f64>>>,
    pub affine: Vec<AffineFit>,
    pub snapshots: Vec<Snapshot>,
    pub final_positions: Vec<Vec<f64>>,
    pub initial_labels: Vec<usize>,
    pub particle_energy: Vec<f64>,
}

impl BridgeRun {
    /// Ensemble mean at `t`, linearly interpolated between grid times.
    pub fn mean_at(&self, t: f64) -> Vec<f64> {
        let n = self.times.len() - 1;
        let s = (t.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let k = (s.floor() as usize).min(n - 1);
        let w = s - k as f64;
        self.mean[k]
            .iter()
            .zip(&self.mean[k + 1])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    }
}

fn moments(state: &EnsembleState, d: usize) -> (Vec<f64>, Vec<f64>) {
    let b = state.particles.len() as f64;
    let mut mean = vec![0.0; d];
    for p in &state.particles {
        for j in 0..d {
            mean[j] += p.x[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= b);
    let mut var = vec![0.0; d];
    for p in &state.particles {
        for j in 0..d {
            let e = p.x[j] - mean[j];
            var[j] += e * e;
        }
    }
    let std = var.iter().map(|v| (v / (b - 1.0)).sqrt()).collect();
    (mean, std)
}

fn affine_fit(state: &EnsembleState, t: f64) -> AffineFit {
    let n = state.particles.len() as f64;
    let (mut sx, mut su) = (0.0, 0.0);
    for p in &state.particles {
        sx += p.x0_eval;
        su += p.u[0];
    }
    let (mx, mu) = (sx / n, su / n);
    let (mut sxx, mut sxu, mut suu) = (0.0, 0.0, 0.0);
    for p in &state.particles {
        let dx = p.x0_eval - mx;
        let du = p.u[0] - mu;
        sxx += dx * dx;
        sxu += dx * du;
        suu += du * du;
    }
    let slope = if sxx > 0.0 { sxu / sxx } else { 0.0 };
    let r2 = if suu > 0.0 && sxx > 0.0 {
        sxu * sxu / (sxx * suu)
    } else {
        1.0
    };
    AffineFit {
        t,
        gain: -slope,
        offset: -(mu - slope * mx),
        r2,
    }
}

fn group_energy(energies: &[f64], labels: &[usize], k: usize) -> Vec<ComponentEnergy> {
    (0..k)
        .map(|c| {
            let e: Vec<f64> = energies
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == c)
                .map(|(e, _)| *e)
                .collect();
            let (mean, stderr) = mean_stderr(&e);
            ComponentEnergy {
                component: c,
                count: e.len(),
                energy: mean,
                stderr,
            }
        })
        .collect()
}

/// Sample mean and its standard error; NaN for fewer than two values.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn terminal_moments(
    target: &GaussianMixture,
    finals: &[Vec<f64>],
) -> (Vec<TerminalMoments>, Vec<usize>) {
    let d = target.dim();
    let k = target.len();
    let resp: Vec<Vec<f64>> = finals.iter().map(|x| target.responsibilities(x)).collect();
    let hard = resp
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
                    if *v > acc.1 {
                        (i, *v)
                    } else {
                        acc
                    }
                })
                .0
        })
        .collect();
    let total = finals.len() as f64;
    let moments = (0..k)
        .map(|c| {
            let w: Vec<f64> = resp.iter().map(|r| r[c]).collect();
            let sw: f64 = w.iter().sum();
            let sw2: f64 = w.iter().map(|v| v * v).sum();
            let n_eff = if sw2 > 0.0 { sw * sw / sw2 } else { 0.0 };
            let mut mean = vec![0.0; d];
            for (x, wi) in finals.iter().zip(&w) {
                for j in 0..d {
                    mean[j] += wi * x[j];
                }
            }
            mean.iter_mut().for_each(|m| *m /= sw);
            let mut var = vec![0.0; d];
            for (x, wi) in finals.iter().zip(&w) {
                for j in 0..d {
                    var[j] += wi * (x[j] - mean[j]).powi(2);
                }
            }
            let std: Vec<f64> = var.iter().map(|v| (v / sw).sqrt()).collect();
            let dense = target.covariances()[c].to_dense();
            TerminalMoments {
                component: c,
                mass: sw / total,
                mean_stderr: std.iter().map(|s| s / n_eff.sqrt()).collect(),
                mean,
                std,
                target_mean: target.means()[c].clone(),
                target_std: (0..d).map(|j| dense[(j, j)].sqrt()).collect(),
            }
        })
        .collect();
    (moments, hard)
}

/// Runs the full bridge from `t = 0` to `t = 1`.
pub fn run_bridge(config: &SimConfig) -> Result<BridgeRun> {
    config.validate()?;
    let ctx = config.context()?;
    let d = config.dim();
    let n = config.n_steps;
    let dt = 1.0 / n as f64;
    let mut state = sample_initial(config);
    let n_paths = config.record_paths.min(config.batch);
    let snap_steps: Vec<usize> = config
        .snapshots
        .iter()
        .map(|t| (t * n as f64).round() as usize)
        .collect();

    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let mut mean = Vec::with_capacity(n + 1);
    let mut std = Vec::with_capacity(n + 1);
    let mut paths = vec![Vec::with_capacity(n + 1); n_paths];
    let mut power = Vec::with_capacity(n);
    let mut cumulative = Vec::with_capacity(n + 1);
    let mut affine = Vec::new();
    let mut snapshots = Vec::new();

    let record = |state: &EnsembleState,
                  mean: &mut Vec<Vec<f64>>,
                  std: &mut Vec<Vec<f64>>,
                  paths: &mut Vec<Vec<Vec<f64>>>,
                  snapshots: &mut Vec<Snapshot>| {
        let (m, s) = moments(state, d);
        mean.push(m);
        std.push(s);
        for (p, path) in paths.iter_mut().enumerate() {
            path.push(state.particles[p].x.clone());
        }
        for (&k, &t) in snap_steps.iter().zip(&config.snapshots) {
            if k == state.step {
                snapshots.push(Snapshot {
                    t,
                    positions: state.particles.iter().map(|p| p.x.clone()).collect(),
                });
            }
        }
    };
    record(&state, &mut mean, &mut std, &mut paths, &mut snapshots);
    cumulative.push(0.0);

    let b = config.batch as f64;
    for k in 0..n {
        let t = k as f64 * dt;
        let t_eval = if config.midpoint_eval {
            t + 0.5 * dt
        } else {
            t
        };
        let slice = ctx.slice(t_eval.clamp(0.5 * dt, 1.0 - 0.5 * dt))?;
        let offset = match config.mode {
            GuidanceMode::ClosedLoopEmpirical => Some(
                mean[k]
                    .iter()
                    .zip(slice.guidance())
                    .map(|(m, v)| m - v)
                    .collect::<Vec<f64>>(),
            ),
            _ => None,
        };
        step(&mut state, &slice, offset.as_deref(), dt, config.parallel)?;
        if config.affine_diagnostics {
            affine.push(affine_fit(&state, t));
        }
        let p = state
            .particles
            .iter()
            .map(|p| p.u.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / b;
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("control power at t = {t}")));
        }
        power.push(p);
        cumulative.push(cumulative[k] + p * dt);
        record(&state, &mut mean, &mut std, &mut paths, &mut snapshots);
    }

    let energies: Vec<f64> = state.particles.iter().map(|p| p.energy).collect();
    let (total, stderr) = mean_stderr(&energies);
    let final_positions: Vec<Vec<f64>> = state.particles.iter().map(|p| p.x.clone()).collect();
    let initial_labels: Vec<usize> = state.particles.iter().map(|p| p.label).collect();
    let (terminal, hard) = terminal_moments(&config.target, &final_positions);
    let per_component_terminal = group_energy(&energies, &hard, config.target.len());
    let (per_component_initial, attribution) = match &config.initial {
        InitialLaw::Delta => (Vec::new(), Attribution::Terminal),
        InitialLaw::Mixture(m) => (
            group_energy(&energies, &initial_labels, m.len()),
            Attribution::Initial,
        ),
    };
    let per_coordinate = (0..d)
        .map(|j| {
            state
                .particles
                .iter()
                .map(|p| p.coord_energy[j])
                .sum::<f64>()
                / b
        })
        .collect();
    let nu = config.guidance()?;
    let guidance = times.iter().map(|&t| nu.eval(t)).collect();
    Ok(BridgeRun {
        report: EnergyReport {
            mode: config.mode.label().into(),
            batch: config.batch,
            n_steps: n,
            seed: config.seed,
            total,
            stderr,
            attribution,
            per_component_initial,
            per_component_terminal,
            per_coordinate,
            times: times[..n].to_vec(),
            power,
            cumulative,
            terminal,
        },
        times,
        mean,
        std,
        guidance,
        paths,
        affine,
        snapshots,
        final_positions,
        initial_labels,
        particle_energy: energies,
    })
}

/// Monte-Carlo estimate for the scalar linear-quadratic bridge.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LqgMonteCarlo {
    pub energy: f64,
    pub stderr: f64,
    pub terminal_mean: f64,
    pub terminal_std: f64,
}

/// Simulates `dx = (-κx + u) dt + dW`, `u = -(S x + s)`, from `x_0 = 0`.
pub fn simulate_lqg(
    feedback: &(impl AffineFeedback + Sync),
    kappa: f64,
    batch: usize,
    n_steps: usize,
    seed: u64,
) -> Result<LqgMonteCarlo> {
    if batch < 2 || n_steps < 2 {
        return Err(Error::InvalidArgument(
            "batch and n_steps must be at least 2".into(),
        ));
    }
    let dt = 1.0 / n_steps as f64;
    let sq = dt.sqrt();
    let coeffs: Vec<(f64, f64)> = (0..n_steps)
        .map(|k| {
            let t = k as f64 * dt;
            (feedback.gain(t), feedback.offset(t))
        })
        .collect();
    let out: Vec<(f64, f64)> = (0..batch)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(seed, i);
            let (mut x, mut e) = (0.0f64, 0.0f64);
            for &(s_gain, s_off) in &coeffs {
                let u = -(s_gain * x + s_off);
                let xi: f64 = rng.sample(StandardNormal);
                x += (-kappa * x + u) * dt + sq * xi;
                e += u * u * dt;
            }
            (x, e)
        })
        .collect();
    let xs: Vec<f64> = out.iter().map(|v| v.0).collect();
    let es: Vec<f64> = out.iter().map(|v| v.1).collect();
    let (energy, stderr) = mean_stderr(&es);
    let (terminal_mean, m_err) = mean_stderr(&xs);
    let terminal_std = m_err * (batch as f64).sqrt();
    if !energy.is_finite() || !terminal_mean.is_finite() {
        return Err(Error::NonFinite("LQG Monte Carlo".into()));
    }
    Ok(LqgMonteCarlo {
        energy,
        stderr,
        terminal_mean,
        terminal_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::geometric_schedule;
    use crate::score::Covariance;

    fn standard_target(d: usize) -> GaussianMixture {
        GaussianMixture::gaussian(vec![0.0; d], Covariance::isotropic(1.0, d)).unwrap()
    }

    fn small(config: &mut SimConfig) {
        config.batch = 2000;
        config.n_steps = 400;
    }

    #[test]
    fn heat_kernel_has_no_control() {
        let mut cfg = SimConfig::new(
            PwcSchedule::brownian(1).unwrap(),
            InitialLaw::Delta,
            standard_target(1),
        );
        small(&mut cfg);
        let run = run_bridge(&cfg).unwrap();
        assert!(run.report.total < 1e-20);
        let var = run.std[cfg.n_steps][0].powi(2);
        assert!(
            (var - 1.0).abs() < 4.0 * (2.0f64 / 2000.0).sqrt(),
            "var {var}"
        );
    }

    #[test]
    fn gaussian_target_terminal_moments() {
        let target = GaussianMixture::gaussian(vec![1.2], Covariance::isotropic(0.4, 1)).unwrap();
        let mut cfg = SimConfig::new(
            geometric_schedule(12.0, 0.65, 8).unwrap(),
            InitialLaw::Delta,
            target,
        );
        small(&mut cfg);
        let run = run_bridge(&cfg).unwrap();
        let t = &run.report.terminal[0];
        assert!(
            (t.mean[0] - 1.2).abs() < 3.0 * t.mean_stderr[0] + 5e-3,
            "{t:?}"
        );
        assert!((t.std[0] - 0.4).abs() < 0.03, "{t:?}");
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let target = GaussianMixture::new(
            vec![0.6, 0.4],
            vec![vec![0.0, 0.1], vec![1.5, 1.4]],
            vec![Covariance::isotropic(0.2, 2), Covariance::isotropic(0.3, 2)],
        )
        .unwrap();
        let mut cfg = SimConfig::new(
            geometric_schedule(12.0, 0.65, 8).unwrap(),
            InitialLaw::Delta,
            target,
        );
        cfg.batch = 300;
        cfg.n_steps = 200;
        cfg.mode = GuidanceMode::ClosedLoopEmpirical;
        let a = run_bridge(&cfg).unwrap();
        cfg.parallel = false;
        let b = run_bridge(&cfg).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.final_positions, b.final_positions);
    }

    #[test]
    fn mean_interpolation() {
        let mut cfg = SimConfig::new(
            PwcSchedule::brownian(1).unwrap(),
            InitialLaw::Delta,
            standard_target(1),
        );
        cfg.batch = 10;
        cfg.n_steps = 4;
        let run = run_bridge(&cfg).unwrap();
        let mid = run.mean_at(0.125)[0];
        assert!((mid - 0.5 * (run.mean[0][0] + run.mean[1][0])).abs() < 1e-15);
        assert_eq!(run.mean_at(1.0), run.mean[4]);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SimConfig::new(
            PwcSchedule::brownian(1).unwrap(),
            InitialLaw::Delta,
            standard_target(1),
        );
        cfg.batch = 1;
        assert!(matches!(run_bridge(&cfg), Err(Error::InvalidArgument(_))));
        cfg.batch = 10;
        cfg.initial = InitialLaw::Mixture(standard_target(2));
        assert!(matches!(run_bridge(&cfg), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mean_stderr_values() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
