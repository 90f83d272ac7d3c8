//! Experiment runners and their CSV/JSON artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, MixtureSpec, ModeName, SweepAxis};
use crate::error::{Error, Result};
use crate::guidance::{fixed_point_guidance, linear_guidance, IterationRecord};
use crate::lqg::{ia_baseline, lqg_metrics, solve_lqg, LqgProblem, QUAD_POINTS};
use crate::simulate::{
    run_bridge, simulate_lqg, AffineFit, Attribution, BridgeRun, ComponentEnergy, LqgMonteCarlo,
    TerminalMoments,
};

/// Rows kept in time-resolved CSVs.
const CSV_TIME_ROWS: usize = 250;

fn par_map<T: Sync, R: Send>(
    items: &[T],
    parallel: bool,
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))
}

fn write_row<I, S>(w: &mut csv::Writer<fs::File>, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| Error::Io(e.into()))
}

fn flush(mut w: csv::Writer<fs::File>) -> Result<()> {
    w.flush().map_err(Error::Io)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn saving(reference: f64, value: f64) -> f64 {
    100.0 * (reference - value) / reference
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSummary {
    pub mode: ModeName,
    pub total: f64,
    pub stderr: f64,
    pub per_dim: f64,
    pub attribution: Attribution,
    pub per_component_initial: Vec<ComponentEnergy>,
    pub per_component_terminal: Vec<ComponentEnergy>,
    pub per_coordinate: Vec<f64>,
    pub terminal: Vec<TerminalMoments>,
    pub seed: u64,
    pub batch: usize,
    pub n_steps: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub dim: usize,
    pub modes: Vec<ModeSummary>,
    /// Percentage savings keyed `"<better>_vs_<reference>"`.
    pub savings_pct: BTreeMap<String, f64>,
    pub wall_seconds: f64,
    pub target: MixtureSpec,
    pub initial: Option<MixtureSpec>,
    pub config: ExperimentConfig,
}

impl ScenarioSummary {
    pub fn mode(&self, mode: ModeName) -> Option<&ModeSummary> {
        self.modes.iter().find(|m| m.mode == mode)
    }
}

struct ModeRun {
    mode: ModeName,
    run: BridgeRun,
    seconds: f64,
}

fn time_rows(n: usize) -> impl Iterator<Item = usize> {
    let stride = n.div_ceil(CSV_TIME_ROWS).max(1);
    (0..=n).filter(move |k| k % stride == 0 || *k == n)
}

fn write_scenario_csvs(dir: &Path, runs: &[ModeRun]) -> Result<()> {
    let n = runs[0].run.times.len() - 1;
    let d = runs[0].run.mean[0].len();

    let mut w = csv_writer(&dir.join("energy.csv"))?;
    let mut header = vec!["t".to_string()];
    header.extend(runs.iter().map(|r| format!("P_{}", r.mode)));
    header.extend(runs.iter().map(|r| format!("E_{}", r.mode)));
    write_row(&mut w, &header)?;
    for k in 0..=n {
        let mut row = vec![format!("{}", runs[0].run.times[k])];
        row.extend(runs.iter().map(|r| {
            r.run
                .report
                .power
                .get(k)
                .map_or(String::new(), |p| p.to_string())
        }));
        row.extend(runs.iter().map(|r| r.run.report.cumulative[k].to_string()));
        write_row(&mut w, &row)?;
    }
    flush(w)?;

    let mut w = csv_writer(&dir.join("terminal.csv"))?;
    write_row(
        &mut w,
        [
            "mode",
            "component",
            "coord",
            "mass",
            "mean",
            "std",
            "mean_stderr",
            "target_mean",
            "target_std",
        ],
    )?;
    for r in runs {
        for m in &r.run.report.terminal {
            for j in 0..d {
                write_row(
                    &mut w,
                    [
                        r.mode.to_string(),
                        m.component.to_string(),
                        j.to_string(),
                        m.mass.to_string(),
                        m.mean[j].to_string(),
                        m.std[j].to_string(),
                        m.mean_stderr[j].to_string(),
                        m.target_mean[j].to_string(),
                        m.target_std[j].to_string(),
                    ],
                )?;
            }
        }
    }
    flush(w)?;

    let mut w = csv_writer(&dir.join("component_energy.csv"))?;
    write_row(
        &mut w,
        [
            "mode",
            "attribution",
            "component",
            "count",
            "energy",
            "stderr",
        ],
    )?;
    for r in runs {
        let groups = [
            ("initial", &r.run.report.per_component_initial),
            ("terminal", &r.run.report.per_component_terminal),
        ];
        for (name, group) in groups {
            for c in group.iter() {
                write_row(
                    &mut w,
                    [
                        r.mode.to_string(),
                        name.to_string(),
                        c.component.to_string(),
                        c.count.to_string(),
                        c.energy.to_string(),
                        c.stderr.to_string(),
                    ],
                )?;
            }
        }
    }
    flush(w)?;

    let mut w = csv_writer(&dir.join("trajectories.csv"))?;
    write_row(&mut w, ["mode", "path", "t", "coord", "x"])?;
    for r in runs {
        for (p, path) in r.run.paths.iter().enumerate() {
            for k in time_rows(n) {
                for j in 0..d {
                    write_row(
                        &mut w,
                        [
                            r.mode.to_string(),
                            p.to_string(),
                            r.run.times[k].to_string(),
                            j.to_string(),
                            path[k][j].to_string(),
                        ],
                    )?;
                }
            }
        }
    }
    flush(w)?;

    let mut w = csv_writer(&dir.join("mean.csv"))?;
    write_row(&mut w, ["mode", "t", "coord", "mean", "std", "guidance"])?;
    for r in runs {
        for k in time_rows(n) {
            for j in 0..d {
                write_row(
                    &mut w,
                    [
                        r.mode.to_string(),
                        r.run.times[k].to_string(),
                        j.to_string(),
                        r.run.mean[k][j].to_string(),
                        r.run.std[k][j].to_string(),
                        r.run.guidance[k][j].to_string(),
                    ],
                )?;
            }
        }
    }
    flush(w)?;

    let mut w = csv_writer(&dir.join("zones.csv"))?;
    write_row(&mut w, ["mode", "zone", "energy", "share"])?;
    for r in runs {
        let total: f64 = r.run.report.per_coordinate.iter().sum();
        for (j, e) in r.run.report.per_coordinate.iter().enumerate() {
            write_row(
                &mut w,
                [
                    r.mode.to_string(),
                    j.to_string(),
                    e.to_string(),
                    (e / total).to_string(),
                ],
            )?;
        }
    }
    flush(w)?;

    if runs.iter().any(|r| !r.run.affine.is_empty()) {
        let mut w = csv_writer(&dir.join("affine.csv"))?;
        write_row(&mut w, ["mode", "t", "S", "s", "R2"])?;
        for r in runs {
            let fits: &[AffineFit] = &r.run.affine;
            for k in time_rows(n.saturating_sub(1)) {
                if let Some(f) = fits.get(k) {
                    write_row(
                        &mut w,
                        [
                            r.mode.to_string(),
                            f.t.to_string(),
                            f.gain.to_string(),
                            f.offset.to_string(),
                            f.r2.to_string(),
                        ],
                    )?;
                }
            }
        }
        flush(w)?;
    }
    Ok(())
}

/// Runs every configured mode on one scenario and writes its artifacts to
/// `dir`, with a `summary.json` per mode in `dir/<mode>/`.
pub fn run_scenario(
    config: &ExperimentConfig,
    label: &str,
    target: &MixtureSpec,
    initial: Option<&MixtureSpec>,
    dir: &Path,
    parallel: bool,
) -> Result<ScenarioSummary> {
    let start = Instant::now();
    fs::create_dir_all(dir)?;
    let runs: Vec<Result<ModeRun>> = par_map(&config.modes, parallel, |&mode| {
        let cfg = config.sim_config(target, initial, mode)?;
        let t0 = Instant::now();
        let run = run_bridge(&cfg)?;
        Ok(ModeRun {
            mode,
            run,
            seconds: t0.elapsed().as_secs_f64(),
        })
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let dim = runs[0].run.mean[0].len();
    let modes: Vec<ModeSummary> = runs
        .iter()
        .map(|r| {
            let rep = &r.run.report;
            ModeSummary {
                mode: r.mode,
                total: rep.total,
                stderr: rep.stderr,
                per_dim: rep.total / dim as f64,
                attribution: rep.attribution,
                per_component_initial: rep.per_component_initial.clone(),
                per_component_terminal: rep.per_component_terminal.clone(),
                per_coordinate: rep.per_coordinate.clone(),
                terminal: rep.terminal.clone(),
                seed: rep.seed,
                batch: rep.batch,
                n_steps: rep.n_steps,
                wall_seconds: r.seconds,
            }
        })
        .collect();
    let mut savings_pct = BTreeMap::new();
    for better in &modes {
        for reference in &modes {
            if better.mode != reference.mode
                && matches!(reference.mode, ModeName::Ia0 | ModeName::Iam)
            {
                savings_pct.insert(
                    format!("{}_vs_{}", better.mode, reference.mode),
                    saving(reference.total, better.total),
                );
            }
        }
    }
    write_scenario_csvs(dir, &runs)?;
    for m in &modes {
        let sub = dir.join(m.mode.as_str());
        fs::create_dir_all(&sub)?;
        write_json(
            &sub.join("summary.json"),
            &serde_json::json!({
                "scenario": label,
                "result": m,
                "config": config,
            }),
        )?;
    }
    let summary = ScenarioSummary {
        label: label.to_string(),
        dim,
        modes,
        savings_pct,
        wall_seconds: start.elapsed().as_secs_f64(),
        target: target.clone(),
        initial: initial.cloned(),
        config: config.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// The `bridge` verb: every scenario of a non-sweep config.
pub fn run_bridge_experiment(
    config: &ExperimentConfig,
    out: &Path,
    parallel: bool,
) -> Result<Vec<ScenarioSummary>> {
    config
        .scenarios()?
        .iter()
        .map(|(label, target, initial)| {
            let dir = if config.sweep.axis == SweepAxis::None {
                out.to_path_buf()
            } else {
                out.join(label)
            };
            run_scenario(config, label, target, initial.as_ref(), &dir, parallel)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub dim: usize,
    pub per_dim: BTreeMap<String, f64>,
    pub stderr_per_dim: BTreeMap<String, f64>,
    /// MF saving against IA(0) in percent.
    pub saving_pct: f64,
    pub wall_seconds: f64,
}

/// The `sweep` verb: one scenario per sweep value and a `sweep.csv` table.
pub fn run_sweep(config: &ExperimentConfig, out: &Path, parallel: bool) -> Result<Vec<SweepRow>> {
    if config.sweep.axis == SweepAxis::None {
        return Err(Error::Config("sweep verb needs a [sweep] axis".into()));
    }
    fs::create_dir_all(out)?;
    let scenarios = config.scenarios()?;
    let results: Vec<Result<ScenarioSummary>> =
        par_map(&scenarios, parallel, |(label, target, initial)| {
            run_scenario(
                config,
                label,
                target,
                initial.as_ref(),
                &out.join(label),
                parallel,
            )
        });
    let mut rows = Vec::new();
    for (value, summary) in config.sweep.values.iter().zip(results) {
        let summary = summary?;
        let per_dim = summary
            .modes
            .iter()
            .map(|m| (m.mode.to_string(), m.per_dim))
            .collect();
        let stderr_per_dim = summary
            .modes
            .iter()
            .map(|m| (m.mode.to_string(), m.stderr / summary.dim as f64))
            .collect();
        let saving_pct = match (summary.mode(ModeName::Mf), summary.mode(ModeName::Ia0)) {
            (Some(mf), Some(ia)) => saving(ia.total, mf.total),
            _ => f64::NAN,
        };
        rows.push(SweepRow {
            value: *value,
            dim: summary.dim,
            per_dim,
            stderr_per_dim,
            saving_pct,
            wall_seconds: summary.wall_seconds,
        });
    }
    let mut w = csv_writer(&out.join("sweep.csv"))?;
    let mut header = vec![config.sweep.axis.to_string(), "d".into()];
    header.extend(config.modes.iter().map(|m| format!("E_per_d_{m}")));
    header.extend(config.modes.iter().map(|m| format!("stderr_per_d_{m}")));
    header.extend(["saving_pct".to_string(), "wall_seconds".to_string()]);
    write_row(&mut w, &header)?;
    for r in &rows {
        let mut row = vec![r.value.to_string(), r.dim.to_string()];
        row.extend(
            config
                .modes
                .iter()
                .map(|m| r.per_dim[m.as_str()].to_string()),
        );
        row.extend(
            config
                .modes
                .iter()
                .map(|m| r.stderr_per_dim[m.as_str()].to_string()),
        );
        row.extend([r.saving_pct.to_string(), r.wall_seconds.to_string()]);
        write_row(&mut w, &row)?;
    }
    flush(w)?;
    write_json(
        &out.join("sweep.json"),
        &serde_json::json!({
            "axis": config.sweep.axis,
            "rows": rows,
            "note": "zone standard deviations default to the Scenario-B values broadcast per zone",
            "config": config,
        }),
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct LqgSummary {
    pub problem: LqgProblem,
    pub rho: f64,
    pub s_one: f64,
    pub energy: BTreeMap<String, f64>,
    pub saving_pct: f64,
    /// `(m̄, E_IA(m̄))` on a grid over `[0, m_tar]`.
    pub ia_grid: Vec<(f64, f64)>,
    pub ordering_holds: bool,
    pub monte_carlo: BTreeMap<String, LqgMonteCarlo>,
}

/// The `lqg` verb: closed-form trajectories, IA baselines and metrics.
pub fn run_lqg(config: &ExperimentConfig, out: &Path) -> Result<LqgSummary> {
    let spec = config
        .lqg
        .as_ref()
        .ok_or_else(|| Error::Config("missing [lqg] section".into()))?;
    fs::create_dir_all(out)?;
    let problem = LqgProblem::new(spec.kappa, spec.q, spec.m_tar, spec.sigma_tar)?;
    let sol = solve_lqg(&problem)?;
    let ia0 = ia_baseline(&sol, 0.0)?;
    let iam = ia_baseline(&sol, spec.m_tar)?;
    let n = QUAD_POINTS;
    let mf_m = lqg_metrics(&sol, n)?;
    let ia0_m = lqg_metrics(&ia0, n)?;
    let iam_m = lqg_metrics(&iam, n)?;

    let mut w = csv_writer(&out.join("lqg.csv"))?;
    write_row(
        &mut w,
        [
            "t", "S", "Sigma", "m_mf", "s_mf", "s_ia0", "s_iam", "P_mf", "P_ia0", "P_iam", "E_mf",
            "E_ia0", "E_iam",
        ],
    )?;
    for k in 0..n {
        let t = mf_m.t[k];
        write_row(
            &mut w,
            [
                t,
                sol.riccati(t),
                sol.variance(t),
                sol.mean(t),
                sol.offset(t),
                ia0.offset(t),
                iam.offset(t),
                mf_m.power[k],
                ia0_m.power[k],
                iam_m.power[k],
                mf_m.energy[k],
                ia0_m.energy[k],
                iam_m.energy[k],
            ]
            .map(|v| v.to_string()),
        )?;
    }
    flush(w)?;

    let points = spec.m_bar_points.max(2);
    let ia_grid = (0..points)
        .map(|i| {
            let m_bar = spec.m_tar * i as f64 / (points - 1) as f64;
            Ok((
                m_bar,
                lqg_metrics(&ia_baseline(&sol, m_bar)?, n)?.total_energy(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let e_mf = mf_m.total_energy();
    let ordering_holds = ia_grid.iter().all(|(_, e)| e_mf <= *e);
    let mut monte_carlo = BTreeMap::new();
    if spec.mc_batch >= 2 {
        let n_steps = config.sim.n_steps;
        let seed = config.sim.seed;
        monte_carlo.insert(
            "mf".into(),
            simulate_lqg(&sol, spec.kappa, spec.mc_batch, n_steps, seed)?,
        );
        monte_carlo.insert(
            "ia0".into(),
            simulate_lqg(&ia0, spec.kappa, spec.mc_batch, n_steps, seed)?,
        );
        monte_carlo.insert(
            "iam".into(),
            simulate_lqg(&iam, spec.kappa, spec.mc_batch, n_steps, seed)?,
        );
    }
    let summary = LqgSummary {
        problem,
        rho: sol.rho,
        s_one: sol.s_one,
        energy: [
            ("mf".to_string(), e_mf),
            ("ia0".to_string(), ia0_m.total_energy()),
            ("iam".to_string(), iam_m.total_energy()),
        ]
        .into(),
        saving_pct: saving(ia0_m.total_energy(), e_mf),
        ia_grid,
        ordering_holds,
        monte_carlo,
    };
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "result": summary, "config": config }),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct DensitySummary {
    pub scenario: String,
    pub times: Vec<f64>,
    /// L1 distance between the analytic density and the histogram per time.
    pub histogram_l1: Vec<f64>,
}

/// The `density` verb: analytic MF marginal of coordinate 0 on a grid,
/// optionally beside a histogram of a simulated ensemble.
pub fn run_density(config: &ExperimentConfig, out: &Path) -> Result<DensitySummary> {
    let spec = &config.density;
    if spec.points < 2 || spec.hi <= spec.lo {
        return Err(Error::Config(
            "density grid needs points >= 2 and hi > lo".into(),
        ));
    }
    if spec.times.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::Config("density times must lie in (0, 1)".into()));
    }
    fs::create_dir_all(out)?;
    let (label, target, initial) = config
        .scenarios()?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Config("no scenario".into()))?;
    let mut sim = config.sim_config(&target, initial.as_ref(), ModeName::Mf)?;
    let ctx = sim.context()?;
    let h = (spec.hi - spec.lo) / (spec.points - 1) as f64;
    let xs: Vec<f64> = (0..spec.points).map(|i| spec.lo + i as f64 * h).collect();
    let hist = if spec.histogram {
        sim.snapshots = spec.times.clone();
        sim.record_paths = 0;
        sim.affine_diagnostics = false;
        Some(run_bridge(&sim)?)
    } else {
        None
    };
    let mut w = csv_writer(&out.join("density.csv"))?;
    write_row(&mut w, ["t", "x", "density", "histogram"])?;
    let mut histogram_l1 = Vec::new();
    for (ti, &t) in spec.times.iter().enumerate() {
        let marginal = ctx.marginal(t)?.marginal(0)?;
        let counts = hist.as_ref().map(|run| {
            let snap = &run.snapshots[ti];
            let mut c = vec![0.0; spec.points];
            for p in &snap.positions {
                let i = ((p[0] - spec.lo) / h + 0.5).floor();
                if i >= 0.0 && (i as usize) < spec.points {
                    c[i as usize] += 1.0;
                }
            }
            let norm = snap.positions.len() as f64 * h;
            c.iter().map(|v| v / norm).collect::<Vec<f64>>()
        });
        let mut l1 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let p = marginal.pdf(&[x]);
            let hv = counts.as_ref().map(|c| c[i]);
            if let Some(hv) = hv {
                l1 += (p - hv).abs() * h;
            }
            write_row(
                &mut w,
                [
                    t.to_string(),
                    x.to_string(),
                    p.to_string(),
                    hv.map_or(String::new(), |v| v.to_string()),
                ],
            )?;
        }
        if counts.is_some() {
            histogram_l1.push(l1);
        }
    }
    flush(w)?;
    let summary = DensitySummary {
        scenario: label,
        times: spec.times.clone(),
        histogram_l1,
    };
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "result": summary, "config": config }),
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct GuidanceCheckSummary {
    pub scenario: String,
    pub converged: bool,
    pub iterations: usize,
    pub max_residual: f64,
    pub log: Vec<IterationRecord>,
}

/// The `guidance-check` verb: Picard iteration against the linear guidance
/// for every scenario of the config.
pub fn run_guidance_check(
    config: &ExperimentConfig,
    out: &Path,
    parallel: bool,
) -> Result<Vec<GuidanceCheckSummary>> {
    fs::create_dir_all(out)?;
    let scenarios = config.scenarios()?;
    let results: Vec<Result<(GuidanceCheckSummary, Vec<[String; 7]>)>> =
        par_map(&scenarios, parallel, |(label, target, initial)| {
            let sim = config.sim_config(target, initial.as_ref(), ModeName::Mf)?;
            let fp =
                fixed_point_guidance(&sim, config.fixed_point.tol, config.fixed_point.max_iter)?;
            let schedule = &sim.schedule;
            let lin =
                linear_guidance(&sim.initial_mean(), &sim.target.mean())?.per_interval(schedule)?;
            let fixed = fp.guidance.per_interval(schedule)?;
            let mut rows = Vec::new();
            for i in 0..schedule.len() {
                for j in 0..lin[i].len() {
                    rows.push([
                        label.clone(),
                        i.to_string(),
                        schedule.midpoint(i).to_string(),
                        j.to_string(),
                        fixed[i][j].to_string(),
                        lin[i][j].to_string(),
                        (fixed[i][j] - lin[i][j]).to_string(),
                    ]);
                }
            }
            Ok((
                GuidanceCheckSummary {
                    scenario: label.clone(),
                    converged: fp.converged,
                    iterations: fp.iterations(),
                    max_residual: fp.max_residual(),
                    log: fp.log,
                },
                rows,
            ))
        });
    let mut summaries = Vec::new();
    let mut w_iter = csv_writer(&out.join("guidance_check.csv"))?;
    write_row(
        &mut w_iter,
        ["scenario", "iteration", "max_update", "max_residual"],
    )?;
    let mut w_res = csv_writer(&out.join("guidance_residuals.csv"))?;
    write_row(
        &mut w_res,
        [
            "scenario", "interval", "t_mid", "coord", "nu", "nu_lin", "residual",
        ],
    )?;
    for r in results {
        let (summary, rows) = r?;
        for rec in &summary.log {
            let worst = rec.residuals.iter().cloned().fold(0.0, f64::max);
            write_row(
                &mut w_iter,
                [
                    summary.scenario.clone(),
                    rec.iteration.to_string(),
                    rec.max_update.to_string(),
                    worst.to_string(),
                ],
            )?;
        }
        for row in rows {
            write_row(&mut w_res, &row)?;
        }
        summaries.push(summary);
    }
    flush(w_iter)?;
    flush(w_res)?;
    write_json(
        &out.join("summary.json"),
        &serde_json::json!({ "result": summaries, "config": config }),
    )?;
    Ok(summaries)
}
