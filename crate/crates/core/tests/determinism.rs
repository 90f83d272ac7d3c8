//! Seeded runs give bit-identical results whatever the worker count.

use mfpid::cli::{preset, ModeName};
use mfpid::simulate::{run_bridge, BridgeRun};

fn run(threads: Option<usize>, parallel: bool) -> BridgeRun {
    let cfg = preset("scenario-b").unwrap();
    let mut sim = cfg
        .sim_config(
            cfg.target.as_ref().unwrap(),
            cfg.initial.as_ref(),
            ModeName::Mf,
        )
        .unwrap();
    sim.batch = 1500;
    sim.n_steps = 400;
    sim.parallel = parallel;
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| run_bridge(&sim).unwrap()),
        None => run_bridge(&sim).unwrap(),
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

#[test]
fn worker_count_is_invisible() {
    let serial = run(None, false);
    for threads in [1, 3] {
        let other = run(Some(threads), true);
        assert_eq!(serial.report, other.report, "{threads} workers");
        assert_eq!(bits(&serial.particle_energy), bits(&other.particle_energy));
        assert_eq!(serial.final_positions, other.final_positions);
    }
}

#[test]
fn seed_changes_the_draws() {
    let cfg = preset("scenario-b").unwrap();
    let mut sim = cfg
        .sim_config(
            cfg.target.as_ref().unwrap(),
            cfg.initial.as_ref(),
            ModeName::Mf,
        )
        .unwrap();
    sim.batch = 500;
    sim.n_steps = 200;
    let a = run_bridge(&sim).unwrap();
    sim.seed += 1;
    let b = run_bridge(&sim).unwrap();
    assert_ne!(a.report.total.to_bits(), b.report.total.to_bits());
}
