//! Calibration pilots for thresholds that the test suites freeze.

use polylab_core::crossover::{run_crossover, CrossoverSchedule};
use polylab_core::environment::{EnvConfig, Environment};
use polylab_core::fastsim::SlicedSim;
use polylab_core::geometry::TubeSpec;
use polylab_core::gibbs::{favorite_path, two_to_one, GibbsEnsemble, SpatialGrid};
use polylab_core::numerics::{linspace, Moments};
use polylab_core::rng;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    match which.as_str() {
        "crossover" => pilot_crossover(),
        "diffusivity" => pilot_diffusivity(),
        "localization" => pilot_localization(),
        "favorite" => pilot_favorite_beta0(),
        _ => {
            pilot_favorite_beta0();
            pilot_localization();
            pilot_diffusivity();
            pilot_crossover();
        }
    }
}

fn pilot_crossover() {
    let t0 = Instant::now();
    let schedule = CrossoverSchedule::unit(0.5).unwrap();
    let rungs = run_crossover(&schedule, &[64.0, 256.0], 400, 4242).unwrap();
    for r in &rungs {
        println!(
            "crossover t={}: n={} mean={:.4}+-{:.4} var={:.4}+-{:.4} target={:.4} ks={:?}",
            r.entry.t, r.n_particles, r.mean, r.mean_se, r.var, r.var_se, r.var_target, r.ks_prev
        );
    }
    println!("crossover pilot took {:.1}s", t0.elapsed().as_secs_f64());
    // One rung at t=1024 with few replicas to measure per-replica cost.
    let t1 = Instant::now();
    let rungs = run_crossover(&schedule, &[1024.0], 20, 4243).unwrap();
    println!(
        "t=1024 20 reps took {:.2}s -> per replica {:.3}s; mean {:.3} var {:.3}",
        t1.elapsed().as_secs_f64(),
        t1.elapsed().as_secs_f64() / 20.0,
        rungs[0].mean,
        rungs[0].var
    );
}

fn pilot_diffusivity() {
    let t0 = Instant::now();
    let spec = TubeSpec::new(3, 1.0).unwrap();
    let t = 8.0;
    let beta = 0.1;
    let sim = SlicedSim::new(3, 1.0, t, 6.0 * t.sqrt() + 1.0, spec, 0.25);
    let mut vals = Vec::new();
    for e in 0..8u64 {
        let sums = sim.walk_free(rng::derive_seed(51, &[e]), rng::derive_seed(52, &[e]), 2000);
        let lw: Vec<f64> = sums.iter().map(|p| beta * p.hits as f64).collect();
        let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for (l, p) in lw.iter().zip(&sums) {
            let w = (l - max).exp();
            num += w * (p.end[0] / t.sqrt()).exp();
            den += w;
        }
        vals.push(num / den);
        println!("diffusivity env {e}: lhs = {:.4}", num / den);
    }
    let m = Moments::from_slice(&vals);
    println!(
        "diffusivity mean {:.4} (se {:.4}) target {:.4}; took {:.1}s",
        m.mean(),
        m.sem(),
        (0.5f64).exp(),
        t0.elapsed().as_secs_f64()
    );
}

fn pilot_localization() {
    let t0 = Instant::now();
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let t = 8.0;
    for (beta, nu) in [(0.0, 1.0), (2.0, 16.0)] {
        let obs = linspace(0.0, t, 24);
        let mut rs = Moments::default();
        for i in 0..12u64 {
            let cfg = EnvConfig::new(1, nu, t, 6.0 * t.sqrt() + 1.0, rng::derive_seed(61, &[i]))
                .unwrap();
            let env = Environment::sample(&cfg).unwrap();
            let mut s = rng::stream(62, &[i]);
            let ens =
                GibbsEnsemble::sample_free(env, spec, beta, t, &obs, 192, &mut s).unwrap();
            let rep = two_to_one(&ens, &obs[1..]).unwrap();
            rs.push(rep.r_star);
        }
        println!(
            "localization beta={beta} nu={nu} (nu b^2 = {}): R* = {:.4} (se {:.4})",
            nu * beta * beta,
            rs.mean(),
            rs.sem()
        );
    }
    println!("localization pilot took {:.1}s", t0.elapsed().as_secs_f64());
}

fn pilot_favorite_beta0() {
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let t = 8.0;
    let obs = linspace(0.0, t, 32);
    let cfg = EnvConfig::new(1, 1.0, t, 6.0 * t.sqrt() + 1.0, 777).unwrap();
    let env = Environment::sample(&cfg).unwrap();
    let mut s = rng::stream(778, &[1]);
    let ens = GibbsEnsemble::sample_free(env, spec, 0.0, t, &obs, 1000, &mut s).unwrap();
    let grid = SpatialGrid::covering(-20.0, 20.0, spec.rho / 2.0);
    let fav = favorite_path(&ens, &grid, &obs[1..]).unwrap();
    println!("favorite beta=0 t=8 n=1000: R* = {:.4}", fav.r_star.value);
}
