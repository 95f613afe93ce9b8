//! Localization sweep along a ladder of increasing `nu beta^2`: favorite-path
//! occupation, overlap indices, and the reference slope of `1 - R*` against
//! `(nu beta^2)^{-1/6}`.

use crate::runner::{Outcome, RunContext, RunError};
use crate::svg::LinePlot;
use polylab_core::environment::{EnvConfig, Environment};
use polylab_core::geometry::TubeSpec;
use polylab_core::gibbs::{two_to_one, GibbsEnsemble};
use polylab_core::numerics::{fit_line, linspace, Moments};
use polylab_core::rng;
use rayon::prelude::*;

pub struct Rung {
    pub beta: f64,
    pub nu: f64,
    pub nu_beta2: f64,
    pub r_star: f64,
    pub r_star_se: f64,
    pub j: f64,
    pub sandwich_ok: bool,
}

pub fn sweep_rung(
    beta: f64,
    nu: f64,
    t: f64,
    r: f64,
    n_env: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Rung, RunError> {
    let spec = TubeSpec::new(1, r)?;
    let obs = linspace(0.0, t, 24);
    let rows: Vec<(f64, f64, bool)> = (0..n_env)
        .into_par_iter()
        .map(|i| {
            let cfg = EnvConfig::new(
                1,
                nu,
                t,
                6.0 * t.sqrt() + r,
                rng::derive_seed(seed, &[rng::tag::ENV, i as u64]),
            )
            .expect("sweep config");
            let env = Environment::sample(&cfg).expect("sweep env");
            let mut s = rng::stream(seed, &[rng::tag::PATHS, i as u64]);
            let ens = GibbsEnsemble::sample_free(env, spec, beta, t, &obs, n_paths, &mut s)
                .expect("sweep ensemble");
            let rep = two_to_one(&ens, &obs[1..]).expect("sweep report");
            (rep.r_star, rep.j_plugin, rep.lower_ok && rep.upper_ok)
        })
        .collect();
    let rs = Moments::from_slice(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let js = Moments::from_slice(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(Rung {
        beta,
        nu,
        nu_beta2: nu * beta * beta,
        r_star: rs.mean(),
        r_star_se: rs.sem(),
        j: js.mean(),
        sandwich_ok: rows.iter().all(|r| r.2),
    })
}

pub struct SweepReport {
    pub rungs: Vec<Rung>,
    /// Slope of `ln(1 - R*)` against `ln(nu beta^2)`; the reference decay
    /// exponent is -1/6.
    pub decay_slope: f64,
    pub decay_slope_se: f64,
    pub monotone: bool,
}

pub fn run_sweep(
    pairs: &[(f64, f64)],
    t: f64,
    r: f64,
    n_env: usize,
    n_paths: usize,
    seed: u64,
) -> Result<SweepReport, RunError> {
    if pairs.len() < 4 {
        return Err(RunError::Config(
            "localization ladder needs at least 4 rungs".to_string(),
        ));
    }
    let mut prev = f64::NEG_INFINITY;
    for (i, &(b, n)) in pairs.iter().enumerate() {
        let nb2 = n * b * b;
        if i > 0 && nb2 <= prev {
            return Err(RunError::Config(
                "nu beta^2 ladder must be increasing".to_string(),
            ));
        }
        prev = nb2;
    }
    let rungs: Vec<Rung> = pairs
        .iter()
        .enumerate()
        .map(|(i, &(beta, nu))| {
            sweep_rung(beta, nu, t, r, n_env, n_paths, rng::derive_seed(seed, &[i as u64]))
        })
        .collect::<Result<_, _>>()?;

    let fit_pts: Vec<(f64, f64)> = rungs
        .iter()
        .filter(|r| r.nu_beta2 > 0.0 && r.r_star < 1.0)
        .map(|r| (r.nu_beta2.ln(), (1.0 - r.r_star).ln()))
        .collect();
    let (slope, slope_se) = if fit_pts.len() >= 3 {
        let xs: Vec<f64> = fit_pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fit_pts.iter().map(|p| p.1).collect();
        let f = fit_line(&xs, &ys);
        (f.slope, f.slope_se)
    } else {
        (f64::NAN, f64::NAN)
    };
    // Non-decreasing within combined error bands.
    let monotone = rungs.windows(2).all(|w| {
        w[1].r_star + 3.0 * (w[0].r_star_se.powi(2) + w[1].r_star_se.powi(2)).sqrt()
            >= w[0].r_star
    });
    Ok(SweepReport {
        rungs,
        decay_slope: slope,
        decay_slope_se: slope_se,
        monotone,
    })
}

pub fn run(ctx: &RunContext) -> Result<Outcome, RunError> {
    let betas = ctx.cfg.f64_list("beta_ladder", &[0.0, 0.5, 1.0, 2.0, 2.0])?;
    let nus = ctx.cfg.f64_list("nu_ladder", &[1.0, 4.0, 4.0, 4.0, 16.0])?;
    if betas.len() != nus.len() {
        return Err(RunError::Config(
            "beta_ladder and nu_ladder must have equal length".to_string(),
        ));
    }
    if betas.iter().any(|b| b.abs() > 2.5) {
        return Err(RunError::Config(
            "ladder couplings must stay bounded (|beta| <= 2.5)".to_string(),
        ));
    }
    let t = ctx.cfg.f64("t", 8.0)?;
    let r = ctx.cfg.f64("r", 1.0)?;
    let n_env = ctx.cfg.usize("n_env", 24)?;
    let n_paths = ctx.cfg.usize("n_paths", 192)?;
    let pairs: Vec<(f64, f64)> = betas.into_iter().zip(nus).collect();
    let report = run_sweep(&pairs, t, r, n_env, n_paths, ctx.seed)?;

    let mut csv =
        String::from("beta,nu,nu_beta2,r_star,r_star_se,one_minus_r_star,j,sandwich_ok\n");
    for rung in &report.rungs {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            rung.beta,
            rung.nu,
            rung.nu_beta2,
            rung.r_star,
            rung.r_star_se,
            1.0 - rung.r_star,
            rung.j,
            rung.sandwich_ok
        ));
    }
    csv.push_str(&format!(
        "# decay_slope,{},{}\n# monotone,{}\n",
        report.decay_slope, report.decay_slope_se, report.monotone
    ));
    ctx.write_file("sweep.csv", &csv)?;

    let mut plot = LinePlot::new("favorite-tube occupation", "nu beta^2", "R*").log_x();
    plot.add(
        "R*",
        report
            .rungs
            .iter()
            .filter(|r| r.nu_beta2 > 0.0)
            .map(|r| (r.nu_beta2, r.r_star))
            .collect(),
    );
    ctx.write_file("plots/r_star.svg", &plot.render())?;
    println!(
        "localization sweep: monotone = {}, decay slope = {:.4} (se {:.4})",
        report.monotone, report.decay_slope, report.decay_slope_se
    );
    Ok(if report.monotone && report.rungs.iter().all(|r| r.sandwich_ok) {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}
