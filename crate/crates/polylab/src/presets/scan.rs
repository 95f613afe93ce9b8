//! Phase-diagram scan over a `(beta, nu)` grid: free energies, excess free
//! energy, overlap and martingale statistics per cell, with the heatmap
//! overlaying the curve `nu = a |lambda(beta)|^{-2}`.

use crate::analytic::curve_nu;
use crate::runner::{Outcome, RunContext, RunError};
use crate::svg::HeatMap;
use polylab_core::environment::{EnvConfig, Environment};
use polylab_core::estimate::CSV_HEADER;
use polylab_core::geometry::TubeSpec;
use polylab_core::gibbs::GibbsEnsemble;
use polylab_core::numerics::{linspace, log_mean_exp};
use polylab_core::rng;
use polylab_core::{Estimate, Method};
use rayon::prelude::*;

pub struct CellResult {
    pub beta: f64,
    pub nu: f64,
    pub p_t: Estimate,
    pub psi_t: Estimate,
    pub j_t: Estimate,
    pub w_mean: Estimate,
    pub seed: u64,
}

/// One scan cell: shared environments feed the free-energy, overlap and
/// martingale estimators.
pub fn scan_cell(
    beta: f64,
    nu: f64,
    spec: &TubeSpec,
    t: f64,
    n_env: usize,
    n_paths: usize,
    seed: u64,
) -> CellResult {
    let obs = linspace(0.0, t, 16);
    let lam = polylab_core::geometry::lambda(beta);
    let rd = spec.slice_volume();
    let rows: Vec<(f64, f64, f64)> = (0..n_env)
        .into_par_iter()
        .map(|i| {
            let cfg = EnvConfig::new(
                spec.d,
                nu,
                t,
                6.0 * t.sqrt() + spec.r,
                rng::derive_seed(seed, &[rng::tag::ENV, i as u64]),
            )
            .expect("scan config");
            let env = Environment::sample(&cfg).expect("scan env");
            let mut s = rng::stream(seed, &[rng::tag::PATHS, i as u64]);
            let ens = GibbsEnsemble::sample_free(env, *spec, beta, t, &obs, n_paths, &mut s)
                .expect("scan ensemble");
            let lw: Vec<f64> = (0..n_paths)
                .map(|p| beta * ens.count_at(p, t) as f64)
                .collect();
            let ln_z = log_mean_exp(&lw);
            let j = ens.overlaps(&obs[1..]).expect("scan overlaps").j_t;
            let w = (ln_z - lam * nu * rd * t).exp();
            (ln_z, j, w)
        })
        .collect();
    let p: Vec<f64> = rows.iter().map(|r| r.0 / t).collect();
    let j: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let p_t = Estimate::from_samples(&p, Method::Direct);
    let annealed = nu * lam * rd;
    let psi_t = Estimate::new(annealed - p_t.value, p_t.stderr, p_t.n, Method::Direct);
    CellResult {
        beta,
        nu,
        p_t,
        psi_t,
        j_t: Estimate::from_samples(&j, Method::Direct),
        w_mean: Estimate::from_samples(&w, Method::Direct),
        seed,
    }
}

pub fn run(ctx: &RunContext) -> Result<Outcome, RunError> {
    let betas = ctx
        .cfg
        .f64_list("beta_grid", &[0.2, 0.4, 0.6, 0.8, 1.0])?;
    let nus = ctx.cfg.f64_list("nu_grid", &[0.5, 1.0, 1.5, 2.0, 2.5])?;
    let t = ctx.cfg.f64("t", 4.0)?;
    let r = ctx.cfg.f64("r", 1.0)?;
    let n_env = ctx.cfg.usize("n_env", 48)?;
    let n_paths = ctx.cfg.usize("n_paths", 128)?;
    validate(&betas, &nus, t, r, n_env)?;
    let spec = TubeSpec::new(1, r)?;

    let mut cells = Vec::new();
    for (bi, &beta) in betas.iter().enumerate() {
        for (ni, &nu) in nus.iter().enumerate() {
            let seed = rng::derive_seed(ctx.seed, &[bi as u64, ni as u64]);
            cells.push((bi, ni, beta, nu, seed));
        }
    }
    let results: Vec<(usize, usize, CellResult)> = cells
        .par_iter()
        .map(|&(bi, ni, beta, nu, seed)| {
            (bi, ni, scan_cell(beta, nu, &spec, t, n_env, n_paths, seed))
        })
        .collect();
    let mut sorted = results;
    sorted.sort_by_key(|(bi, ni, _)| (*bi, *ni));

    let mut psi = vec![vec![0.0; betas.len()]; nus.len()];
    for (bi, ni, cell) in &sorted {
        let mut csv = String::from(CSV_HEADER);
        csv.push('\n');
        for (name, est) in [
            ("p_t", &cell.p_t),
            ("psi_t", &cell.psi_t),
            ("j_t", &cell.j_t),
            ("w_mean", &cell.w_mean),
        ] {
            csv.push_str(&est.csv_row(name, cell.beta, cell.nu, r, 1, t, cell.seed));
            csv.push('\n');
        }
        ctx.write_file(&format!("cell-{bi}-{ni}.csv"), &csv)?;
        psi[*ni][*bi] = cell.psi_t.value;
    }

    // Overlay curve through the grid midpoint.
    let mid_b = betas[betas.len() / 2];
    let mid_n = nus[nus.len() / 2];
    let lam_mid = polylab_core::geometry::lambda(mid_b);
    let a = mid_n * lam_mid * lam_mid;
    let overlay: Vec<(f64, f64)> = linspace(betas[0], betas[betas.len() - 1], 64)
        .into_iter()
        .filter_map(|b| curve_nu(a, 2.0, b).ok().map(|nu| (b, nu)))
        .collect();
    let heat = HeatMap {
        title: "excess free energy psi_t".to_string(),
        x_ticks: betas.clone(),
        y_ticks: nus.clone(),
        values: psi,
        overlay: Some(overlay),
    };
    ctx.write_file("plots/psi_heatmap.svg", &heat.render())?;
    Ok(Outcome::Ok)
}

fn validate(betas: &[f64], nus: &[f64], t: f64, r: f64, n_env: usize) -> Result<(), RunError> {
    if betas.is_empty() || nus.is_empty() {
        return Err(RunError::Config("empty scan grid".to_string()));
    }
    if nus.iter().any(|&v| v <= 0.0) || t <= 0.0 || r <= 0.0 {
        return Err(RunError::Config(
            "scan requires positive nu, t and r".to_string(),
        ));
    }
    if n_env < 30 {
        return Err(RunError::Config(
            "scan needs at least 30 environments per cell".to_string(),
        ));
    }
    Ok(())
}
