//! Exponent probe: log-log regressions of the log-partition variance and of
//! the Gibbs endpoint spread against the horizon, reported with confidence
//! bands against the rigorous bounds (1/2 longitudinal, 3/4 transversal).
//! The conjectured sharp values are deliberately not asserted: they are not
//! resolvable at this scale.

use crate::runner::{Outcome, RunContext, RunError};
use crate::svg::LinePlot;
use polylab_core::fluct::horizon_samples;
use polylab_core::geometry::TubeSpec;
use polylab_core::numerics::{fit_line, Moments};
use polylab_core::rng;

pub struct ExponentReport {
    pub t_ladder: Vec<f64>,
    pub var_lnz: Vec<f64>,
    pub spread: Vec<f64>,
    /// Longitudinal estimate (half the variance slope), when defined.
    pub xi_par: Option<(f64, f64)>,
    pub xi_perp: (f64, f64),
}

impl ExponentReport {
    /// Confidence bands consistent with the bounds `xi_par <= 1/2` and
    /// `xi_perp <= 3/4`.
    pub fn bounds_ok(&self, k: f64) -> bool {
        let par_ok = match self.xi_par {
            None => true,
            Some((v, se)) => v - k * se <= 0.5,
        };
        let (vp, sp) = self.xi_perp;
        par_ok && vp - k * sp <= 0.75
    }
}

pub fn probe(
    beta: f64,
    nu: f64,
    r: f64,
    t_ladder: &[f64],
    n_env: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ExponentReport, RunError> {
    if t_ladder.len() < 4 {
        return Err(RunError::Config(
            "exponent probe needs at least 4 horizons".to_string(),
        ));
    }
    if t_ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RunError::Config("horizon ladder must be increasing".to_string()));
    }
    let spec = TubeSpec::new(1, r)?;
    let mut var_lnz = Vec::new();
    let mut spread = Vec::new();
    for (i, &t) in t_ladder.iter().enumerate() {
        let s = horizon_samples(
            beta,
            nu,
            &spec,
            t,
            n_env,
            n_paths,
            rng::derive_seed(seed, &[i as u64]),
        );
        var_lnz.push(Moments::from_slice(&s.ln_z).var());
        spread.push(Moments::from_slice(&s.endpoint_spread).mean());
    }
    let ln_t: Vec<f64> = t_ladder.iter().map(|t| t.ln()).collect();
    let xi_par = if var_lnz.iter().all(|&v| v > 0.0) {
        let ln_v: Vec<f64> = var_lnz.iter().map(|v| v.ln()).collect();
        let f = fit_line(&ln_t, &ln_v);
        Some((0.5 * f.slope, 0.5 * f.slope_se))
    } else {
        None
    };
    let ln_s: Vec<f64> = spread.iter().map(|v| v.ln()).collect();
    let fperp = fit_line(&ln_t, &ln_s);
    if !fperp.slope.is_finite() {
        return Err(RunError::Config("degenerate endpoint regression".to_string()));
    }
    Ok(ExponentReport {
        t_ladder: t_ladder.to_vec(),
        var_lnz,
        spread,
        xi_par,
        xi_perp: (fperp.slope, fperp.slope_se),
    })
}

pub fn run(ctx: &RunContext) -> Result<Outcome, RunError> {
    let beta = ctx.cfg.f64("beta", 0.8)?;
    let nu = ctx.cfg.f64("nu", 1.0)?;
    let r = ctx.cfg.f64("r", 1.0)?;
    let ladder = ctx.cfg.f64_list("t_ladder", &[4.0, 8.0, 16.0, 32.0])?;
    let n_env = ctx.cfg.usize("n_env", 160)?;
    let n_paths = ctx.cfg.usize("n_paths", 192)?;
    let rep = probe(beta, nu, r, &ladder, n_env, n_paths, ctx.seed)?;

    let mut csv = String::from("t,var_lnz,endpoint_spread\n");
    for (i, &t) in rep.t_ladder.iter().enumerate() {
        csv.push_str(&format!("{},{},{}\n", t, rep.var_lnz[i], rep.spread[i]));
    }
    match rep.xi_par {
        Some((v, se)) => csv.push_str(&format!("# xi_parallel,{v},{se}\n")),
        None => csv.push_str("# xi_parallel,undefined (zero variance)\n"),
    }
    csv.push_str(&format!("# xi_perp,{},{}\n", rep.xi_perp.0, rep.xi_perp.1));
    ctx.write_file("exponents.csv", &csv)?;

    let mut plot = LinePlot::new("fluctuation scaling", "t", "value").log_x();
    plot.add(
        "var ln Z",
        rep.t_ladder.iter().zip(&rep.var_lnz).map(|(&t, &v)| (t, v)).collect(),
    );
    plot.add(
        "endpoint spread",
        rep.t_ladder.iter().zip(&rep.spread).map(|(&t, &v)| (t, v)).collect(),
    );
    ctx.write_file("plots/exponents.svg", &plot.render())?;

    match rep.xi_par {
        Some((v, se)) => println!("xi_parallel = {v:.4} +- {se:.4} (bound 1/2)"),
        None => println!("xi_parallel undefined: zero variance at this coupling"),
    }
    println!(
        "xi_perp = {:.4} +- {:.4} (bound 3/4)",
        rep.xi_perp.0, rep.xi_perp.1
    );
    Ok(if rep.bounds_ok(3.0) {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}
