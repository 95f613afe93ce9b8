//! The intermediate-disorder ladder: normalized partition samples under the
//! joint parameter scaling, compared in moments against the continuum oracle
//! and in law across consecutive rungs.

use crate::runner::{Outcome, RunContext, RunError};
use crate::svg::LinePlot;
use polylab_core::crossover::{run_crossover, CrossoverSchedule};

pub fn run(ctx: &RunContext) -> Result<Outcome, RunError> {
    let beta_star = ctx.cfg.f64("beta_star", 0.5)?;
    let ladder = ctx.cfg.f64_list("t_ladder", &[64.0, 256.0, 1024.0])?;
    let replicas = ctx.cfg.usize("replicas", 2000)?;
    let schedule = CrossoverSchedule::unit(beta_star)?;
    if !schedule.asymptotics_ok(&ladder)? {
        return Err(RunError::Config(
            "schedule fails the vanishing conditions along the ladder".to_string(),
        ));
    }
    let rungs = run_crossover(&schedule, &ladder, replicas, ctx.seed)?;

    let mut csv = String::from("t,beta_t,nu_t,r_t,gamma_t,mean,var,var_target,ks_prev\n");
    for r in &rungs {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.entry.t,
            r.entry.beta_t,
            r.entry.nu_t,
            r.entry.r_t,
            r.entry.gamma_t,
            r.mean,
            r.var,
            r.var_target,
            r.ks_prev.map_or(String::new(), |k| k.to_string())
        ));
    }
    ctx.write_file("crossover.csv", &csv)?;

    let mut plot = LinePlot::new("normalized partition variance", "t", "variance").log_x();
    plot.add(
        "simulated",
        rungs.iter().map(|r| (r.entry.t, r.var)).collect(),
    );
    plot.add(
        "continuum target",
        rungs.iter().map(|r| (r.entry.t, r.var_target)).collect(),
    );
    ctx.write_file("plots/crossover_variance.svg", &plot.render())?;

    let mut ok = true;
    for r in &rungs {
        let mean_ok = (r.mean - 1.0).abs() <= 3.0 * r.mean_se;
        println!(
            "t = {:>6}: mean {:.4} (se {:.4}) var {:.4} target {:.4} ks_prev {}",
            r.entry.t,
            r.mean,
            r.mean_se,
            r.var,
            r.var_target,
            r.ks_prev.map_or("-".to_string(), |k| format!("{k:.4}")),
        );
        ok &= mean_ok;
    }
    if let Some(last) = rungs.last() {
        ok &= (last.var - last.var_target).abs() <= 3.0 * last.var_se;
    }
    let ks: Vec<f64> = rungs.iter().filter_map(|r| r.ks_prev).collect();
    if ks.len() >= 2 {
        ok &= ks.windows(2).all(|w| w[1] <= w[0]);
    }
    Ok(if ok { Outcome::Ok } else { Outcome::CheckFailed })
}
