//! Variance and tail diagnostics for the log partition function across
//! environment replicas.

use crate::environment::{EnvConfig, Environment};
use crate::geometry::{lambda, TubeSpec};
use crate::gibbs::GibbsEnsemble;
use crate::numerics::{linspace, log_mean_exp, Moments};
use crate::rng;
use crate::{PolyError, Result};
use rayon::prelude::*;

/// One tail cell of the concentration check.
#[derive(Clone, Copy, Debug)]
pub struct TailCheck {
    pub u: f64,
    pub exceedances: u64,
    pub n: u64,
    /// `2 exp(-(u ^ u^2/(c t))/2)` with `c = nu c_+^2 e^{c_+}`.
    pub bound: f64,
    /// Exact binomial lower confidence bound on the tail probability.
    pub lower_99: f64,
}

impl TailCheck {
    pub fn ok(&self) -> bool {
        self.lower_99 <= self.bound
    }
}

pub struct VarConcReport {
    pub var_lnz: f64,
    pub var_se: f64,
    /// `c_+^2 t nu J_t` with the pairwise overlap average across replicas.
    pub bound: f64,
    pub bound_se: f64,
    pub j_mean: f64,
    pub tails: Vec<TailCheck>,
}

impl VarConcReport {
    /// Variance bound satisfied within `k` combined standard errors.
    pub fn variance_ok(&self, k: f64) -> bool {
        let se = (self.var_se * self.var_se + self.bound_se * self.bound_se).sqrt();
        self.var_lnz <= self.bound + k * se
    }

    pub fn tails_ok(&self) -> bool {
        self.tails.iter().all(|t| t.ok())
    }
}

/// Sample `ln Z_t` and the pairwise overlap `J_t` across `n_env` replicas,
/// compare the variance against `c_+^2 t nu E[J_t]`, and check the empirical
/// tail against the exponential bound at each `u` with an exact binomial
/// confidence bound at 99%.
#[allow(clippy::too_many_arguments)]
pub fn variance_and_concentration(
    beta: f64,
    nu: f64,
    spec: &TubeSpec,
    t: f64,
    n_env: usize,
    n_paths: usize,
    u_grid: &[f64],
    master: u64,
) -> Result<VarConcReport> {
    if n_env < 100 {
        return Err(PolyError::config(
            "variance check needs at least 100 replicas",
        ));
    }
    let d = spec.d;
    let obs = linspace(0.0, t, 32);
    let rows: Vec<(f64, f64)> = (0..n_env)
        .into_par_iter()
        .map(|i| {
            let cfg = EnvConfig::new(
                d,
                nu,
                t,
                6.0 * t.sqrt() + spec.r,
                rng::derive_seed(master, &[rng::tag::ENV, i as u64]),
            )
            .expect("valid config");
            let env = Environment::sample(&cfg).expect("valid config");
            let mut s = rng::stream(master, &[rng::tag::PATHS, i as u64]);
            let ens = GibbsEnsemble::sample_free(env, *spec, beta, t, &obs, n_paths, &mut s)
                .expect("valid ensemble");
            let ln_z = ens.ln_partition(t);
            let j = ens.overlaps(&obs[1..]).expect("overlap grid").j_t;
            (ln_z, j)
        })
        .collect();

    let lnz: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let js: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let mz = Moments::from_slice(&lnz);
    let mj = Moments::from_slice(&js);
    let c_plus = lambda(beta.abs());
    let scale = c_plus * c_plus * t * nu;

    // Jackknife error for the sample variance.
    let var = mz.var();
    let mean = mz.mean();
    let n = lnz.len() as f64;
    let fourth: f64 = lnz.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let var_se = ((fourth - var * var * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();

    let c_conc = nu * c_plus * c_plus * c_plus.exp();
    let tails = u_grid
        .iter()
        .map(|&u| {
            let exceed = lnz.iter().filter(|&&v| (v - mean).abs() > u).count() as u64;
            let bound = 2.0 * (-0.5 * u.min(u * u / (c_conc * t))).exp();
            TailCheck {
                u,
                exceedances: exceed,
                n: lnz.len() as u64,
                bound,
                lower_99: crate::stats::binomial_lower_bound(exceed, lnz.len() as u64, 0.99),
            }
        })
        .collect();

    Ok(VarConcReport {
        var_lnz: var,
        var_se,
        bound: scale * mj.mean(),
        bound_se: scale * mj.sem(),
        j_mean: mj.mean(),
        tails,
    })
}

/// Log-moment utilities shared by the exponent probe: per-replica
/// `ln Z_t` and the Gibbs endpoint spread.
pub struct HorizonSample {
    pub ln_z: Vec<f64>,
    pub endpoint_spread: Vec<f64>,
}

/// For each replica, `ln Z_t` and the Gibbs-weighted standard deviation of
/// the endpoint's first coordinate.
pub fn horizon_samples(
    beta: f64,
    nu: f64,
    spec: &TubeSpec,
    t: f64,
    n_env: usize,
    n_paths: usize,
    master: u64,
) -> HorizonSample {
    let rows: Vec<(f64, f64)> = (0..n_env)
        .into_par_iter()
        .map(|i| {
            let (lw, ends, _) =
                crate::gibbs::replica_log_weights(beta, nu, spec, t, n_paths, master, i as u64);
            let ln_z = log_mean_exp(&lw);
            let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut wsum = 0.0;
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for (l, e) in lw.iter().zip(&ends) {
                let w = (l - max).exp();
                wsum += w;
                m1 += w * e;
                m2 += w * e * e;
            }
            m1 /= wsum;
            m2 /= wsum;
            (ln_z, (m2 - m1 * m1).max(0.0).sqrt())
        })
        .collect();
    HorizonSample {
        ln_z: rows.iter().map(|r| r.0).collect(),
        endpoint_spread: rows.iter().map(|r| r.1).collect(),
    }
}
