//! Joint parameter scaling toward the continuum partition function and the
//! ladder experiment measuring it.

use crate::chaos::continuum_second_moment;
use crate::fastsim::SlicedSim;
use crate::geometry::{lambda, TubeSpec};
use crate::numerics::Moments;
use crate::rng;
use crate::stats::ks_two_sample;
use crate::{PolyError, Result};
use rayon::prelude::*;

/// Rule selecting `(beta_t, nu_t, r_t)` so the squared-coupling relation
/// `nu_t r_t^2 lambda(beta_t)^2 = beta_star^2 / sqrt(t)` holds exactly at
/// every horizon.
#[derive(Clone, Debug)]
pub struct CrossoverSchedule {
    pub beta_star: f64,
    /// `(nu_t, r_t)` as a function of the horizon; the coupling is solved
    /// from the exact relation.
    nu_r: fn(f64) -> (f64, f64),
}

#[derive(Clone, Copy, Debug)]
pub struct ScheduleEntry {
    pub t: f64,
    pub beta_t: f64,
    pub nu_t: f64,
    pub r_t: f64,
    pub gamma_t: f64,
}

impl CrossoverSchedule {
    /// The unit-geometry rule `r_t = nu_t = 1`, under which the relation
    /// reads `lambda(beta_t) = beta_star t^{-1/4}`.
    pub fn unit(beta_star: f64) -> Result<Self> {
        if beta_star <= 0.0 {
            return Err(PolyError::config("coupling must be positive"));
        }
        Ok(CrossoverSchedule {
            beta_star,
            nu_r: |_| (1.0, 1.0),
        })
    }

    pub fn with_rule(beta_star: f64, nu_r: fn(f64) -> (f64, f64)) -> Result<Self> {
        if beta_star <= 0.0 {
            return Err(PolyError::config("coupling must be positive"));
        }
        Ok(CrossoverSchedule { beta_star, nu_r })
    }

    pub fn at(&self, t: f64) -> Result<ScheduleEntry> {
        let (nu_t, r_t) = (self.nu_r)(t);
        if nu_t <= 0.0 || r_t <= 0.0 {
            return Err(PolyError::config("schedule produced non-positive nu or r"));
        }
        let lam = self.beta_star * t.powf(-0.25) / (nu_t.sqrt() * r_t);
        if lam <= -1.0 {
            return Err(PolyError::config("schedule coupling out of range"));
        }
        let beta_t = lam.ln_1p();
        let entry = ScheduleEntry {
            t,
            beta_t,
            nu_t,
            r_t,
            gamma_t: self.beta_star.powi(-3) * nu_t * r_t.powi(3) * lambda(beta_t).powi(3),
        };
        // The squared relation must hold exactly (up to rounding).
        let lhs = entry.nu_t * entry.r_t * entry.r_t * lambda(entry.beta_t).powi(2);
        let rhs = self.beta_star * self.beta_star / t.sqrt();
        if (lhs - rhs).abs() > 1e-10 * rhs {
            return Err(PolyError::config(format!(
                "scaling relation violated at t = {t}: {lhs} vs {rhs}"
            )));
        }
        Ok(entry)
    }

    /// Numerical check of the vanishing conditions along a ladder: the cubic
    /// coupling and the relative radius must decrease toward zero.
    pub fn asymptotics_ok(&self, ladder: &[f64]) -> Result<bool> {
        let mut prev_gamma = f64::INFINITY;
        let mut prev_rad = f64::INFINITY;
        for &t in ladder {
            let e = self.at(t)?;
            let rad = e.r_t / t.sqrt();
            if e.gamma_t >= prev_gamma || rad >= prev_rad {
                return Ok(false);
            }
            prev_gamma = e.gamma_t;
            prev_rad = rad;
        }
        Ok(true)
    }
}

/// One ladder rung of the crossover experiment.
#[derive(Clone, Debug)]
pub struct CrossoverRung {
    pub entry: ScheduleEntry,
    pub n_particles: usize,
    pub mean: f64,
    pub mean_se: f64,
    pub var: f64,
    pub var_se: f64,
    pub var_target: f64,
    /// Two-sample KS distance to the previous rung, when there is one.
    pub ks_prev: Option<f64>,
    samples: Vec<f64>,
}

impl CrossoverRung {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Simulate the normalized partition function along the horizon ladder and
/// compare moments against the continuum oracle.
///
/// Each replica runs two independent particle systems in a shared
/// environment; the mean uses their average and the second moment uses the
/// cross product, which removes the path-sampling noise from the variance
/// estimate.
pub fn run_crossover(
    schedule: &CrossoverSchedule,
    ladder: &[f64],
    replicas: usize,
    master: u64,
) -> Result<Vec<CrossoverRung>> {
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PolyError::config("horizon ladder must be increasing"));
    }
    let target = continuum_second_moment(schedule.beta_star, 1.0, 8, 1e-6)?.value - 1.0;
    let mut out: Vec<CrossoverRung> = Vec::with_capacity(ladder.len());
    for (rung_idx, &t) in ladder.iter().enumerate() {
        let entry = schedule.at(t)?;
        let n_particles = ((16.0 * t.sqrt()) as usize).clamp(64, 1024);
        let spec = TubeSpec::new(1, entry.r_t)?;
        let sim = SlicedSim::new(
            1,
            entry.nu_t,
            t,
            6.0 * t.sqrt() + entry.r_t,
            spec,
            1.0,
        );
        let pairs: Vec<[f64; 2]> = (0..replicas)
            .into_par_iter()
            .map(|rep| {
                let env_seed =
                    rng::derive_seed(master, &[rng::tag::ENV, rung_idx as u64, rep as u64]);
                let path_seed =
                    rng::derive_seed(master, &[rng::tag::PATHS, rung_idx as u64, rep as u64]);
                sim.smc_normalized_pair(entry.beta_t, env_seed, path_seed, n_particles)
            })
            .collect();
        let samples: Vec<f64> = pairs.iter().map(|p| 0.5 * (p[0] + p[1])).collect();
        let cross: Vec<f64> = pairs.iter().map(|p| p[0] * p[1]).collect();
        let ms = Moments::from_slice(&samples);
        let mc = Moments::from_slice(&cross);
        let var = mc.mean() - ms.mean() * ms.mean();
        // Delta-method error, treating the two averages as jointly normal.
        let var_se = (mc.sem() * mc.sem()
            + 4.0 * ms.mean() * ms.mean() * ms.sem() * ms.sem())
        .sqrt();
        let ks_prev = out.last().map(|prev: &CrossoverRung| {
            let mut a = prev.samples.clone();
            let mut b = samples.clone();
            ks_two_sample(&mut a, &mut b).statistic
        });
        out.push(CrossoverRung {
            entry,
            n_particles,
            mean: ms.mean(),
            mean_se: ms.sem(),
            var,
            var_se,
            var_target: target,
            ks_prev,
            samples,
        });
    }
    Ok(out)
}
