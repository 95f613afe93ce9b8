//! Sliced lazy-bridge path simulation for large horizons.
//!
//! The box volume grows like `t (2L)^d`, so materializing every environment
//! point times every path is wasteful: a path only interacts with points
//! within the tube radius of its trajectory. This kernel streams the
//! environment slice by slice, buckets points by their first coordinate, and
//! samples path positions at an event time only when the event could
//! plausibly be seen. The skeleton at slice boundaries plus conditional
//! bridge fills is an exact decomposition of the Brownian law.
//!
//! Pruning thresholds: an event is skipped without sampling when every
//! coordinate satisfies `|x_c - m_c| > rho + K sigma` for the conditional
//! law `N(m, sigma^2)`; the candidate scan window adds a drift allowance on
//! top. With `K = 10` and allowance `6 sigma_max` the miss probability per
//! event is below 1e-20 and the scan-window loss is below the documented
//! box-truncation bias.

use crate::geometry::TubeSpec;
use crate::numerics::log_mean_exp;
use crate::rng::{self, Stream};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

/// Geometry and pruning parameters for a sliced run.
#[derive(Clone, Debug)]
pub struct SlicedSim {
    pub d: usize,
    pub nu: f64,
    pub t: f64,
    pub box_halfwidth: f64,
    pub spec: TubeSpec,
    pub slice_len: f64,
    pub prune_sigmas: f64,
    pub drift_sigmas: f64,
}

impl SlicedSim {
    pub fn new(d: usize, nu: f64, t: f64, box_halfwidth: f64, spec: TubeSpec, slice_len: f64) -> Self {
        SlicedSim {
            d,
            nu,
            t,
            box_halfwidth,
            spec,
            slice_len,
            prune_sigmas: 10.0,
            drift_sigmas: 6.0,
        }
    }

    pub fn n_slices(&self) -> usize {
        (self.t / self.slice_len).ceil() as usize
    }

    fn slice_bounds(&self, j: usize) -> (f64, f64) {
        let t0 = j as f64 * self.slice_len;
        let t1 = (t0 + self.slice_len).min(self.t);
        (t0, t1)
    }

    /// Events of one time slice, bucketed by the first coordinate.
    fn gen_slice(&self, env_seed: u64, j: usize) -> SliceEvents {
        let (t0, t1) = self.slice_bounds(j);
        let mut r = rng::stream(env_seed, &[rng::tag::CELL, j as u64]);
        let vol = (t1 - t0) * (2.0 * self.box_halfwidth).powi(self.d as i32);
        let mean = self.nu * vol;
        let n = if mean > 0.0 {
            Poisson::new(mean).unwrap().sample(&mut r) as usize
        } else {
            0
        };
        let l = self.box_halfwidth;
        let n_cells = (2.0 * l).ceil().max(1.0) as usize;
        let mut raw: Vec<(usize, f64, [f64; 3])> = Vec::with_capacity(n);
        for _ in 0..n {
            let time = t1 - (t1 - t0) * r.gen::<f64>();
            let mut pos = [0.0; 3];
            for p in pos.iter_mut().take(self.d) {
                *p = l * (2.0 * r.gen::<f64>() - 1.0);
            }
            let cell = (((pos[0] + l) / (2.0 * l) * n_cells as f64) as usize).min(n_cells - 1);
            raw.push((cell, time, pos));
        }
        raw.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut start = vec![0usize; n_cells + 1];
        for e in &raw {
            start[e.0 + 1] += 1;
        }
        for k in 0..n_cells {
            start[k + 1] += start[k];
        }
        SliceEvents {
            times: raw.iter().map(|e| e.1).collect(),
            pos: raw.iter().map(|e| e.2).collect(),
            cell_start: start,
            n_cells,
            halfwidth: l,
        }
    }

    /// Advance one path across a slice, returning the number of events seen.
    /// `pos` enters holding the position at the slice start and leaves
    /// holding the position at the slice end.
    fn step_slice(
        &self,
        ev: &SliceEvents,
        t0: f64,
        t1: f64,
        pos: &mut [f64; 3],
        r: &mut Stream,
        scratch: &mut Vec<(f64, u32)>,
    ) -> u32 {
        let d = self.d;
        let dt = t1 - t0;
        let sd = dt.sqrt();
        let mut end = [0.0; 3];
        for c in 0..d {
            let g: f64 = r.sample(StandardNormal);
            end[c] = pos[c] + sd * g;
        }
        let rho = self.spec.rho;
        let sigma_max = 0.5 * sd;
        let window = rho + (self.prune_sigmas + self.drift_sigmas) * sigma_max;

        // Candidate scan over first-coordinate cells near the chord.
        scratch.clear();
        let lo = pos[0].min(end[0]) - window;
        let hi = pos[0].max(end[0]) + window;
        let l = ev.halfwidth;
        let scale = ev.n_cells as f64 / (2.0 * l);
        let c_lo = (((lo + l) * scale).floor().max(0.0)) as usize;
        let c_hi = ((((hi + l) * scale).floor()) as usize).min(ev.n_cells.saturating_sub(1));
        if ev.n_cells > 0 && c_lo <= c_hi && !ev.times.is_empty() {
            let inv_dt = 1.0 / dt;
            let loose = self.prune_sigmas + self.drift_sigmas;
            for idx in ev.cell_start[c_lo]..ev.cell_start[c_hi + 1] {
                let s = ev.times[idx];
                let frac = (s - t0) * inv_dt;
                let sig = ((s - t0) * (t1 - s) * inv_dt).sqrt();
                let m = loose * sig + rho;
                let x = &ev.pos[idx];
                let mut keep = true;
                for c in 0..d {
                    let chord = pos[c] + frac * (end[c] - pos[c]);
                    if (x[c] - chord).abs() > m {
                        keep = false;
                        break;
                    }
                }
                if keep {
                    scratch.push((s, idx as u32));
                }
            }
        }
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut hits = 0u32;
        let mut ta = t0;
        let mut xa = *pos;
        for &(s, idx) in scratch.iter() {
            let x = &ev.pos[idx as usize];
            let span = t1 - ta;
            let frac = (s - ta) / span;
            let var = (s - ta) * (t1 - s) / span;
            let sig = var.sqrt();
            let strict = rho + self.prune_sigmas * sig;
            let mut mean = [0.0; 3];
            let mut plausible = true;
            for c in 0..d {
                mean[c] = xa[c] + frac * (end[c] - xa[c]);
                if (x[c] - mean[c]).abs() > strict {
                    plausible = false;
                    break;
                }
            }
            if !plausible {
                continue;
            }
            let mut b = [0.0; 3];
            let mut dist2 = 0.0;
            for c in 0..d {
                let g: f64 = r.sample(StandardNormal);
                b[c] = mean[c] + sig * g;
                let dx = b[c] - x[c];
                dist2 += dx * dx;
            }
            if dist2 <= rho * rho {
                hits += 1;
            }
            ta = s;
            xa = b;
        }
        *pos = end;
        hits
    }

    /// Free paths: hit count at the horizon plus the terminal position.
    pub fn walk_free(&self, env_seed: u64, path_seed: u64, n_paths: usize) -> Vec<PathSummary> {
        let mut out = vec![
            PathSummary {
                hits: 0,
                end: [0.0; 3]
            };
            n_paths
        ];
        let mut pos = vec![[0.0f64; 3]; n_paths];
        let mut scratch = Vec::new();
        for j in 0..self.n_slices() {
            let (t0, t1) = self.slice_bounds(j);
            let ev = self.gen_slice(env_seed, j);
            for (p, o) in out.iter_mut().enumerate() {
                let mut r = rng::stream(path_seed, &[rng::tag::PATHS, p as u64, j as u64]);
                o.hits += self.step_slice(&ev, t0, t1, &mut pos[p], &mut r, &mut scratch);
            }
        }
        for (p, o) in out.iter_mut().enumerate() {
            o.end = pos[p];
        }
        out
    }

    /// Two independent particle-system estimates of the normalized partition
    /// function in the same environment. Particles are reweighted by
    /// `exp(beta hits - lambda nu r^d dt)` per slice and multinomially
    /// resampled when the effective sample size drops below half; the
    /// product-of-normalizers estimator stays unbiased.
    pub fn smc_normalized_pair(
        &self,
        beta: f64,
        env_seed: u64,
        path_seed: u64,
        n_particles: usize,
    ) -> [f64; 2] {
        let mut systems = [
            ParticleSystem::new(n_particles),
            ParticleSystem::new(n_particles),
        ];
        let lam = crate::geometry::lambda(beta);
        let rate = lam * self.nu * self.spec.slice_volume();
        let mut scratch = Vec::new();
        for j in 0..self.n_slices() {
            let (t0, t1) = self.slice_bounds(j);
            let ev = self.gen_slice(env_seed, j);
            for (sys_id, sys) in systems.iter_mut().enumerate() {
                for p in 0..n_particles {
                    let mut r = rng::stream(
                        path_seed,
                        &[rng::tag::PARTICLES, sys_id as u64, p as u64, j as u64],
                    );
                    let hits =
                        self.step_slice(&ev, t0, t1, &mut sys.pos[p], &mut r, &mut scratch);
                    sys.logw[p] += beta * hits as f64 - rate * (t1 - t0);
                }
                sys.maybe_resample(rng::stream(
                    path_seed,
                    &[rng::tag::RESAMPLE, sys_id as u64, j as u64],
                ));
            }
        }
        [systems[0].estimate(), systems[1].estimate()]
    }
}

/// One slice of environment points in CSR layout over first-coordinate cells.
struct SliceEvents {
    times: Vec<f64>,
    pos: Vec<[f64; 3]>,
    cell_start: Vec<usize>,
    n_cells: usize,
    halfwidth: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct PathSummary {
    pub hits: u32,
    pub end: [f64; 3],
}

struct ParticleSystem {
    pos: Vec<[f64; 3]>,
    logw: Vec<f64>,
    log_multiplier: f64,
}

impl ParticleSystem {
    fn new(n: usize) -> Self {
        ParticleSystem {
            pos: vec![[0.0; 3]; n],
            logw: vec![0.0; n],
            log_multiplier: 0.0,
        }
    }

    fn maybe_resample(&mut self, mut r: Stream) {
        let n = self.logw.len();
        let max = self.logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.logw.iter().map(|&x| (x - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        let sum2: f64 = w.iter().map(|x| x * x).sum();
        let ess = sum * sum / sum2;
        if ess >= 0.5 * n as f64 {
            return;
        }
        self.log_multiplier += max + (sum / n as f64).ln();
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &x in &w {
            acc += x;
            cum.push(acc);
        }
        let mut new_pos = Vec::with_capacity(n);
        for _ in 0..n {
            let u = r.gen::<f64>() * acc;
            let k = cum.partition_point(|&c| c < u).min(n - 1);
            new_pos.push(self.pos[k]);
        }
        self.pos = new_pos;
        self.logw.iter_mut().for_each(|x| *x = 0.0);
    }

    fn estimate(&self) -> f64 {
        (self.log_multiplier + log_mean_exp(&self.logw)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvConfig, Environment};
    use crate::numerics::Moments;
    use crate::paths::{count_hits, ensemble_grid, PathBundle};
    use rayon::prelude::*;

    fn sim(t: f64, nu: f64, r: f64) -> SlicedSim {
        let spec = TubeSpec::new(1, r).unwrap();
        SlicedSim::new(1, nu, t, 6.0 * t.sqrt() + r, spec, 1.0)
    }

    #[test]
    fn sliced_hit_rate_matches_tube_volume() {
        // Mean hits must equal nu t r^d, as for the dense sampler.
        let s = sim(4.0, 1.0, 1.0);
        let mut m = Moments::default();
        for rep in 0..300u64 {
            for p in s.walk_free(1000 + rep, 2000 + rep, 16) {
                m.push(p.hits as f64);
            }
        }
        assert!(
            (m.mean() - 4.0).abs() < 3.0 * m.sem(),
            "mean = {} sem = {}",
            m.mean(),
            m.sem()
        );
    }

    #[test]
    fn sliced_endpoint_is_brownian() {
        let s = sim(9.0, 0.25, 0.5);
        let mut m = Moments::default();
        for rep in 0..200u64 {
            for p in s.walk_free(10_000 + rep, 20_000 + rep, 8) {
                m.push(p.end[0]);
            }
        }
        let n = m.n() as f64;
        assert!(m.mean().abs() < 3.0 * (9.0 / n).sqrt());
        let var_se = (2.0 * 81.0 / (n - 1.0)).sqrt();
        assert!((m.var() - 9.0).abs() < 3.0 * var_se, "var = {}", m.var());
    }

    #[test]
    fn sliced_partition_agrees_with_dense_sampler() {
        // Compare E[Z_t] estimates from the sliced kernel and the dense
        // event-grid path sampler on the same model.
        let beta = 0.5;
        let (t, nu, r) = (2.0, 1.0, 1.0);
        let s = sim(t, nu, r);
        let reps = 2000u64;

        let fast: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let sums = s.walk_free(77_000 + rep, 88_000 + rep, 32);
                sums.iter().map(|p| (beta * p.hits as f64).exp()).sum::<f64>() / 32.0
            })
            .collect();

        let spec = TubeSpec::new(1, r).unwrap();
        let dense: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let cfg = EnvConfig::new(1, nu, t, 6.0 * t.sqrt() + r, 177_000 + rep).unwrap();
                let env = Environment::sample(&cfg).unwrap();
                let grid = ensemble_grid(&env, t, &[]);
                let mut ps = crate::rng::stream(188_000 + rep, &[crate::rng::tag::PATHS]);
                let b = PathBundle::sample_free(&grid, 32, 1, &mut ps).unwrap();
                let hits = count_hits(&b, &env, &spec).unwrap();
                (0..32)
                    .map(|p| (beta * hits.count_at(p, t) as f64).exp())
                    .sum::<f64>()
                    / 32.0
            })
            .collect();

        let mf = Moments::from_slice(&fast);
        let md = Moments::from_slice(&dense);
        let z = crate::stats::z_difference(mf.mean(), mf.sem(), md.mean(), md.sem());
        assert!(z.abs() < 3.0, "z = {z}, fast = {}, dense = {}", mf.mean(), md.mean());
    }

    #[test]
    fn smc_normalized_mean_is_one() {
        let beta = 0.5;
        let s = sim(4.0, 1.0, 1.0);
        let vals: Vec<[f64; 2]> = (0..1500u64)
            .into_par_iter()
            .map(|rep| s.smc_normalized_pair(beta, 500_000 + rep, 600_000 + rep, 64))
            .collect();
        let mut m = Moments::default();
        for v in &vals {
            m.push(0.5 * (v[0] + v[1]));
        }
        assert!(
            (m.mean() - 1.0).abs() < 3.0 * m.sem(),
            "mean = {} sem = {}",
            m.mean(),
            m.sem()
        );
    }
}
