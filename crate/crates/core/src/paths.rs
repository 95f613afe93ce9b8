//! Exact sampling of Brownian paths at finite time sets: free, bridge,
//! sheared, drifted and mirror-coupled, plus hit counting against an
//! environment.
//!
//! Paths are interrogated only at the sampled times, which always contain the
//! relevant event times, so downstream partition estimators carry no
//! time-discretization error.

use crate::environment::Environment;
use crate::geometry::TubeSpec;
use crate::rng::Stream;
use crate::{PolyError, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// How a bundle was generated.
#[derive(Clone, Debug, PartialEq)]
pub enum PathKind {
    Free,
    Bridge { t: f64, x: Vec<f64> },
    Drifted { h: Vec<f64> },
    Sheared { base: Box<PathKind> },
}

/// `n_paths` paths evaluated at a shared strictly increasing time grid that
/// starts at zero.
#[derive(Clone, Debug)]
pub struct PathBundle {
    times: Vec<f64>,
    /// Flat `n_paths x n_times x d` array.
    positions: Vec<f64>,
    pub n_paths: usize,
    pub d: usize,
    pub kind: PathKind,
    shear_log: Vec<ShearEntry>,
}

#[derive(Clone, Debug)]
struct ShearEntry {
    /// Per-time displacement, flat `n_times x d`.
    offsets: Vec<f64>,
    prior_positions: Vec<f64>,
    prior_kind: PathKind,
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(PolyError::grid("empty time grid"));
    }
    if times[0] != 0.0 {
        return Err(PolyError::grid("time grid must start at 0"));
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(PolyError::grid("time grid must be strictly increasing"));
        }
    }
    Ok(())
}

impl PathBundle {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    #[inline]
    pub fn position(&self, path: usize, time_idx: usize) -> &[f64] {
        let base = (path * self.times.len() + time_idx) * self.d;
        &self.positions[base..base + self.d]
    }

    /// Terminal position of one path.
    pub fn endpoint(&self, path: usize) -> &[f64] {
        self.position(path, self.times.len() - 1)
    }

    #[cfg(test)]
    pub(crate) fn set_position(&mut self, path: usize, time_idx: usize, coords: &[f64]) {
        let base = (path * self.times.len() + time_idx) * self.d;
        self.positions[base..base + self.d].copy_from_slice(coords);
    }

    /// Independent Gaussian increments per coordinate, variance equal to the
    /// time gap: the exact free law at the grid.
    pub fn sample_free(times: &[f64], n_paths: usize, d: usize, stream: &mut Stream) -> Result<Self> {
        validate_times(times)?;
        if !(1..=3).contains(&d) {
            return Err(PolyError::config(format!("unsupported dimension {d}")));
        }
        let m = times.len();
        let mut positions = vec![0.0; n_paths * m * d];
        for p in 0..n_paths {
            for k in 1..m {
                let sd = (times[k] - times[k - 1]).sqrt();
                let prev = (p * m + k - 1) * d;
                let cur = (p * m + k) * d;
                for c in 0..d {
                    let g: f64 = stream.sample(StandardNormal);
                    positions[cur + c] = positions[prev + c] + sd * g;
                }
            }
        }
        Ok(PathBundle {
            times: times.to_vec(),
            positions,
            n_paths,
            d,
            kind: PathKind::Free,
            shear_log: Vec::new(),
        })
    }

    /// Exact Brownian bridge from the origin to `x` at time `t`; the final
    /// grid time must equal `t` and the endpoint is pinned bit-exactly.
    pub fn sample_bridge(
        times: &[f64],
        t: f64,
        x: &[f64],
        n_paths: usize,
        stream: &mut Stream,
    ) -> Result<Self> {
        validate_times(times)?;
        let d = x.len();
        if !(1..=3).contains(&d) {
            return Err(PolyError::config(format!("unsupported dimension {d}")));
        }
        if *times.last().unwrap() != t {
            return Err(PolyError::grid("bridge horizon must be the last grid time"));
        }
        let m = times.len();
        let mut positions = vec![0.0; n_paths * m * d];
        for p in 0..n_paths {
            for k in 1..m {
                let cur = (p * m + k) * d;
                if k == m - 1 {
                    positions[cur..cur + d].copy_from_slice(x);
                    continue;
                }
                let prev = (p * m + k - 1) * d;
                let dt = times[k] - times[k - 1];
                let rem_prev = t - times[k - 1];
                let rem = t - times[k];
                let var = dt * rem / rem_prev;
                let sd = var.sqrt();
                for c in 0..d {
                    let y = positions[prev + c];
                    let mean = y + dt / rem_prev * (x[c] - y);
                    let g: f64 = stream.sample(StandardNormal);
                    positions[cur + c] = mean + sd * g;
                }
            }
        }
        Ok(PathBundle {
            times: times.to_vec(),
            positions,
            n_paths,
            d,
            kind: PathKind::Bridge { t, x: x.to_vec() },
            shear_log: Vec::new(),
        })
    }

    /// Add a time-dependent displacement `phi(s)` (with `phi(0) = 0`) to
    /// every path. Shearing back by the exact negation restores the previous
    /// positions bit-for-bit.
    pub fn shear(&self, phi: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let d = self.d;
        let mut offsets = vec![0.0; self.times.len() * d];
        for (k, &s) in self.times.iter().enumerate() {
            let v = phi(s);
            if v.len() != d {
                return Err(PolyError::config("shear displacement has wrong dimension"));
            }
            offsets[k * d..(k + 1) * d].copy_from_slice(&v);
        }
        if offsets[..d].iter().any(|&v| v != 0.0) {
            return Err(PolyError::config("shear displacement must vanish at time 0"));
        }

        if let Some(last) = self.shear_log.last() {
            if last
                .offsets
                .iter()
                .zip(&offsets)
                .all(|(a, b)| *a == -*b)
            {
                let mut out = self.clone();
                let entry = out.shear_log.pop().unwrap();
                out.positions = entry.prior_positions;
                out.kind = entry.prior_kind;
                return Ok(out);
            }
        }

        let mut out = self.clone();
        out.shear_log.push(ShearEntry {
            offsets: offsets.clone(),
            prior_positions: self.positions.clone(),
            prior_kind: self.kind.clone(),
        });
        let m = self.times.len();
        for p in 0..self.n_paths {
            for k in 0..m {
                let base = (p * m + k) * d;
                for c in 0..d {
                    out.positions[base + c] += offsets[k * d + c];
                }
            }
        }
        out.kind = PathKind::Sheared {
            base: Box::new(self.kind.clone()),
        };
        Ok(out)
    }

    /// Linear shear `s -> s h`, i.e. a constant drift `h`.
    pub fn shear_linear(&self, h: &[f64]) -> Result<Self> {
        let h = h.to_vec();
        self.shear(move |s| h.iter().map(|v| s * v).collect())
    }
}

/// Two coupled bundles: a base from the origin and its reflection from `x`
/// across the hyperplane bisecting `[0, x]`, coalescing at the first sampled
/// crossing.
#[derive(Clone, Debug)]
pub struct MirrorCoupling {
    pub base: PathBundle,
    pub reflected: PathBundle,
    /// Sampled-time meeting index per path, if the crossing was detected.
    pub meeting_index: Vec<Option<usize>>,
    pub meeting_times: Vec<Option<f64>>,
}

/// Mirror coupling of Brownian motions from `0` and from `x`. Detection is
/// at sampled-time resolution: crossings between grid points are missed, so
/// detected meeting times are stochastically late; compare grids to bound
/// the bias.
pub fn mirror_couple(
    times: &[f64],
    x: &[f64],
    n_paths: usize,
    stream: &mut Stream,
) -> Result<MirrorCoupling> {
    let d = x.len();
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(PolyError::config("mirror coupling needs a non-zero offset"));
    }
    let base = PathBundle::sample_free(times, n_paths, d, stream)?;
    let unit: Vec<f64> = x.iter().map(|v| v / norm).collect();
    let level = 0.5 * norm;

    let m = times.len();
    let mut reflected = base.clone();
    reflected.kind = PathKind::Free;
    let mut meeting_index = vec![None; n_paths];
    let mut meeting_times = vec![None; n_paths];
    for p in 0..n_paths {
        let mut met_at: Option<usize> = None;
        for k in 0..m {
            let b = base.position(p, k);
            let proj: f64 = b.iter().zip(&unit).map(|(a, u)| a * u).sum();
            if met_at.is_none() && proj >= level {
                met_at = Some(k);
                meeting_index[p] = Some(k);
                meeting_times[p] = Some(times[k]);
            }
            let out = (p * m + k) * d;
            if met_at.is_some() {
                reflected.positions[out..out + d].copy_from_slice(b);
            } else {
                for c in 0..d {
                    reflected.positions[out + c] = b[c] + 2.0 * (level - proj) * unit[c];
                }
            }
        }
    }
    Ok(MirrorCoupling {
        base,
        reflected,
        meeting_index,
        meeting_times,
    })
}

/// Analytic survival function of the mirror meeting time:
/// `P(tau >= z)` for starting separation `sep`.
pub fn mirror_survival(sep: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    2.0 * crate::stats::phi(sep / (2.0 * z.sqrt())) - 1.0
}

/// Per-path hit data against one environment.
#[derive(Clone, Debug)]
pub struct HitProcess {
    /// For each path, indices into `env.events()` of the seen events, in
    /// time order.
    pub seen: Vec<Vec<u32>>,
    /// Event times in the same order as the environment.
    pub event_times: Vec<f64>,
}

impl HitProcess {
    /// Cumulative number of seen events up to and including time `t`.
    pub fn count_at(&self, path: usize, t: f64) -> u32 {
        let list = &self.seen[path];
        list.partition_point(|&idx| self.event_times[idx as usize] <= t) as u32
    }

    /// Times at which the path's running count jumps.
    pub fn jump_times(&self, path: usize) -> Vec<f64> {
        self.seen[path]
            .iter()
            .map(|&i| self.event_times[i as usize])
            .collect()
    }
}

/// Count, for each path, the environment points it sees. Every event time up
/// to the bundle horizon must be present in the bundle grid.
pub fn count_hits(bundle: &PathBundle, env: &Environment, spec: &TubeSpec) -> Result<HitProcess> {
    if spec.d != bundle.d || spec.d != env.config().d {
        return Err(PolyError::config("dimension mismatch in hit counting"));
    }
    let horizon = bundle.horizon();
    let events = env.events_up_to(horizon);
    // Map each event to its grid index once.
    let mut grid_idx = Vec::with_capacity(events.len());
    for e in events {
        match bundle.times.binary_search_by(|s| s.total_cmp(&e.time)) {
            Ok(i) => grid_idx.push(i),
            Err(_) => {
                return Err(PolyError::grid(format!(
                    "event time {} missing from the bundle grid",
                    e.time
                )))
            }
        }
    }
    let mut seen = vec![Vec::new(); bundle.n_paths];
    for (p, seen_p) in seen.iter_mut().enumerate() {
        for (idx, e) in events.iter().enumerate() {
            if spec.sees(bundle.position(p, grid_idx[idx]), e.coords(spec.d)) {
                seen_p.push(idx as u32);
            }
        }
    }
    Ok(HitProcess {
        seen,
        event_times: events.iter().map(|e| e.time).collect(),
    })
}

/// Time grid for an ensemble: event times of `env` up to `t` merged with
/// `extra` observation times and the endpoints `0`, `t`.
pub fn ensemble_grid(env: &Environment, t: f64, extra: &[f64]) -> Vec<f64> {
    let mut obs: Vec<f64> = extra
        .iter()
        .copied()
        .filter(|&s| s >= 0.0 && s <= t)
        .collect();
    obs.push(0.0);
    obs.push(t);
    obs.sort_by(f64::total_cmp);
    obs.dedup();
    let ev: Vec<f64> = env.events_up_to(t).iter().map(|e| e.time).collect();
    crate::numerics::merge_sorted(&obs, &ev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{linspace, Moments};
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_time_zero_is_origin() {
        let mut s = rng::stream(1, &[1]);
        let b = PathBundle::sample_free(&[0.0], 8, 2, &mut s).unwrap();
        for p in 0..8 {
            assert_eq!(b.position(p, 0), &[0.0, 0.0]);
        }
    }

    #[test]
    fn free_marginal_variance_matches_t() {
        let mut s = rng::stream(2, &[1]);
        let t = 1.7;
        let b = PathBundle::sample_free(&linspace(0.0, t, 4), 100_000, 1, &mut s).unwrap();
        let mut m = Moments::default();
        for p in 0..b.n_paths {
            m.push(b.endpoint(p)[0]);
        }
        // Variance of the sample variance of a Gaussian: 2 sigma^4 / (n - 1).
        let var_se = (2.0 * t * t / (b.n_paths as f64 - 1.0)).sqrt();
        assert!((m.var() - t).abs() < 3.0 * var_se);
        assert!(m.mean().abs() < 3.0 * (t / b.n_paths as f64).sqrt());
    }

    #[test]
    fn disjoint_increments_uncorrelated() {
        let mut s = rng::stream(3, &[1]);
        let b = PathBundle::sample_free(&[0.0, 0.5, 1.0, 1.5], 50_000, 1, &mut s).unwrap();
        let mut num = 0.0;
        let (mut va, mut vb) = (0.0, 0.0);
        for p in 0..b.n_paths {
            let d1 = b.position(p, 1)[0] - b.position(p, 0)[0];
            let d2 = b.position(p, 3)[0] - b.position(p, 2)[0];
            num += d1 * d2;
            va += d1 * d1;
            vb += d2 * d2;
        }
        let corr = num / (va.sqrt() * vb.sqrt());
        assert!(corr.abs() < 3.0 / (b.n_paths as f64).sqrt());
    }

    #[test]
    fn bridge_endpoint_exact_and_moments_match() {
        let mut s = rng::stream(4, &[1]);
        let (t, x) = (2.0, [1.25]);
        let times = linspace(0.0, t, 8);
        let b = PathBundle::sample_bridge(&times, t, &x, 40_000, &mut s).unwrap();
        let mut mid = Moments::default();
        let k = 4; // times[4] = 1.0
        for p in 0..b.n_paths {
            assert_eq!(b.endpoint(p)[0], x[0]);
            mid.push(b.position(p, k)[0]);
        }
        let sm = times[k];
        let mean = sm / t * x[0];
        let var = sm * (t - sm) / t;
        assert!((mid.mean() - mean).abs() < 3.0 * mid.sem());
        let var_se = (2.0 * var * var / (b.n_paths as f64 - 1.0)).sqrt();
        assert!((mid.var() - var).abs() < 3.0 * var_se);
    }

    #[test]
    fn bridge_requires_final_time() {
        let mut s = rng::stream(4, &[2]);
        assert!(PathBundle::sample_bridge(&[0.0, 0.5], 2.0, &[0.0], 4, &mut s).is_err());
    }

    #[test]
    fn shear_round_trip_bit_exact() {
        let mut s = rng::stream(5, &[1]);
        let b = PathBundle::sample_free(&linspace(0.0, 1.0, 16), 32, 2, &mut s).unwrap();
        let sheared = b.shear_linear(&[0.3, -0.7]).unwrap();
        let back = sheared.shear_linear(&[-0.3, 0.7]).unwrap();
        assert_eq!(back.positions, b.positions);
        assert_eq!(back.kind, b.kind);

        let same = b.shear(|_| vec![0.0, 0.0]).unwrap();
        // Zero shear leaves every position numerically unchanged.
        assert_eq!(same.positions, b.positions);
    }

    #[test]
    fn linear_shear_moves_terminal_mean() {
        let mut s = rng::stream(6, &[1]);
        let t = 2.0;
        let b = PathBundle::sample_free(&linspace(0.0, t, 4), 50_000, 1, &mut s).unwrap();
        let sheared = b.shear_linear(&[0.8]).unwrap();
        let mut m = Moments::default();
        for p in 0..b.n_paths {
            m.push(sheared.endpoint(p)[0]);
        }
        assert!((m.mean() - 0.8 * t).abs() < 3.0 * m.sem());
    }

    #[test]
    fn mirror_reflection_geometry_1d() {
        let mut s = rng::stream(7, &[1]);
        let mc = mirror_couple(&linspace(0.0, 4.0, 64), &[2.0], 200, &mut s).unwrap();
        for p in 0..200 {
            let met = mc.meeting_index[p];
            for k in 0..mc.base.n_times() {
                let b = mc.base.position(p, k)[0];
                let r = mc.reflected.position(p, k)[0];
                match met {
                    Some(j) if k >= j => assert_eq!(b, r),
                    _ => assert_abs_diff_eq!(r, 2.0 - b, epsilon = 1e-12),
                }
            }
            assert_eq!(mc.reflected.position(p, 0)[0], 2.0);
        }
    }

    #[test]
    fn mirror_rejects_zero_offset() {
        let mut s = rng::stream(7, &[2]);
        assert!(mirror_couple(&[0.0, 1.0], &[0.0], 4, &mut s).is_err());
    }

    #[test]
    fn count_hits_basics() {
        use crate::environment::{EnvConfig, Environment, Event};
        let cfg = EnvConfig::new(1, 1.0, 2.0, 4.0, 0).unwrap();
        let spec = TubeSpec::new(1, 1.0).unwrap();

        let empty = Environment::from_events(cfg, vec![]);
        let mut s = rng::stream(8, &[1]);
        let grid = ensemble_grid(&empty, 2.0, &linspace(0.0, 2.0, 4));
        let b = PathBundle::sample_free(&grid, 16, 1, &mut s).unwrap();
        let hits = count_hits(&b, &empty, &spec).unwrap();
        assert!(hits.seen.iter().all(|v| v.is_empty()));

        // One event exactly on a path position.
        let env = Environment::from_events(cfg, vec![Event::new(1.0, &[0.0])]);
        let grid = ensemble_grid(&env, 2.0, &linspace(0.0, 2.0, 4));
        let mut zero = PathBundle::sample_free(&grid, 1, 1, &mut s).unwrap();
        for v in zero.positions.iter_mut() {
            *v = 0.0;
        }
        let hits = count_hits(&zero, &env, &spec).unwrap();
        assert_eq!(hits.count_at(0, 0.5), 0);
        assert_eq!(hits.count_at(0, 1.0), 1);
        assert_eq!(hits.count_at(0, 2.0), 1);
    }

    #[test]
    fn count_hits_requires_event_times_on_grid() {
        use crate::environment::{EnvConfig, Environment, Event};
        let cfg = EnvConfig::new(1, 1.0, 2.0, 4.0, 0).unwrap();
        let env = Environment::from_events(cfg, vec![Event::new(0.777, &[0.0])]);
        let spec = TubeSpec::new(1, 1.0).unwrap();
        let mut s = rng::stream(9, &[1]);
        let b = PathBundle::sample_free(&[0.0, 1.0, 2.0], 2, 1, &mut s).unwrap();
        assert!(count_hits(&b, &env, &spec).is_err());
    }

    #[test]
    fn mean_hits_matches_tube_volume_rate() {
        use crate::environment::{EnvConfig, Environment};
        // d=1, nu=1, r=1, t=2: the number of seen points is Poisson with
        // mean nu t r^d = 2.
        let spec = TubeSpec::new(1, 1.0).unwrap();
        let t = 2.0;
        let mut m = Moments::default();
        for rep in 0..400u64 {
            let cfg = EnvConfig::new(1, 1.0, t, 6.0 * t.sqrt() + 1.0, 500 + rep).unwrap();
            let env = Environment::sample(&cfg).unwrap();
            let grid = ensemble_grid(&env, t, &[]);
            let mut s = rng::stream(1234, &[rng::tag::PATHS, rep]);
            let b = PathBundle::sample_free(&grid, 8, 1, &mut s).unwrap();
            let hits = count_hits(&b, &env, &spec).unwrap();
            for p in 0..b.n_paths {
                m.push(hits.count_at(p, t) as f64);
            }
        }
        assert!((m.mean() - 2.0).abs() < 3.0 * m.sem(), "mean = {}", m.mean());
    }
}
