//! Space-time Poisson point clouds on a truncated box, their transforms, and
//! the point-process identities used by the verification battery.
//!
//! Environments are immutable after construction. Transforms return new
//! values and record provenance; applying the exact inverse of the last
//! logged transform restores the recorded pre-image coordinates bit-for-bit
//! (floating-point addition is not invertible, so the pre-image is kept).

use crate::numerics::gauss_legendre;
use crate::rng::{self, Stream};
use crate::{Estimate, Method, PolyError, Result};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// One space-time point. Unused coordinates beyond the dimension stay zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub pos: [f64; 3],
}

impl Event {
    pub fn new(time: f64, pos: &[f64]) -> Self {
        let mut p = [0.0; 3];
        p[..pos.len()].copy_from_slice(pos);
        Event { time, pos: p }
    }

    pub fn coords(&self, d: usize) -> &[f64] {
        &self.pos[..d]
    }
}

/// Order by time, ties by lexicographic position so sorting stays
/// deterministic under serialization round trips.
fn event_cmp(a: &Event, b: &Event) -> std::cmp::Ordering {
    a.time
        .total_cmp(&b.time)
        .then_with(|| a.pos[0].total_cmp(&b.pos[0]))
        .then_with(|| a.pos[1].total_cmp(&b.pos[1]))
        .then_with(|| a.pos[2].total_cmp(&b.pos[2]))
}

/// Parameters of a truncated homogeneous Poisson cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub d: usize,
    pub nu: f64,
    pub t: f64,
    pub box_halfwidth: f64,
    pub seed: u64,
}

impl EnvConfig {
    pub fn new(d: usize, nu: f64, t: f64, box_halfwidth: f64, seed: u64) -> Result<Self> {
        let cfg = EnvConfig {
            d,
            nu,
            t,
            box_halfwidth,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(PolyError::config(format!("unsupported dimension {}", self.d)));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(PolyError::config("intensity nu must be positive"));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(PolyError::config("horizon t must be positive"));
        }
        if !(self.box_halfwidth > 0.0) || !self.box_halfwidth.is_finite() {
            return Err(PolyError::config("box halfwidth must be positive"));
        }
        Ok(())
    }

    /// Space-time volume of the sampling window.
    pub fn volume(&self) -> f64 {
        self.t * (2.0 * self.box_halfwidth).powi(self.d as i32)
    }

    /// Expected number of events.
    pub fn mean_count(&self) -> f64 {
        self.nu * self.volume()
    }
}

#[derive(Clone, Debug)]
enum TransformOp {
    Shift { t0: f64, x0: [f64; 3] },
    Shear { offsets: Vec<[f64; 3]> },
    Reverse { t: f64, x: [f64; 3] },
    Superpose,
}

#[derive(Clone, Debug)]
struct LogEntry {
    op: TransformOp,
    /// Pre-images of the events that survived the transform, in output order.
    prior: Vec<Event>,
    label: String,
}

/// A realization of the medium: sorted events plus provenance.
#[derive(Clone, Debug)]
pub struct Environment {
    events: Vec<Event>,
    config: EnvConfig,
    log: Vec<LogEntry>,
}

impl Environment {
    /// Sample a fresh homogeneous cloud. Deterministic in the config seed.
    pub fn sample(cfg: &EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(cfg.seed, &[rng::tag::ENV]);
        Ok(Self::sample_into(cfg, &mut r))
    }

    /// Sample from an explicit stream (replica loops derive disjoint streams).
    pub fn sample_with(cfg: &EnvConfig, stream: &mut Stream) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::sample_into(cfg, stream))
    }

    fn sample_into(cfg: &EnvConfig, r: &mut Stream) -> Self {
        let mean = cfg.mean_count();
        let n = if mean > 0.0 {
            Poisson::new(mean).expect("validated mean").sample(r) as usize
        } else {
            0
        };
        let mut events = Vec::with_capacity(n);
        for _ in 0..n {
            // (0, t] in time, [-L, L]^d in space.
            let time = cfg.t * (1.0 - r.gen::<f64>());
            let mut pos = [0.0; 3];
            for p in pos.iter_mut().take(cfg.d) {
                *p = cfg.box_halfwidth * (2.0 * r.gen::<f64>() - 1.0);
            }
            events.push(Event { time, pos });
        }
        events.sort_by(event_cmp);
        Environment {
            events,
            config: *cfg,
            log: Vec::new(),
        }
    }

    /// Build directly from events (used by deserialization and tests).
    pub fn from_events(cfg: EnvConfig, mut events: Vec<Event>) -> Self {
        events.sort_by(event_cmp);
        Environment {
            events,
            config: cfg,
            log: Vec::new(),
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Labels of the transforms applied so far.
    pub fn transform_log(&self) -> Vec<&str> {
        self.log.iter().map(|e| e.label.as_str()).collect()
    }

    /// Events with time at most `t`.
    pub fn events_up_to(&self, t: f64) -> &[Event] {
        let cut = self.events.partition_point(|e| e.time <= t);
        &self.events[..cut]
    }

    /// Number of events in `(t0, t1]` whose position lies in the box.
    pub fn count_window(&self, t0: f64, t1: f64) -> usize {
        self.events
            .iter()
            .filter(|e| e.time > t0 && e.time <= t1)
            .count()
    }

    fn undo_last(&self, expect: impl Fn(&TransformOp) -> bool) -> Option<Environment> {
        let last = self.log.last()?;
        if expect(&last.op) {
            let mut out = self.clone();
            let entry = out.log.pop().expect("checked non-empty");
            out.events = entry.prior;
            out.events.sort_by(event_cmp);
            Some(out)
        } else {
            None
        }
    }

    /// Space-time shift: `(s, x) -> (s - t0, x - x0)`, dropping events with
    /// non-positive new time. Shifting back by the exact negation restores
    /// the surviving events bit-for-bit.
    pub fn shift(&self, t0: f64, x0: &[f64]) -> Environment {
        let d = self.config.d;
        assert_eq!(x0.len(), d);
        let mut x0p = [0.0; 3];
        x0p[..d].copy_from_slice(x0);

        if let Some(prev) = self.undo_last(|op| {
            matches!(op, TransformOp::Shift { t0: pt, x0: px }
                if *pt == -t0 && px[..d].iter().zip(x0).all(|(a, b)| *a == -*b))
        }) {
            return prev;
        }

        let mut events = Vec::with_capacity(self.events.len());
        let mut prior = Vec::with_capacity(self.events.len());
        for e in &self.events {
            let nt = e.time - t0;
            if nt <= 0.0 {
                continue;
            }
            let mut pos = [0.0; 3];
            for k in 0..d {
                pos[k] = e.pos[k] - x0p[k];
            }
            events.push(Event { time: nt, pos });
            prior.push(*e);
        }
        let mut out = self.clone();
        out.events = events;
        out.events.sort_by(event_cmp);
        out.log.push(LogEntry {
            op: TransformOp::Shift { t0, x0: x0p },
            prior,
            label: format!("shift(t0={t0}, x0={:?})", &x0p[..d]),
        });
        out
    }

    /// Shear by a time-dependent displacement: `(s, x) -> (s, x + phi(s))`.
    /// `phi(0)` must vanish for path couplings; this is not enforced here
    /// because events never sit at time zero.
    pub fn shear(&self, phi: impl Fn(f64) -> Vec<f64>) -> Environment {
        let d = self.config.d;
        let offsets: Vec<[f64; 3]> = self
            .events
            .iter()
            .map(|e| {
                let v = phi(e.time);
                assert_eq!(v.len(), d);
                let mut o = [0.0; 3];
                o[..d].copy_from_slice(&v);
                o
            })
            .collect();

        if let Some(prev) = self.undo_last(|op| {
            matches!(op, TransformOp::Shear { offsets: po }
                if po.len() == offsets.len()
                    && po.iter().zip(&offsets).all(|(a, b)| {
                        a[..d].iter().zip(&b[..d]).all(|(x, y)| *x == -*y)
                    }))
        }) {
            return prev;
        }

        let prior = self.events.clone();
        let mut events = self.events.clone();
        for (e, o) in events.iter_mut().zip(&offsets) {
            for k in 0..d {
                e.pos[k] += o[k];
            }
        }
        let mut out = self.clone();
        out.events = events;
        out.events.sort_by(event_cmp);
        out.log.push(LogEntry {
            op: TransformOp::Shear { offsets },
            prior,
            label: "shear".to_string(),
        });
        out
    }

    /// Linear shear `(s, x) -> (s, x + s xi)`.
    pub fn shear_linear(&self, xi: &[f64]) -> Environment {
        let xi = xi.to_vec();
        self.shear(move |s| xi.iter().map(|v| s * v).collect())
    }

    /// Time-space reversal at `(t, x)`: `(s, y) -> (t - s, y - x)`, keeping
    /// events that land in `(0, t]`. Applying the same reversal twice
    /// restores the kept window bit-for-bit.
    pub fn reverse(&self, t: f64, x: &[f64]) -> Environment {
        let d = self.config.d;
        assert_eq!(x.len(), d);
        let mut xp = [0.0; 3];
        xp[..d].copy_from_slice(x);

        if let Some(prev) = self.undo_last(|op| {
            matches!(op, TransformOp::Reverse { t: pt, x: px }
                if *pt == t && px[..d] == xp[..d])
        }) {
            return prev;
        }

        let mut pairs: Vec<(Event, Event)> = Vec::with_capacity(self.events.len());
        for e in &self.events {
            let nt = t - e.time;
            if nt <= 0.0 || nt > t {
                continue;
            }
            let mut pos = [0.0; 3];
            for k in 0..d {
                pos[k] = e.pos[k] - xp[k];
            }
            pairs.push((Event { time: nt, pos }, *e));
        }
        pairs.sort_by(|a, b| event_cmp(&a.0, &b.0));
        let mut out = self.clone();
        out.events = pairs.iter().map(|p| p.0).collect();
        out.log.push(LogEntry {
            op: TransformOp::Reverse { t, x: xp },
            prior: pairs.into_iter().map(|p| p.1).collect(),
            label: format!("reverse(t={t}, x={:?})", &xp[..d]),
        });
        out
    }

    /// Superposition of two independent clouds on the same geometry; the
    /// intensity field becomes the sum.
    pub fn superpose(&self, other: &Environment) -> Result<Environment> {
        let (a, b) = (&self.config, &other.config);
        if a.d != b.d || a.t != b.t || a.box_halfwidth != b.box_halfwidth {
            return Err(PolyError::config(
                "superpose requires matching dimension, horizon and box",
            ));
        }
        let mut events = self.events.clone();
        events.extend_from_slice(&other.events);
        events.sort_by(event_cmp);
        let mut cfg = *a;
        cfg.nu = a.nu + b.nu;
        let mut out = Environment {
            events,
            config: cfg,
            log: self.log.clone(),
        };
        out.log.push(LogEntry {
            op: TransformOp::Superpose,
            prior: self.events.clone(),
            label: format!("superpose(nu={} + {})", a.nu, b.nu),
        });
        Ok(out)
    }

    /// Copy with one extra point inserted (the Mecke added point).
    pub fn adjoin(&self, time: f64, pos: &[f64]) -> Environment {
        let mut out = self.clone();
        let e = Event::new(time, pos);
        let idx = out.events.partition_point(|x| event_cmp(x, &e).is_lt());
        out.events.insert(idx, e);
        out
    }

    /// Line-oriented text form; round-trips bit-exactly.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = format!(
            "# d={} nu={:.16e} t={:.16e} L={:.16e} seed={}\n",
            c.d, c.nu, c.t, c.box_halfwidth, c.seed
        );
        for e in &self.events {
            s.push_str(&format!("{:.16e}", e.time));
            for k in 0..c.d {
                s.push_str(&format!(" {:.16e}", e.pos[k]));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| PolyError::config("empty environment text"))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| PolyError::config("missing header line"))?;
        let mut d = None;
        let mut nu = None;
        let mut t = None;
        let mut l = None;
        let mut seed = None;
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| PolyError::config(format!("bad header token {tok}")))?;
            match k {
                "d" => d = Some(v.parse::<usize>().map_err(|e| PolyError::config(e.to_string()))?),
                "nu" => nu = Some(v.parse::<f64>().map_err(|e| PolyError::config(e.to_string()))?),
                "t" => t = Some(v.parse::<f64>().map_err(|e| PolyError::config(e.to_string()))?),
                "L" => l = Some(v.parse::<f64>().map_err(|e| PolyError::config(e.to_string()))?),
                "seed" => {
                    seed = Some(v.parse::<u64>().map_err(|e| PolyError::config(e.to_string()))?)
                }
                _ => return Err(PolyError::config(format!("unknown header key {k}"))),
            }
        }
        let cfg = EnvConfig::new(
            d.ok_or_else(|| PolyError::config("header missing d"))?,
            nu.ok_or_else(|| PolyError::config("header missing nu"))?,
            t.ok_or_else(|| PolyError::config("header missing t"))?,
            l.ok_or_else(|| PolyError::config("header missing L"))?,
            seed.ok_or_else(|| PolyError::config("header missing seed"))?,
        )?;
        let mut events = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let time: f64 = it
                .next()
                .ok_or_else(|| PolyError::config("empty event row"))?
                .parse()
                .map_err(|e: std::num::ParseFloatError| PolyError::config(e.to_string()))?;
            let mut pos = [0.0; 3];
            for p in pos.iter_mut().take(cfg.d) {
                *p = it
                    .next()
                    .ok_or_else(|| PolyError::config("event row missing coordinate"))?
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| PolyError::config(e.to_string()))?;
            }
            events.push(Event { time, pos });
        }
        Ok(Environment::from_events(cfg, events))
    }
}

/// A bounded field `f(s, x)` with its supremum, for tilted sampling.
pub struct BoundedField<'a> {
    pub f: Box<dyn Fn(f64, &[f64]) -> f64 + Sync + 'a>,
    pub sup: f64,
}

impl<'a> BoundedField<'a> {
    pub fn new(f: impl Fn(f64, &[f64]) -> f64 + Sync + 'a, sup: f64) -> Result<Self> {
        if !sup.is_finite() {
            return Err(PolyError::config("tilt field must have a finite supremum"));
        }
        Ok(BoundedField { f: Box::new(f), sup })
    }
}

/// Outcome of thinned sampling from a dominating cloud.
pub struct TiltedSample {
    pub env: Environment,
    pub proposed: usize,
    pub accepted: usize,
}

impl TiltedSample {
    pub fn rejection_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            1.0 - self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Sample a cloud with intensity `e^{f(s,x)} nu` by thinning a dominating
/// cloud of intensity `e^{sup f} nu`.
pub fn tilted_sample(cfg: &EnvConfig, field: &BoundedField, stream: &mut Stream) -> Result<TiltedSample> {
    cfg.validate()?;
    let mut dom_cfg = *cfg;
    dom_cfg.nu = cfg.nu * field.sup.exp();
    let dominating = Environment::sample_with(&dom_cfg, stream)?;
    let proposed = dominating.len();
    let mut thin = rng::stream(cfg.seed, &[rng::tag::THINNING]);
    let mut events = Vec::new();
    for e in dominating.events() {
        let val = (field.f)(e.time, e.coords(cfg.d));
        if val > field.sup + 1e-12 {
            return Err(PolyError::config(
                "tilt field exceeds its declared supremum",
            ));
        }
        if thin.gen::<f64>() < (val - field.sup).exp() {
            events.push(*e);
        }
    }
    let accepted = events.len();
    // The realized intensity is e^f nu; record the base rate in the config.
    Ok(TiltedSample {
        env: Environment::from_events(*cfg, events),
        proposed,
        accepted,
    })
}

/// Girsanov reweighting density of `env` relative to the base cloud:
/// `exp(sum_p f(p) - integral (e^f - 1) nu ds dx)`, with the compensator
/// integral evaluated by tensor Gauss–Legendre quadrature.
pub fn tilt_density(env: &Environment, field: &BoundedField, nodes: usize) -> f64 {
    let cfg = env.config();
    let sum_f: f64 = env
        .events()
        .iter()
        .map(|e| (field.f)(e.time, e.coords(cfg.d)))
        .sum();
    let comp = integrate_box(cfg, nodes, |s, x| ((field.f)(s, x)).exp_m1()) * cfg.nu;
    (sum_f - comp).exp()
}

/// Tensor-product Gauss–Legendre integral of `g(s, x)` over `(0, t] x box`.
pub fn integrate_box(cfg: &EnvConfig, nodes: usize, g: impl Fn(f64, &[f64]) -> f64) -> f64 {
    let (xs, ws) = gauss_legendre(nodes);
    let l = cfg.box_halfwidth;
    let map_t = |u: f64| 0.5 * cfg.t * (u + 1.0);
    let map_x = |u: f64| l * u;
    let mut total = 0.0;
    match cfg.d {
        1 => {
            for (i, &u) in xs.iter().enumerate() {
                for (j, &v) in xs.iter().enumerate() {
                    total += ws[i] * ws[j] * g(map_t(u), &[map_x(v)]);
                }
            }
            total * (0.5 * cfg.t) * l
        }
        2 => {
            for (i, &u) in xs.iter().enumerate() {
                for (j, &v) in xs.iter().enumerate() {
                    for (k, &w) in xs.iter().enumerate() {
                        total += ws[i] * ws[j] * ws[k] * g(map_t(u), &[map_x(v), map_x(w)]);
                    }
                }
            }
            total * (0.5 * cfg.t) * l * l
        }
        3 => {
            for (i, &u) in xs.iter().enumerate() {
                for (j, &v) in xs.iter().enumerate() {
                    for (k, &w) in xs.iter().enumerate() {
                        for (m, &y) in xs.iter().enumerate() {
                            total += ws[i] * ws[j] * ws[k] * ws[m]
                                * g(map_t(u), &[map_x(v), map_x(w), map_x(y)]);
                        }
                    }
                }
            }
            total * (0.5 * cfg.t) * l * l * l
        }
        _ => unreachable!(),
    }
}

/// Output of [`mecke_check`].
pub struct MeckeCheck {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub z: f64,
}

/// Compare both sides of the add-one-point identity
/// `E[∫ h dω] = ν ∫ E[h(s, x; ω + δ)] ds dx`
/// over `n` environment replicas, pairing both sides on the same replicas.
pub fn mecke_check(
    cfg: &EnvConfig,
    h: &(dyn Fn(f64, &[f64], &Environment) -> f64 + Sync),
    n: usize,
    quad_nodes: usize,
) -> Result<MeckeCheck> {
    cfg.validate()?;
    if n < 100 {
        return Err(PolyError::config("mecke_check needs at least 100 replicas"));
    }
    use rayon::prelude::*;
    let rows: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, &[rng::tag::REPLICA, i as u64]);
            let env = Environment::sample_with(cfg, &mut r).expect("validated config");
            let lhs: f64 = env
                .events()
                .iter()
                .map(|e| h(e.time, e.coords(cfg.d), &env))
                .sum();
            let rhs = cfg.nu
                * integrate_box(cfg, quad_nodes, |s, x| {
                    let plus = env.adjoin(s, x);
                    h(s, x, &plus)
                });
            (lhs, rhs)
        })
        .collect();
    for &(a, b) in &rows {
        if !a.is_finite() || !b.is_finite() {
            return Err(PolyError::numeric("mecke functional produced a non-finite value"));
        }
    }
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let diffs: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let dm = crate::numerics::Moments::from_slice(&diffs);
    let z = if dm.sem() == 0.0 {
        0.0
    } else {
        dm.mean() / dm.sem()
    };
    Ok(MeckeCheck {
        lhs: Estimate::from_samples(&lhs, Method::Direct),
        rhs: Estimate::from_samples(&rhs, Method::Quadrature),
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cfg(seed: u64) -> EnvConfig {
        EnvConfig::new(1, 1.0, 2.0, 3.0, seed).unwrap()
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(EnvConfig::new(4, 1.0, 1.0, 1.0, 0).is_err());
        assert!(EnvConfig::new(1, 0.0, 1.0, 1.0, 0).is_err());
        assert!(EnvConfig::new(1, 1.0, -1.0, 1.0, 0).is_err());
        assert!(EnvConfig::new(1, 1.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic_in_seed() {
        let a = Environment::sample(&cfg(9)).unwrap();
        let b = Environment::sample(&cfg(9)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = Environment::sample(&cfg(10)).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn vanishing_intensity_gives_empty_cloud() {
        let cfg = EnvConfig::new(1, 1e-12, 1.0, 1.0, 123).unwrap();
        let env = Environment::sample(&cfg).unwrap();
        assert!(env.is_empty());
    }

    #[test]
    fn events_inside_window_and_sorted() {
        let cfg = cfg(5);
        let env = Environment::sample(&cfg).unwrap();
        for w in env.events().windows(2) {
            assert!(w[0].time <= w[1].time);
        }
        for e in env.events() {
            assert!(e.time > 0.0 && e.time <= cfg.t);
            assert!(e.pos[0].abs() <= cfg.box_halfwidth);
        }
    }

    #[test]
    fn serialization_round_trip_is_bit_exact() {
        let env = Environment::sample(&cfg(41)).unwrap();
        let text = env.to_text();
        let back = Environment::from_text(&text).unwrap();
        assert_eq!(env.events(), back.events());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn shift_identity_and_arithmetic() {
        let env = Environment::sample(&cfg(7)).unwrap();
        let same = env.shift(0.0, &[0.0]);
        assert_eq!(env.events(), same.events());

        let single = Environment::from_events(cfg(0), vec![Event::new(1.0, &[0.5])]);
        let moved = single.shift(0.25, &[0.5]);
        assert_eq!(moved.len(), 1);
        assert_abs_diff_eq!(moved.events()[0].time, 0.75);
        assert_abs_diff_eq!(moved.events()[0].pos[0], 0.0);
    }

    #[test]
    fn transform_inverses_restore_bits() {
        let env = Environment::sample(&cfg(21)).unwrap();

        let back = env.shift(0.7, &[0.3]).shift(-0.7, &[-0.3]);
        let survivors: Vec<Event> = env
            .events()
            .iter()
            .copied()
            .filter(|e| e.time - 0.7 > 0.0)
            .collect();
        assert_eq!(back.events(), survivors.as_slice());

        let sheared = env.shear_linear(&[0.37]).shear_linear(&[-0.37]);
        assert_eq!(sheared.events(), env.events());

        let rev2 = env.reverse(2.0, &[1.0]).reverse(2.0, &[1.0]);
        let kept: Vec<Event> = env
            .events()
            .iter()
            .copied()
            .filter(|e| 2.0 - e.time > 0.0)
            .collect();
        assert_eq!(rev2.events(), kept.as_slice());
    }

    #[test]
    fn reverse_single_point() {
        let single = Environment::from_events(cfg(0), vec![Event::new(0.3, &[1.0])]);
        let rev = single.reverse(1.0, &[1.0]);
        assert_eq!(rev.len(), 1);
        assert_abs_diff_eq!(rev.events()[0].time, 0.7);
        assert_abs_diff_eq!(rev.events()[0].pos[0], 0.0);
    }

    #[test]
    fn superpose_counts_add_and_geometry_checked() {
        let a = Environment::sample(&cfg(1)).unwrap();
        let b = Environment::sample(&cfg(2)).unwrap();
        let c = a.superpose(&b).unwrap();
        assert_eq!(c.len(), a.len() + b.len());
        assert_abs_diff_eq!(c.config().nu, 2.0);

        let empty = Environment::from_events(cfg(3), vec![]);
        let same = a.superpose(&empty).unwrap();
        assert_eq!(same.events(), a.events());

        let other = EnvConfig::new(1, 1.0, 3.0, 3.0, 4).unwrap();
        let bad = Environment::sample(&other).unwrap();
        assert!(a.superpose(&bad).is_err());
    }

    #[test]
    fn count_distribution_matches_poisson() {
        let base = cfg(1000);
        let counts: Vec<u64> = (0..10_000u64)
            .map(|i| {
                let mut c = base;
                c.seed = 5_000 + i;
                Environment::sample(&c).unwrap().len() as u64
            })
            .collect();
        let res = crate::stats::chi_square_poisson(&counts, base.mean_count());
        assert!(res.passes(0.01), "p = {}", res.p_value);
    }

    #[test]
    fn mecke_constant_functional() {
        let c = EnvConfig::new(1, 1.5, 1.0, 1.0, 77).unwrap();
        let out = mecke_check(&c, &|_, _, _| 1.0, 400, 8).unwrap();
        // rhs is exact for constant h.
        assert_abs_diff_eq!(out.rhs.value, c.mean_count(), epsilon = 1e-9);
        assert!(out.z.abs() < 3.0, "z = {}", out.z);
    }

    #[test]
    fn mecke_rejects_small_n() {
        let c = cfg(1);
        assert!(mecke_check(&c, &|_, _, _| 1.0, 10, 6).is_err());
    }

    #[test]
    fn tilted_sampling_constant_field_scales_mean() {
        let c = EnvConfig::new(1, 1.0, 1.0, 1.0, 31).unwrap();
        let field = BoundedField::new(|_, _| 2.0f64.ln(), 2.0f64.ln()).unwrap();
        let counts: Vec<u64> = (0..10_000u64)
            .map(|i| {
                let mut cc = c;
                cc.seed = 90_000 + i;
                let mut s = rng::stream(cc.seed, &[rng::tag::ENV, 1]);
                tilted_sample(&cc, &field, &mut s).unwrap().env.len() as u64
            })
            .collect();
        let res = crate::stats::chi_square_poisson(&counts, 2.0 * c.mean_count());
        assert!(res.passes(0.01), "p = {}", res.p_value);
    }

    #[test]
    fn unbounded_field_rejected() {
        assert!(BoundedField::new(|_, _| 0.0, f64::INFINITY).is_err());
    }
}
