//! Weak-form check for the renormalized point-to-point density: tested
//! against a smooth compactly supported function, all terms estimated from
//! one shared path cloud so the comparison is a paired test.

use crate::environment::Environment;
use crate::geometry::{lambda, TubeSpec};
use crate::numerics::{linspace, Moments};
use crate::paths::{count_hits, ensemble_grid, PathBundle};
use crate::rng::Stream;
use crate::{PolyError, Result};

/// A test function with an analytic Laplacian and compact support.
pub struct TestFunction<'a> {
    pub eval: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    pub laplacian: Box<dyn Fn(f64) -> f64 + Sync + 'a>,
    pub support_halfwidth: f64,
}

/// The standard smooth bump `exp(-1/(1-(x/w)^2))` on `(-w, w)`.
pub fn bump(w: f64) -> TestFunction<'static> {
    let eval = move |x: f64| {
        let u = x / w;
        if u.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - u * u)).exp()
        }
    };
    let lap = move |x: f64| {
        let u = x / w;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let q = 1.0 - u * u;
        let phi = (-1.0 / q).exp();
        phi * (4.0 * u * u / (q * q * q * q) - 2.0 / (q * q) - 8.0 * u * u / (q * q * q))
            / (w * w)
    };
    TestFunction {
        eval: Box::new(eval),
        laplacian: Box::new(lap),
        support_halfwidth: w,
    }
}

pub struct SheCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub z: f64,
    /// Decomposition of the right side: initial value, Laplacian term,
    /// event noise term, compensator term.
    pub terms: [f64; 4],
}

/// Compare `∫ W(t, x) phi(x) dx` against
/// `phi(0) + (1/2) ∫∫ W Δphi + lambda ∫ compensated noise` with every term
/// estimated from the same free-path sample; `z` standardizes the paired
/// per-path differences. One dimensional.
#[allow(clippy::too_many_arguments)]
pub fn she_weak_form_check(
    env: &Environment,
    beta: f64,
    spec: &TubeSpec,
    phi: &TestFunction,
    t: f64,
    n_paths: usize,
    time_cells: usize,
    stream: &mut Stream,
) -> Result<SheCheck> {
    let cfg = env.config();
    if cfg.d != 1 || spec.d != 1 {
        return Err(PolyError::config("weak-form check requires d = 1"));
    }
    if phi.support_halfwidth + 6.0 * t.sqrt() > cfg.box_halfwidth {
        return Err(PolyError::config("test-function support exceeds the box margin"));
    }
    let lam = lambda(beta);
    let nu = cfg.nu;
    let rate = lam * nu * spec.slice_volume();

    let grid = ensemble_grid(env, t, &linspace(0.0, t, time_cells));
    let bundle = PathBundle::sample_free(&grid, n_paths, 1, stream)?;
    let hits = count_hits(&bundle, env, spec)?;
    let events = env.events_up_to(t);
    let event_grid_idx: Vec<usize> = events
        .iter()
        .map(|e| {
            grid.binary_search_by(|v| v.total_cmp(&e.time))
                .expect("event time on merged grid")
        })
        .collect();

    let phi0 = (phi.eval)(0.0);
    let mut diffs = Vec::with_capacity(n_paths);
    let mut lhs_acc = Moments::default();
    let mut lap_acc = Moments::default();
    let mut noise_ev_acc = Moments::default();
    let mut noise_comp_acc = Moments::default();
    for p in 0..n_paths {
        // Running seen-count along the grid for this path.
        let seen = &hits.seen[p];
        let mut seen_cursor = 0usize;
        let mut count = 0u32;
        let mut lap = 0.0;
        let mut comp = 0.0;
        let mut ev_sum = 0.0;
        let mut xi_prev_weight;
        let mut f_lap_prev = (phi.laplacian)(bundle.position(p, 0)[0]);
        let mut f_phi_prev = (phi.eval)(bundle.position(p, 0)[0]);
        let mut event_cursor = 0usize;
        for k in 1..grid.len() {
            let s_prev = grid[k - 1];
            let s = grid[k];
            // xi on the open interval (s_prev, s): cadlag value after any
            // event at s_prev (count already includes it).
            xi_prev_weight = (beta * count as f64 - rate * s_prev).exp();
            let x = bundle.position(p, k)[0];
            let f_lap = (phi.laplacian)(x);
            let f_phi = (phi.eval)(x);
            let dt = s - s_prev;
            // The decay factor varies inside the interval; use the exact
            // endpoint values of xi with the frozen count.
            let xi_hi = (beta * count as f64 - rate * s).exp();
            lap += 0.5 * dt * (xi_prev_weight * f_lap_prev + xi_hi * f_lap);
            comp += 0.5 * dt * (xi_prev_weight * f_phi_prev + xi_hi * f_phi);
            // Events located exactly at grid time s.
            while event_cursor < events.len() && event_grid_idx[event_cursor] == k {
                let xi_left = (beta * count as f64 - rate * s).exp();
                let is_seen = seen_cursor < seen.len()
                    && seen[seen_cursor] as usize == event_cursor;
                if is_seen {
                    ev_sum += xi_left * f_phi;
                    count += 1;
                    seen_cursor += 1;
                }
                event_cursor += 1;
            }
            f_lap_prev = f_lap;
            f_phi_prev = f_phi;
        }
        let xi_t = (beta * count as f64 - rate * t).exp();
        let lhs = xi_t * (phi.eval)(bundle.position(p, grid.len() - 1)[0]);
        let rhs = phi0 + 0.5 * lap + lam * ev_sum - lam * nu * spec.r * comp;
        lhs_acc.push(lhs);
        lap_acc.push(0.5 * lap);
        noise_ev_acc.push(lam * ev_sum);
        noise_comp_acc.push(lam * nu * spec.r * comp);
        diffs.push(lhs - rhs);
    }
    let dm = Moments::from_slice(&diffs);
    let z = if dm.sem() > 0.0 { dm.mean() / dm.sem() } else { 0.0 };
    Ok(SheCheck {
        lhs: lhs_acc.mean(),
        rhs: phi0 + lap_acc.mean() + noise_ev_acc.mean() - noise_comp_acc.mean(),
        z,
        terms: [
            phi0,
            lap_acc.mean(),
            noise_ev_acc.mean(),
            noise_comp_acc.mean(),
        ],
    })
}
