//! Distribution-level checks that cut across modules: transform invariance
//! of the medium, endpoint-integral recovery of the partition function,
//! quadrature oracles for overlap statistics, and trend checks.

use polylab_core::environment::{EnvConfig, Environment};
use polylab_core::geometry::{lambda, TubeSpec};
use polylab_core::gibbs::{p2l_from_p2p, GibbsEnsemble};
use polylab_core::numerics::{integrate_gl, linspace, Moments};
use polylab_core::paths::PathBundle;
use polylab_core::rng;
use polylab_core::stats;
use polylab_core::tilt::rate_function_probe;
use rayon::prelude::*;

#[test]
fn shift_preserves_interior_intensity() {
    // After a space-time shift and a re-crop to a fixed interior window the
    // mean count per unit volume stays at nu, within three standard errors
    // over ten thousand replicas.
    let base = EnvConfig::new(1, 1.3, 2.0, 4.0, 0).unwrap();
    let counts: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg = base;
            cfg.seed = rng::derive_seed(31, &[i]);
            let env = Environment::sample(&cfg).unwrap().shift(0.5, &[0.7]);
            env.events()
                .iter()
                .filter(|e| e.time <= 1.0 && e.pos[0].abs() <= 2.0)
                .count() as f64
        })
        .collect();
    let m = Moments::from_slice(&counts);
    let volume = 1.0 * 4.0;
    assert!(
        (m.mean() / volume - base.nu).abs() < 3.0 * m.sem() / volume,
        "rate {} vs {}",
        m.mean() / volume,
        base.nu
    );
}

#[test]
fn shear_preserves_interior_intensity() {
    let base = EnvConfig::new(1, 1.0, 2.0, 4.0, 0).unwrap();
    let counts: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg = base;
            cfg.seed = rng::derive_seed(32, &[i]);
            let env = Environment::sample(&cfg).unwrap().shear_linear(&[0.4]);
            env.events()
                .iter()
                .filter(|e| e.pos[0].abs() <= 2.0)
                .count() as f64
        })
        .collect();
    let m = Moments::from_slice(&counts);
    let volume = 2.0 * 4.0;
    assert!((m.mean() / volume - base.nu).abs() < 3.0 * m.sem() / volume);
}

#[test]
fn endpoint_integral_recovers_partition() {
    // The heat-kernel integral of the endpoint-pinned partition estimates
    // agrees with the direct free-path estimate in the same medium.
    let t = 1.0;
    let cfg = EnvConfig::new(1, 1.0, t, 6.0 * t.sqrt() + 1.0 + 6.0, 11).unwrap();
    let env = Environment::sample(&cfg).unwrap();
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let beta = 0.4;

    let p2l = p2l_from_p2p(&env, beta, &spec, t, 600, 24, 77).unwrap();
    let mut s = rng::stream(78, &[1]);
    let ens = GibbsEnsemble::sample_free(env, spec, beta, t, &[], 20_000, &mut s).unwrap();
    let direct = ens.partition(t);
    let z = stats::z_difference(p2l.value, p2l.stderr, direct.value, direct.stderr);
    assert!(z.abs() < 3.0, "p2l {} vs direct {} (z = {z})", p2l.value, direct.value);
}

#[test]
fn flat_measure_overlap_matches_gaussian_quadrature() {
    // At beta = 0, s = 1, r = 1 the endpoint overlap is
    // E[max(0, 1 - |N(0, 2)|)], evaluated here by Gauss-Legendre quadrature.
    let oracle = integrate_gl(
        |x: f64| (1.0 - x.abs()) * (-x * x / 4.0).exp() / (4.0 * std::f64::consts::PI).sqrt(),
        -1.0,
        1.0,
        64,
    );
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let cfg = EnvConfig::new(1, 1e-9, 1.0, 7.0, 0).unwrap();
    let vals: Vec<f64> = (0..24u64)
        .into_par_iter()
        .map(|i| {
            let env = Environment::from_events(cfg, vec![]);
            let mut s = rng::stream(41, &[i]);
            let ens =
                GibbsEnsemble::sample_free(env, spec, 0.0, 1.0, &[0.5, 1.0], 256, &mut s).unwrap();
            ens.overlaps(&[1.0]).unwrap().i_s[0]
        })
        .collect();
    let m = Moments::from_slice(&vals);
    assert!(
        (m.mean() - oracle).abs() < 3.0 * m.sem(),
        "mc {} vs quadrature {}",
        m.mean(),
        oracle
    );
}

#[test]
fn quadratic_shape_deviation_shrinks_with_horizon() {
    // The per-horizon deviation of the tilted cumulant from |a|^2/2 tends to
    // zero; along t = 4, 8, 16 the averaged magnitude must decrease. The box
    // covers the drifted cloud and the path count scales with the horizon to
    // keep the estimator noise subdominant.
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let beta = 0.5;
    let a = 1.0;
    let mut avg = Vec::new();
    for (k, t) in [4.0, 8.0, 16.0].into_iter().enumerate() {
        let n_paths = (256.0 * (t / 4.0) * (t / 4.0)) as usize;
        let devs: Vec<f64> = (0..30u64)
            .into_par_iter()
            .map(|i| {
                let cfg = EnvConfig::new(
                    1,
                    1.0,
                    t,
                    6.0 * t.sqrt() + a * t + 1.0,
                    rng::derive_seed(51, &[k as u64, i]),
                )
                .unwrap();
                let env = Environment::sample(&cfg).unwrap();
                let mut s = rng::stream(52, &[k as u64, i]);
                let ens =
                    GibbsEnsemble::sample_free(env, spec, beta, t, &[], n_paths, &mut s).unwrap();
                rate_function_probe(&ens, &[a]).unwrap().value.abs()
            })
            .collect();
        avg.push(Moments::from_slice(&devs).mean());
    }
    assert!(
        avg[0] > avg[1] && avg[1] > avg[2],
        "deviations not decreasing: {avg:?}"
    );
}

#[test]
fn bridge_sampling_matches_conditioned_free_paths() {
    // Two-sample KS on the midpoint: free paths conditioned on a terminal
    // window against exact bridges to a truncated-Gaussian endpoint.
    let t = 1.0f64;
    let (lo, hi) = (0.2, 0.9);
    let n = 10_000usize;
    let mut s = rng::stream(61, &[1]);
    let mut conditioned = Vec::with_capacity(n);
    while conditioned.len() < n {
        let g1: f64 = rand::Rng::sample(&mut s, rand_distr::StandardNormal);
        let g2: f64 = rand::Rng::sample(&mut s, rand_distr::StandardNormal);
        let mid = (t / 2.0).sqrt() * g1;
        let end = mid + (t / 2.0).sqrt() * g2;
        if end > lo && end <= hi {
            conditioned.push(mid);
        }
    }
    let mut s2 = rng::stream(62, &[1]);
    let (pl, ph) = (stats::phi(lo / t.sqrt()), stats::phi(hi / t.sqrt()));
    let mut bridged = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rand::Rng::gen(&mut s2);
        let x = t.sqrt() * stats::phi_inv(pl + u * (ph - pl));
        let b = PathBundle::sample_bridge(&[0.0, t / 2.0, t], t, &[x], 1, &mut s2).unwrap();
        bridged.push(b.position(0, 1)[0]);
    }
    let res = stats::ks_two_sample(&mut conditioned, &mut bridged);
    assert!(res.passes(0.01), "p = {}", res.p_value);
}

#[test]
fn shifted_start_partition_gap_scales_linearly() {
    // E|W_t(x) - W_t(0)| grows like |x| for small offsets; the constant is
    // not pinned, so only the scaling is checked. Mirror-coupled paths in a
    // shared medium keep the difference variance small.
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let (beta, nu, t) = (0.5, 1.0, 1.0);
    let lam = lambda(beta);
    let offsets = [0.25, 0.5, 1.0];
    let mut gaps = Vec::new();
    for (k, &x) in offsets.iter().enumerate() {
        let vals: Vec<f64> = (0..400u64)
            .into_par_iter()
            .map(|i| {
                let cfg = EnvConfig::new(
                    1,
                    nu,
                    t,
                    6.0 * t.sqrt() + 1.0 + x,
                    rng::derive_seed(81, &[k as u64, i]),
                )
                .unwrap();
                let env = Environment::sample(&cfg).unwrap();
                let grid = polylab_core::paths::ensemble_grid(&env, t, &[]);
                let mut s = rng::stream(82, &[k as u64, i]);
                let mc = polylab_core::paths::mirror_couple(&grid, &[x], 64, &mut s).unwrap();
                let h0 = polylab_core::paths::count_hits(&mc.base, &env, &spec).unwrap();
                let hx = polylab_core::paths::count_hits(&mc.reflected, &env, &spec).unwrap();
                let norm = (-lam * nu * t).exp();
                let w0: f64 = (0..64)
                    .map(|p| (beta * h0.count_at(p, t) as f64).exp())
                    .sum::<f64>()
                    / 64.0
                    * norm;
                let wx: f64 = (0..64)
                    .map(|p| (beta * hx.count_at(p, t) as f64).exp())
                    .sum::<f64>()
                    / 64.0
                    * norm;
                (wx - w0).abs()
            })
            .collect();
        gaps.push(Moments::from_slice(&vals).mean());
    }
    // Log-log slope near one.
    let lx: Vec<f64> = offsets.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = gaps.iter().map(|v| v.ln()).collect();
    let fit = polylab_core::numerics::fit_line(&lx, &ly);
    assert!(
        fit.slope > 0.5 && fit.slope < 1.5,
        "gap scaling slope {} (gaps {gaps:?})",
        fit.slope
    );
}

#[test]
fn intensity_derivative_matches_occupation_functional() {
    // The derivative of E[ln Z_t] in the intensity equals the space-time
    // integral of E ln(1 + lambda P_t(chi)). The left side uses the
    // superposition coupling (adding an independent thin cloud); the right
    // side evaluates the occupation functional at the midpoint intensity.
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let (beta, nu, t) = (0.6, 1.0, 1.0f64);
    let d_nu = 0.2;
    let lam = lambda(beta);
    let box_l = 6.0 * t.sqrt() + 1.0;
    let n_paths = 256;

    let rows: Vec<(f64, f64)> = (0..600u64)
        .into_par_iter()
        .map(|i| {
            // Coupled difference of log partitions under a thickened cloud.
            let base_cfg =
                EnvConfig::new(1, nu, t, box_l, rng::derive_seed(91, &[i])).unwrap();
            let thin_cfg =
                EnvConfig::new(1, d_nu, t, box_l, rng::derive_seed(92, &[i])).unwrap();
            let env = Environment::sample(&base_cfg).unwrap();
            let thick = env.superpose(&Environment::sample(&thin_cfg).unwrap()).unwrap();
            let grid = polylab_core::paths::ensemble_grid(&thick, t, &[]);
            let mut s = rng::stream(93, &[i]);
            let bundle = PathBundle::sample_free(&grid, n_paths, 1, &mut s).unwrap();
            let h_thin = polylab_core::paths::count_hits(&bundle, &env, &spec).unwrap();
            let h_thick = polylab_core::paths::count_hits(&bundle, &thick, &spec).unwrap();
            let ln_z = |h: &polylab_core::paths::HitProcess| {
                let lw: Vec<f64> =
                    (0..n_paths).map(|p| beta * h.count_at(p, t) as f64).collect();
                polylab_core::numerics::log_mean_exp(&lw)
            };
            let diff = (ln_z(&h_thick) - ln_z(&h_thin)) / d_nu;

            // Occupation functional at the midpoint intensity.
            let mid_cfg = EnvConfig::new(1, nu + 0.5 * d_nu, t, box_l, rng::derive_seed(94, &[i]))
                .unwrap();
            let env_mid = Environment::sample(&mid_cfg).unwrap();
            let mut s2 = rng::stream(95, &[i]);
            let ens = GibbsEnsemble::sample_free(
                env_mid,
                spec,
                beta,
                t,
                &linspace(0.0, t, 16),
                n_paths,
                &mut s2,
            )
            .unwrap();
            let w = ens.normalized_weights(t, false);
            // integral over (0,t] x R of ln(1 + lambda mass(s,x)) by a grid
            // in time and an exact interval sweep in space.
            let mut acc = 0.0;
            let times = linspace(0.0, t, 16);
            for win in times.windows(2) {
                let s_mid = win[1];
                let k = ens
                    .bundle
                    .times()
                    .binary_search_by(|v| v.total_cmp(&s_mid))
                    .unwrap();
                // Piecewise-constant occupation in x: sweep interval ends.
                let mut evs: Vec<(f64, f64)> = Vec::new();
                for p in 0..n_paths {
                    let b = ens.bundle.position(p, k)[0];
                    evs.push((b - spec.rho, w[p]));
                    evs.push((b + spec.rho, -w[p]));
                }
                evs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut cur = 0.0;
                let mut prev_x = evs[0].0;
                let mut inner = 0.0;
                for (x, dw) in evs {
                    if x > prev_x && cur > 0.0 {
                        inner += (x - prev_x) * (1.0 + lam * cur).ln();
                    }
                    cur += dw;
                    prev_x = x;
                }
                acc += (win[1] - win[0]) * inner;
            }
            (diff, acc)
        })
        .collect();
    let diffs: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    let m = Moments::from_slice(&diffs);
    let z = m.mean() / m.sem();
    assert!(z.abs() < 3.5, "z = {z}, mean gap {}", m.mean());
}

#[test]
fn annealed_mean_in_two_dimensions() {
    // The annealed identity also holds for the planar model.
    let spec = TubeSpec::new(2, 1.0).unwrap();
    let (beta, nu, t) = (0.4, 0.8, 1.0);
    let vals: Vec<f64> = (0..400u64)
        .into_par_iter()
        .map(|i| {
            let cfg = EnvConfig::new(2, nu, t, 6.0 * t.sqrt() + 1.0, rng::derive_seed(71, &[i]))
                .unwrap();
            let env = Environment::sample(&cfg).unwrap();
            let mut s = rng::stream(72, &[i]);
            let ens = GibbsEnsemble::sample_free(env, spec, beta, t, &[], 64, &mut s).unwrap();
            ens.partition(t).value
        })
        .collect();
    let m = Moments::from_slice(&vals);
    let target = (t * nu * lambda(beta) * spec.slice_volume()).exp();
    assert!(
        (m.mean() - target).abs() < 3.0 * m.sem(),
        "mean {} vs {}",
        m.mean(),
        target
    );
    let _ = linspace(0.0, 1.0, 2);
}
