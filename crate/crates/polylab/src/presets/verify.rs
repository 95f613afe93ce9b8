//! The verification battery: exact algebraic identities of the empirical
//! measure at relative tolerance 1e-10, plus the statistical consistency
//! checks with a Bonferroni-corrected budget of 0.01 in total.

use crate::runner::{Outcome, RunContext, RunError};
use polylab_core::environment::{mecke_check, tilted_sample, BoundedField, EnvConfig, Environment};
use polylab_core::geometry::TubeSpec;
use polylab_core::gibbs::{
    partition_scan, sample_overlap_integrals, second_moment_closed_form, self_consistency_check,
    shear_p2p_coupled, telescoping_residual, GibbsEnsemble,
};
use polylab_core::numerics::Moments;
use polylab_core::paths::{mirror_survival, PathBundle};
use polylab_core::stats;
use polylab_core::tilt::{tilted_mgf, TiltMode};
use polylab_core::{chaos, rng};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

struct Check {
    name: String,
    statistic: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    fn exact(name: &str, residual: f64) -> Self {
        Check {
            name: name.to_string(),
            statistic: residual,
            threshold: 1e-10,
            pass: residual < 1e-10,
        }
    }

    fn z(name: &str, z: f64, thresh: f64) -> Self {
        Check {
            name: name.to_string(),
            statistic: z,
            threshold: thresh,
            pass: z.abs() < thresh,
        }
    }

    fn p_value(name: &str, p: f64, alpha: f64) -> Self {
        Check {
            name: name.to_string(),
            statistic: p,
            threshold: alpha,
            pass: p >= alpha,
        }
    }

    fn boolean(name: &str, pass: bool) -> Self {
        Check {
            name: name.to_string(),
            statistic: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
            pass,
        }
    }
}

/// Number of statistical tests in the battery (z-type plus goodness-of-fit),
/// fixed so the multiplicity correction is stable.
const N_STATISTICAL: usize = 23;

pub fn run(ctx: &RunContext) -> Result<Outcome, RunError> {
    let seed = ctx.seed;
    let z_thresh = stats::bonferroni_z(0.01, N_STATISTICAL);
    let alpha = 0.01 / N_STATISTICAL as f64;
    let instances = ctx.cfg.usize("identity_instances", 120)?;
    let replicas = ctx.cfg.usize("replicas", 1500)?;

    let mut checks = Vec::new();
    checks.extend(exact_identities(seed, instances));
    checks.extend(mecke_battery(seed, replicas.max(100), z_thresh));
    checks.extend(poissonianity(seed, replicas, alpha));
    checks.push(tilt_reweighting(seed, replicas, z_thresh));
    checks.extend(martingale_mean(seed, z_thresh));
    checks.push(self_consistency(seed, z_thresh));
    checks.extend(wiener_battery(seed, replicas, z_thresh));
    checks.push(second_moment_agreement(seed, z_thresh));
    checks.extend(mirror_battery(seed, alpha));
    checks.push(bridge_conditioning(seed, alpha));

    let mut csv = String::from("check,statistic,threshold,pass\n");
    let mut all_pass = true;
    for c in &checks {
        println!(
            "{} {}: statistic {:.6e} (threshold {:.3e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.statistic,
            c.threshold
        );
        csv.push_str(&format!(
            "{},{},{},{}\n",
            c.name, c.statistic, c.threshold, c.pass
        ));
        all_pass &= c.pass;
    }
    ctx.write_file("results.csv", &csv)?;
    Ok(if all_pass {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn random_ensemble(seed: u64, idx: u64, beta: f64) -> GibbsEnsemble {
    let t = 1.0 + (idx % 3) as f64 * 0.5;
    let cfg = EnvConfig::new(
        1,
        1.0,
        t,
        6.0 * t.sqrt() + 1.0,
        rng::derive_seed(seed, &[rng::tag::ENV, idx]),
    )
    .unwrap();
    let env = Environment::sample(&cfg).unwrap();
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let mut s = rng::stream(seed, &[rng::tag::PATHS, idx]);
    GibbsEnsemble::sample_free(env, spec, beta, t, &[], 24, &mut s).unwrap()
}

fn exact_identities(seed: u64, instances: usize) -> Vec<Check> {
    let spec = TubeSpec::new(1, 1.0).unwrap();

    let telescoping = (0..instances as u64)
        .into_par_iter()
        .map(|i| telescoping_residual(&random_ensemble(seed, i, 0.6 + 0.1 * (i % 4) as f64)))
        .reduce(|| 0.0, f64::max);

    let chaos_res = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = EnvConfig::new(1, 1.5, 1.0, 2.0, rng::derive_seed(seed, &[7, i])).unwrap();
            let env = Environment::sample(&cfg).unwrap();
            let mut s = rng::stream(seed, &[8, i]);
            let mut pos = 0.0;
            let mut prev = 0.0;
            let mut path = vec![(0.0, vec![0.0])];
            for e in env.events_up_to(1.0) {
                let g: f64 = s.sample(StandardNormal);
                pos += (e.time - prev).sqrt() * g;
                prev = e.time;
                path.push((e.time, vec![pos]));
            }
            chaos::chaos_identity_check(&env, &path, 0.5 + 0.05 * (i % 5) as f64, &spec, 1.0)
                .unwrap()
        })
        .reduce(|| 0.0, f64::max);

    let shear_res = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = EnvConfig::new(1, 1.0, 1.0, 12.0, rng::derive_seed(seed, &[9, i])).unwrap();
            let env = Environment::sample(&cfg).unwrap();
            let mut s = rng::stream(seed, &[10, i]);
            shear_p2p_coupled(&env, 0.5, &spec, 1.0, &[0.4 + 0.2 * (i % 3) as f64], 24, &mut s)
                .unwrap()
                .relative_residual()
        })
        .reduce(|| 0.0, f64::max);

    let cm_res = (0..instances as u64)
        .into_par_iter()
        .map(|i| {
            let ens = random_ensemble(seed, 5_000 + i, 0.4 + 0.1 * (i % 5) as f64);
            tilted_mgf(&ens, &[0.3 + 0.3 * (i % 4) as f64], TiltMode::DriftedProposal)
                .unwrap()
                .relative_residual()
        })
        .reduce(|| 0.0, f64::max);

    vec![
        Check::exact("telescoping-product", telescoping),
        Check::exact("expansion-identity", chaos_res),
        Check::exact("shear-coupled-p2p", shear_res),
        Check::exact("drifted-change-of-variables", cm_res),
    ]
}

fn mecke_battery(seed: u64, n: usize, z_thresh: f64) -> Vec<Check> {
    let cfg = EnvConfig::new(1, 1.5, 1.0, 1.5, seed).unwrap();
    let battery: [(&str, Box<dyn Fn(f64, &[f64], &Environment) -> f64 + Sync>); 3] = [
        ("mecke-constant", Box::new(|_, _, _| 1.0)),
        (
            "mecke-half-horizon",
            Box::new(|s, _, _| if s <= 0.5 { 1.0 } else { 0.0 }),
        ),
        (
            "mecke-counting",
            Box::new(|s, _, env| env.count_window(0.0, s) as f64),
        ),
    ];
    battery
        .iter()
        .map(|(name, h)| {
            let out = mecke_check(&cfg, h.as_ref(), n, 10).unwrap();
            Check::z(name, out.z, z_thresh)
        })
        .collect()
}

fn count_window(env: &Environment, t0: f64, t1: f64, lo: f64, hi: f64) -> u64 {
    env.events()
        .iter()
        .filter(|e| e.time > t0 && e.time <= t1 && e.pos[0] > lo && e.pos[0] <= hi)
        .count() as u64
}

fn poissonianity(seed: u64, replicas: usize, alpha: f64) -> Vec<Check> {
    let base = EnvConfig::new(1, 1.0, 2.0, 4.0, seed).unwrap();
    let mut checks = Vec::new();

    let fresh: Vec<u64> = (0..replicas as u64)
        .map(|i| {
            let mut cfg = base;
            cfg.seed = rng::derive_seed(seed, &[20, i]);
            Environment::sample(&cfg).unwrap().len() as u64
        })
        .collect();
    checks.push(Check::p_value(
        "counts-fresh",
        stats::chi_square_poisson(&fresh, base.mean_count()).p_value,
        alpha,
    ));

    // Interior windows after each transform keep Poisson counts.
    let shifted: Vec<u64> = (0..replicas as u64)
        .map(|i| {
            let mut cfg = base;
            cfg.seed = rng::derive_seed(seed, &[21, i]);
            let env = Environment::sample(&cfg).unwrap().shift(0.5, &[0.7]);
            count_window(&env, 0.0, 1.0, -2.0, 2.0)
        })
        .collect();
    checks.push(Check::p_value(
        "counts-shifted",
        stats::chi_square_poisson(&shifted, 4.0).p_value,
        alpha,
    ));

    let sheared: Vec<u64> = (0..replicas as u64)
        .map(|i| {
            let mut cfg = base;
            cfg.seed = rng::derive_seed(seed, &[22, i]);
            let env = Environment::sample(&cfg).unwrap().shear_linear(&[0.3]);
            count_window(&env, 0.0, 2.0, -2.0, 2.0)
        })
        .collect();
    checks.push(Check::p_value(
        "counts-sheared",
        stats::chi_square_poisson(&sheared, 8.0).p_value,
        alpha,
    ));

    let reversed: Vec<u64> = (0..replicas as u64)
        .map(|i| {
            let mut cfg = base;
            cfg.seed = rng::derive_seed(seed, &[23, i]);
            let env = Environment::sample(&cfg).unwrap().reverse(2.0, &[1.0]);
            count_window(&env, 0.0, 1.0, -2.0, 2.0)
        })
        .collect();
    checks.push(Check::p_value(
        "counts-reversed",
        stats::chi_square_poisson(&reversed, 4.0).p_value,
        alpha,
    ));

    let superposed: Vec<u64> = (0..replicas as u64)
        .map(|i| {
            let mut a = base;
            a.seed = rng::derive_seed(seed, &[24, i]);
            let mut b = base;
            b.seed = rng::derive_seed(seed, &[25, i]);
            let env = Environment::sample(&a)
                .unwrap()
                .superpose(&Environment::sample(&b).unwrap())
                .unwrap();
            env.len() as u64
        })
        .collect();
    checks.push(Check::p_value(
        "counts-superposed",
        stats::chi_square_poisson(&superposed, 2.0 * base.mean_count()).p_value,
        alpha,
    ));

    for (tag, f_val, name) in [(26u64, 0.0, "counts-tilt-zero"), (27, 2f64.ln(), "counts-tilt-ln2")]
    {
        let field = BoundedField::new(move |_, _| f_val, f_val).unwrap();
        let counts: Vec<u64> = (0..replicas as u64)
            .map(|i| {
                let mut cfg = base;
                cfg.seed = rng::derive_seed(seed, &[tag, i]);
                let mut s = rng::stream(cfg.seed, &[rng::tag::THINNING, 1]);
                tilted_sample(&cfg, &field, &mut s).unwrap().env.len() as u64
            })
            .collect();
        checks.push(Check::p_value(
            name,
            stats::chi_square_poisson(&counts, f_val.exp() * base.mean_count()).p_value,
            alpha,
        ));
    }
    checks
}

/// Laplace-functional agreement between thinned tilted sampling and
/// density reweighting of the base law.
fn tilt_reweighting(seed: u64, replicas: usize, z_thresh: f64) -> Check {
    let cfg = EnvConfig::new(1, 1.0, 1.0, 2.0, seed).unwrap();
    let beta = 0.4;
    let field = BoundedField::new(
        move |_, x: &[f64]| if x[0].abs() <= 0.5 { beta } else { 0.0 },
        beta,
    )
    .unwrap();
    // Laplace functional of g = 1 on a window under the tilted law.
    let g_window = |env: &Environment| (-(count_window(env, 0.0, 1.0, -1.0, 1.0) as f64)).exp();
    let tilted: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg_i = cfg;
            cfg_i.seed = rng::derive_seed(seed, &[30, i]);
            let mut s = rng::stream(cfg_i.seed, &[rng::tag::THINNING, 2]);
            let out = tilted_sample(&cfg_i, &field, &mut s).unwrap();
            g_window(&out.env)
        })
        .collect();
    let reweighted: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut cfg_i = cfg;
            cfg_i.seed = rng::derive_seed(seed, &[31, i]);
            let env = Environment::sample(&cfg_i).unwrap();
            let field = BoundedField::new(
                move |_, x: &[f64]| if x[0].abs() <= 0.5 { beta } else { 0.0 },
                beta,
            )
            .unwrap();
            polylab_core::environment::tilt_density(&env, &field, 24) * g_window(&env)
        })
        .collect();
    let a = Moments::from_slice(&tilted);
    let b = Moments::from_slice(&reweighted);
    Check::z(
        "tilt-reweighting",
        stats::z_difference(a.mean(), a.sem(), b.mean(), b.sem()),
        z_thresh,
    )
}

fn martingale_mean(seed: u64, z_thresh: f64) -> Vec<Check> {
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let scan = partition_scan(0.5, 1.0, &spec, &[1.0, 2.0], 800, 96, seed ^ 0x51);
    scan.obs_times
        .iter()
        .zip(&scan.w_mean)
        .map(|(t, w)| Check::z(&format!("martingale-mean-t{t}"), w.z_against(1.0), z_thresh))
        .collect()
}

fn self_consistency(seed: u64, z_thresh: f64) -> Check {
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let out = self_consistency_check(0.5, 1.0, &spec, 1.0, 1.0, 150, 64, 4, seed ^ 0x52);
    Check::z("one-step-consistency", out.z, z_thresh)
}

fn wiener_battery(seed: u64, replicas: usize, z_thresh: f64) -> Vec<Check> {
    let cfg = EnvConfig::new(1, 2.0, 1.0, 1.0, seed).unwrap();
    let quad = chaos::QuadSpec::default();
    let g = || {
        chaos::PointFn::new(|s: f64, x: &[f64]| (1.0 + s) * (1.0 - x[0].abs()).max(0.0))
            .with_space_integral(|s| 1.0 + s)
    };
    let h = || {
        chaos::PointFn::new(|s: f64, _: &[f64]| (std::f64::consts::PI * s).cos())
            .with_space_integral(|s| 2.0 * (std::f64::consts::PI * s).cos())
    };
    let rows: Vec<[f64; 5]> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg;
            c.seed = rng::derive_seed(seed, &[40, i]);
            let env = Environment::sample(&c).unwrap();
            let g = g();
            let h = h();
            let w1 = chaos::wiener_ito(&env, 1, &g, 1.0, &quad).unwrap().value;
            let w2 = chaos::wiener_ito(&env, 2, &g, 1.0, &quad).unwrap().value;
            let w3 = chaos::wiener_ito(&env, 3, &g, 1.0, &quad).unwrap().value;
            let h2 = chaos::wiener_ito(&env, 2, &h, 1.0, &quad).unwrap().value;
            [w1, w2, w3, w1 * h2, w1 * w1]
        })
        .collect();
    let col = |k: usize| -> Moments { Moments::from_slice(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()) };
    let mut checks = Vec::new();
    for (k, name) in [(0, "wiener-mean-k1"), (1, "wiener-mean-k2"), (2, "wiener-mean-k3")] {
        let m = col(k);
        checks.push(Check::z(name, m.mean() / m.sem(), z_thresh));
    }
    let cross = col(3);
    checks.push(Check::z(
        "wiener-orthogonal-k1-l2",
        cross.mean() / cross.sem(),
        z_thresh,
    ));
    let diag = col(4);
    let target = cfg.nu * chaos::tensor_norm_sq(&cfg, &g(), 1.0, 1, &quad);
    checks.push(Check::z(
        "wiener-variance-k1",
        (diag.mean() - target) / diag.sem(),
        z_thresh,
    ));
    checks
}

fn second_moment_agreement(seed: u64, z_thresh: f64) -> Check {
    let spec = TubeSpec::new(1, 1.0).unwrap();
    let overlaps = sample_overlap_integrals(&spec, 1.0, 2000, 1000, seed ^ 0x53);
    let closed = second_moment_closed_form(0.3, 1.0, &overlaps);
    let scan = partition_scan(0.3, 1.0, &spec, &[1.0], 1500, 64, seed ^ 0x54);
    let direct = &scan.w_second[0];
    Check::z(
        "second-moment-routes",
        stats::z_difference(closed.value, closed.stderr, direct.value, direct.stderr),
        z_thresh,
    )
}

/// Lean mirror meeting-time sampler: returns detected meeting times at
/// several grid strides from one underlying fine walk per path.
pub fn mirror_meeting_times(
    sep: f64,
    horizon: f64,
    fine_step: f64,
    strides: &[usize],
    n_paths: usize,
    seed: u64,
) -> Vec<Vec<Option<f64>>> {
    let steps = (horizon / fine_step).round() as usize;
    let level = sep / 2.0;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut s = rng::stream(seed, &[rng::tag::MIRROR, p]);
            let sd = fine_step.sqrt();
            let mut pos = 0.0;
            let mut out: Vec<Option<f64>> = vec![None; strides.len()];
            for k in 1..=steps {
                let g: f64 = s.sample(StandardNormal);
                pos += sd * g;
                if pos >= level {
                    for (si, &stride) in strides.iter().enumerate() {
                        if out[si].is_none() && k % stride == 0 {
                            out[si] = Some(k as f64 * fine_step);
                        }
                    }
                    if out.iter().all(|o| o.is_some()) {
                        break;
                    }
                }
            }
            out
        })
        .collect()
}

fn mirror_battery(seed: u64, alpha: f64) -> Vec<Check> {
    let sep = 1.0;
    let horizon = 25.0;
    let fine = 2e-4;
    let strides = [16usize, 4, 1];
    let rows = mirror_meeting_times(sep, horizon, fine, &strides, 400, seed ^ 0x55);

    // KS on the finest stride, censored at the horizon.
    let detected: Vec<f64> = rows.iter().filter_map(|r| r[2]).collect();
    let n_total = rows.len();
    let cdf = |z: f64| 1.0 - mirror_survival(sep, z);
    let ks = ks_censored(&detected, n_total, cdf);
    let p = stats::kolmogorov_tail((n_total as f64).sqrt() * ks);

    // Detection at a refined grid can only be earlier, path by path; the
    // mean detected time must therefore decrease under refinement.
    let mean_at = |si: usize| -> f64 {
        let vals: Vec<f64> = rows.iter().map(|r| r[si].unwrap_or(horizon)).collect();
        Moments::from_slice(&vals).mean()
    };
    let bias_ok = mean_at(0) >= mean_at(1) && mean_at(1) >= mean_at(2);

    vec![
        Check::p_value("mirror-meeting-ks", p, alpha),
        Check::boolean("mirror-bias-refinement", bias_ok),
    ]
}

/// KS distance against `cdf` when only `detected` out of `n_total` samples
/// fall inside the observation window.
pub fn ks_censored(detected: &[f64], n_total: usize, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = detected.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = n_total as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(((i + 1) as f64 / n - f).abs()).max((i as f64 / n - f).abs());
    }
    d
}

fn bridge_conditioning(seed: u64, alpha: f64) -> Check {
    let t = 1.0f64;
    let (lo, hi) = (0.3, 0.7);
    let n = 4000usize;

    // Free paths conditioned on the terminal window, by rejection.
    let mut s = rng::stream(seed, &[60]);
    let mut conditioned = Vec::with_capacity(n);
    while conditioned.len() < n {
        let g1: f64 = s.sample(StandardNormal);
        let g2: f64 = s.sample(StandardNormal);
        let mid = (t / 2.0).sqrt() * g1;
        let end = mid + (t / 2.0).sqrt() * g2;
        if end > lo && end <= hi {
            conditioned.push(mid);
        }
    }

    // Endpoint from the truncated Gaussian, then an exact bridge.
    let mut s2 = rng::stream(seed, &[61]);
    let (pl, ph) = (stats::phi(lo / t.sqrt()), stats::phi(hi / t.sqrt()));
    let mut bridged = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = s2.gen::<f64>();
        let x = t.sqrt() * stats::phi_inv(pl + u * (ph - pl));
        let b = PathBundle::sample_bridge(&[0.0, t / 2.0, t], t, &[x], 1, &mut s2).unwrap();
        bridged.push(b.position(0, 1)[0]);
    }

    let res = stats::ks_two_sample(&mut conditioned, &mut bridged);
    Check::p_value("bridge-conditioning-ks", res.p_value, alpha)
}
