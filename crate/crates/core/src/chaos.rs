//! Factorial measures, compensated multiple integrals of the Poisson cloud,
//! the orthogonal expansion of the normalized partition function, and the
//! continuum second-moment oracle.

use crate::environment::{EnvConfig, Environment};
use crate::geometry::{lambda, TubeSpec};
use crate::gibbs::OverlapIntegrals;
use crate::numerics::{integrate_adaptive, integrate_gl};
use crate::rng::Stream;
use crate::{Estimate, Method, PolyError, Result};
use rand_distr::StandardNormal;
use statrs::function::gamma::gamma;

/// A functional of an ordered tuple of space-time points.
pub type TupleFn<'a> = dyn Fn(&[(f64, &[f64])]) -> f64 + 'a;

/// An integrand on the order-`k` time simplex: an evaluator over ordered
/// `(time, position)` tuples plus a cached norm estimate. Order zero is the
/// constant read off the empty tuple.
pub struct SimplexIntegrand<'a> {
    pub order: usize,
    pub eval: Box<TupleFn<'a>>,
    pub norm_estimate: Option<f64>,
}

impl<'a> SimplexIntegrand<'a> {
    pub fn new(order: usize, eval: impl Fn(&[(f64, &[f64])]) -> f64 + 'a) -> Self {
        SimplexIntegrand {
            order,
            eval: Box::new(eval),
            norm_estimate: None,
        }
    }

    pub fn constant(value: f64) -> Self {
        SimplexIntegrand::new(0, move |_| value)
    }

    /// Sum over the time-ordered tuples of the environment, up to `t`.
    pub fn factorial_sum(&self, env: &Environment, t: f64) -> f64 {
        factorial_sum(env, self.order, t, self.eval.as_ref())
    }
}

/// Sum of `g` over all time-ordered `k`-tuples of distinct environment
/// points with times at most `t`. Order zero evaluates `g` on the empty
/// tuple; `k` larger than the point count gives zero.
pub fn factorial_sum(env: &Environment, k: usize, t: f64, g: &TupleFn) -> f64 {
    let d = env.config().d;
    let events = env.events_up_to(t);
    if k == 0 {
        return g(&[]);
    }
    if k > events.len() {
        return 0.0;
    }
    let mut tuple: Vec<(f64, &[f64])> = Vec::with_capacity(k);
    fn rec<'a>(
        events: &'a [crate::environment::Event],
        d: usize,
        k: usize,
        start: usize,
        tuple: &mut Vec<(f64, &'a [f64])>,
        g: &TupleFn,
    ) -> f64 {
        if tuple.len() == k {
            return g(tuple);
        }
        let need = k - tuple.len();
        let mut acc = 0.0;
        for i in start..=events.len().saturating_sub(need) {
            tuple.push((events[i].time, events[i].coords(d)));
            acc += rec(events, d, k, i + 1, tuple, g);
            tuple.pop();
        }
        acc
    }
    rec(events, d, k, 0, &mut tuple, g)
}

/// A boxed space-time function `(s, x) -> value`.
pub type SpaceTimeFn<'a> = Box<dyn Fn(f64, &[f64]) -> f64 + Sync + 'a>;

/// A one-point function with an optional analytic space profile
/// `s -> ∫ f(s, x) dx` over the box.
pub struct PointFn<'a> {
    pub f: SpaceTimeFn<'a>,
    pub space_integral: Option<Box<dyn Fn(f64) -> f64 + Sync + 'a>>,
}

impl<'a> PointFn<'a> {
    pub fn new(f: impl Fn(f64, &[f64]) -> f64 + Sync + 'a) -> Self {
        PointFn {
            f: Box::new(f),
            space_integral: None,
        }
    }

    pub fn with_space_integral(mut self, g: impl Fn(f64) -> f64 + Sync + 'a) -> Self {
        self.space_integral = Some(Box::new(g));
        self
    }

    fn profile(&self, s: f64, cfg: &EnvConfig, nodes: usize) -> f64 {
        match &self.space_integral {
            Some(g) => g(s),
            None => {
                let l = cfg.box_halfwidth;
                match cfg.d {
                    1 => integrate_gl(|x| (self.f)(s, &[x]), -l, l, nodes),
                    2 => integrate_gl(
                        |x| integrate_gl(|y| (self.f)(s, &[x, y]), -l, l, nodes),
                        -l,
                        l,
                        nodes,
                    ),
                    _ => integrate_gl(
                        |x| {
                            integrate_gl(
                                |y| integrate_gl(|z| (self.f)(s, &[x, y, z]), -l, l, nodes),
                                -l,
                                l,
                                nodes,
                            )
                        },
                        -l,
                        l,
                        nodes,
                    ),
                }
            }
        }
    }
}

/// Quadrature control for compensator integrals.
#[derive(Clone, Copy, Debug)]
pub struct QuadSpec {
    pub tol: f64,
    pub space_nodes: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            tol: 1e-6,
            space_nodes: 24,
        }
    }
}

pub struct WienerIto {
    pub value: f64,
    /// `nu` times the full space-time integral of the one-point function.
    pub compensator: f64,
    pub converged: bool,
}

/// Compensated multiple integral of the tensor power `g^(k)` over the
/// order-`k` simplex: the inclusion–exclusion sum over which coordinates are
/// atoms, with the pure-quadrature blocks collapsed per gap.
///
/// For tensor powers the sum over gap occupations of
/// `prod Phi_gap^{a}/a!` telescopes to `Phi_total^{k-m}/(k-m)!`, so the
/// value reduces to factorial sums against powers of the total compensator:
/// `sum_m omega^(m)(g^(m)) (-nu Phi)^{k-m}/(k-m)!`.
pub fn wiener_ito(
    env: &Environment,
    k: usize,
    g: &PointFn,
    t: f64,
    quad: &QuadSpec,
) -> Result<WienerIto> {
    if k > 3 {
        return Err(PolyError::config("compensated integrals limited to order 3"));
    }
    let cfg = env.config();
    let profile = |s: f64| g.profile(s, cfg, quad.space_nodes);
    let phi = integrate_adaptive(profile, 0.0, t, quad.tol);
    let phi_fine = integrate_adaptive(profile, 0.0, t, quad.tol / 10.0);
    let converged = (phi - phi_fine).abs() <= 10.0 * quad.tol.max(1e-14);
    let comp = cfg.nu * phi_fine;

    // Elementary symmetric sums of the per-point values give the factorial
    // sums of tensor powers.
    let d = cfg.d;
    let mut e = vec![0.0f64; k + 1];
    e[0] = 1.0;
    for ev in env.events_up_to(t) {
        let v = (g.f)(ev.time, ev.coords(d));
        for j in (1..=k).rev() {
            e[j] += v * e[j - 1];
        }
    }
    let mut value = 0.0;
    for (m, em) in e.iter().enumerate() {
        let rem = k - m;
        value += em * (-comp).powi(rem as i32) / fact_of(rem);
    }
    Ok(WienerIto {
        value,
        compensator: comp,
        converged,
    })
}

fn fact_of(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product::<f64>().max(1.0)
}

/// `L^2` norm squared of the tensor power of a one-point function on the
/// time-ordered domain: `(1/k!) (∫∫ g^2)^k`.
pub fn tensor_norm_sq(env_cfg: &EnvConfig, g: &PointFn, t: f64, k: usize, quad: &QuadSpec) -> f64 {
    let sq = PointFn::new(|s, x| {
        let v = (g.f)(s, x);
        v * v
    });
    let profile = |s: f64| sq.profile(s, env_cfg, quad.space_nodes);
    let norm1 = integrate_adaptive(profile, 0.0, t, quad.tol);
    norm1.powi(k as i32) / fact_of(k)
}

/// Pathwise expansion identity: for one fixed path, the normalized weight
/// equals the alternating-free subset sum over seen points,
/// `exp(beta N - t lambda nu r^d) = exp(-t lambda nu r^d) sum_j omega^(j)((lambda chi)^(j))`.
/// Both sides are computed by independent routes (exponential of the count
/// versus literal subset enumeration); returns the relative residual.
pub fn chaos_identity_check(
    env: &Environment,
    path_positions: &[(f64, Vec<f64>)],
    beta: f64,
    spec: &TubeSpec,
    t: f64,
) -> Result<f64> {
    let d = spec.d;
    let norm = lambda(beta) * env.config().nu * spec.slice_volume() * t;
    // Positions must be available at every event time.
    let mut seen = 0usize;
    let mut seen_flags: Vec<bool> = Vec::new();
    for e in env.events_up_to(t) {
        let pos = path_positions
            .iter()
            .find(|(s, _)| *s == e.time)
            .ok_or_else(|| PolyError::grid("path positions missing an event time"))?;
        let hit = spec.sees(&pos.1, e.coords(d));
        seen_flags.push(hit);
        if hit {
            seen += 1;
        }
    }
    let lhs = (beta * seen as f64 - norm).exp();

    // Subset enumeration over the seen points: each time-ordered tuple of
    // distinct points contributes the product of lambda indicators, which
    // vanishes unless every point in the tuple is seen.
    if seen > 25 {
        return Err(PolyError::config("too many seen points for subset enumeration"));
    }
    let lam = lambda(beta);
    let mut sum = 0.0f64;
    let n_subsets = 1u64 << seen;
    for mask in 0..n_subsets {
        let mut prod = 1.0;
        let mut bits = mask;
        while bits != 0 {
            prod *= lam;
            bits &= bits - 1;
        }
        sum += prod;
    }
    let rhs = (-norm).exp() * sum;
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE))
}

/// Monte Carlo value of the order-`k` kernel of the expansion at fixed
/// space-time points: `lambda^k P(all k points seen)`.
pub fn psi_k(
    beta: f64,
    spec: &TubeSpec,
    points: &[(f64, Vec<f64>)],
    n_paths: usize,
    stream: &mut Stream,
) -> Result<Estimate> {
    let k = points.len();
    if k == 0 {
        return Ok(Estimate::closed_form(1.0));
    }
    let d = spec.d;
    for w in points.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(PolyError::grid("kernel times must be strictly increasing"));
        }
    }
    if points[0].0 <= 0.0 {
        return Err(PolyError::grid("kernel times must be positive"));
    }
    let mut count = 0u64;
    for _ in 0..n_paths {
        let mut pos = [0.0f64; 3];
        let mut prev = 0.0;
        let mut all = true;
        for (s, x) in points {
            let sd = (s - prev).sqrt();
            for c in pos.iter_mut().take(d) {
                let g: f64 = rand::Rng::sample(stream, StandardNormal);
                *c += sd * g;
            }
            prev = *s;
            if !spec.sees(&pos[..d], x) {
                all = false;
                break;
            }
        }
        if all {
            count += 1;
        }
    }
    let p = count as f64 / n_paths as f64;
    let scale = lambda(beta).powi(k as i32);
    let se = (p * (1.0 - p) / n_paths as f64).sqrt();
    Ok(Estimate::new(
        scale * p,
        scale.abs() * se,
        n_paths as u64,
        Method::Direct,
    ))
}

/// Per-order second-moment weights of the expansion of the normalized
/// partition function, estimated from integrated pair overlaps:
/// `weight_k = (lambda^2 nu)^k E[O^k] / k!`.
pub struct ChaosExpansion {
    pub truncation: usize,
    pub orders: Vec<f64>,
    /// Envelope bound on each order, `(lambda^2 t nu r^d)^k / k!`.
    pub envelopes: Vec<f64>,
    /// Envelope tail beyond the truncation order.
    pub tail_bound: f64,
}

impl ChaosExpansion {
    pub fn within_envelope(&self) -> bool {
        self.orders
            .iter()
            .zip(&self.envelopes)
            .all(|(o, e)| *o <= e * (1.0 + 1e-9) + 1e-12)
    }

    /// Sum of the estimated orders: converges to the second moment of the
    /// normalized partition function.
    pub fn second_moment(&self) -> f64 {
        self.orders.iter().sum()
    }
}

pub fn chaos_expansion_weights(
    beta: f64,
    nu: f64,
    spec: &TubeSpec,
    t: f64,
    truncation: usize,
    overlaps: &OverlapIntegrals,
) -> ChaosExpansion {
    let lam2nu = lambda(beta) * lambda(beta) * nu;
    let cap = lam2nu * t * spec.slice_volume();
    let n = overlaps.samples.len() as f64;
    let mut orders = Vec::with_capacity(truncation + 1);
    let mut envelopes = Vec::with_capacity(truncation + 1);
    for k in 0..=truncation {
        let mom: f64 = overlaps
            .samples
            .iter()
            .map(|&o| (lam2nu * o).powi(k as i32))
            .sum::<f64>()
            / n;
        orders.push(mom / fact_of(k));
        envelopes.push(cap.powi(k as i32) / fact_of(k));
    }
    let mut tail_bound = 0.0;
    let mut term = cap.powi(truncation as i32) / fact_of(truncation);
    for j in truncation + 1..truncation + 200 {
        term *= cap / j as f64;
        tail_bound += term;
        if term < 1e-18 * tail_bound.max(1.0) {
            break;
        }
    }
    ChaosExpansion {
        truncation,
        orders,
        envelopes,
        tail_bound,
    }
}

/// `L^2(Delta_k x R^k)` norm squared of the `k`-step Gaussian transition
/// kernel on horizon `T`, by nested one-dimensional quadrature: each
/// convolution step contributes `∫ rho(s, x)^2 dx = 1/(2 sqrt(pi s))`, and
/// the self-similar profile reduces every step to a Beta-type integral
/// evaluated by Gauss–Legendre after a trigonometric substitution.
pub fn rho_k_norm_sq(k: usize, horizon: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let sqrt_pi = std::f64::consts::PI.sqrt();
    // kappa_k: coefficient of the power-law density u^{k/2 - 1}.
    let mut kappa = 1.0 / (2.0 * sqrt_pi);
    for j in 2..=k {
        // B_j = ∫_0^1 v^{(j-1)/2 - 1} (1 - v)^{-1/2} dv
        //     = 2 ∫_0^{pi/2} sin^{j-2}(theta) d theta.
        let b_j = 2.0 * integrate_gl(
            |th: f64| th.sin().powi(j as i32 - 2),
            0.0,
            std::f64::consts::FRAC_PI_2,
            64,
        );
        kappa *= b_j / (2.0 * sqrt_pi);
    }
    kappa * horizon.powf(k as f64 / 2.0) / (k as f64 / 2.0)
}

/// Closed form of [`rho_k_norm_sq`] for cross-checks:
/// `(T/4)^{k/2} / Gamma(k/2 + 1)`.
pub fn rho_k_norm_sq_closed(k: usize, horizon: f64) -> f64 {
    (horizon / 4.0).powf(k as f64 / 2.0) / gamma(k as f64 / 2.0 + 1.0)
}

pub struct ContinuumMoment {
    pub value: f64,
    pub orders: Vec<f64>,
    pub tail_bound: f64,
    pub tail_flag: bool,
}

/// Second moment of the continuum partition function at coupling
/// `beta_star`: `sum_k beta_star^{2k} ||rho^k||^2` truncated at order `K`,
/// with the remainder bounded through the closed-form envelope.
pub fn continuum_second_moment(
    beta_star: f64,
    horizon: f64,
    truncation: usize,
    tol: f64,
) -> Result<ContinuumMoment> {
    if truncation > 8 {
        return Err(PolyError::config("continuum truncation limited to order 8"));
    }
    let b2 = beta_star * beta_star;
    let mut orders = Vec::with_capacity(truncation + 1);
    for k in 0..=truncation {
        orders.push(b2.powi(k as i32) * rho_k_norm_sq(k, horizon));
    }
    let mut tail = 0.0;
    for k in truncation + 1..truncation + 80 {
        let term = b2.powi(k as i32) * rho_k_norm_sq_closed(k, horizon);
        tail += term;
        if term < 1e-20 * tail.max(1.0) {
            break;
        }
    }
    Ok(ContinuumMoment {
        value: orders.iter().sum(),
        orders,
        tail_bound: tail,
        tail_flag: tail > tol,
    })
}
