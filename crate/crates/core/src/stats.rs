//! Statistical test helpers: chi-square goodness of fit against a Poisson
//! law, Kolmogorov–Smirnov tests, exact binomial confidence bounds, and
//! normal-tail utilities.

use statrs::distribution::{Beta, ChiSquared, ContinuousCDF, Normal};

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Two-sided z threshold after a Bonferroni correction at total level `alpha`
/// over `k` tests.
pub fn bonferroni_z(alpha: f64, k: usize) -> f64 {
    phi_inv(1.0 - alpha / (2.0 * k as f64))
}

/// Poisson pmf by stable recursion.
fn poisson_pmf_table(mean: f64, up_to: usize) -> Vec<f64> {
    let mut p = vec![0.0; up_to + 1];
    p[0] = (-mean).exp();
    for k in 1..=up_to {
        p[k] = p[k - 1] * mean / k as f64;
    }
    p
}

/// Result of a goodness-of-fit test.
#[derive(Clone, Copy, Debug)]
pub struct GofResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl GofResult {
    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// Chi-square goodness of fit of observed counts against `Poisson(mean)`.
///
/// Bins with expected count below 5 are merged into their neighbours, the
/// right tail is pooled.
pub fn chi_square_poisson(counts: &[u64], mean: f64) -> GofResult {
    let n = counts.len() as f64;
    let max_k = *counts.iter().max().unwrap_or(&0) as usize;
    let hi = max_k.max((mean + 10.0 * mean.sqrt()).ceil() as usize) + 1;
    let pmf = poisson_pmf_table(mean, hi);

    let mut observed = vec![0.0f64; hi + 2];
    for &c in counts {
        observed[(c as usize).min(hi + 1)] += 1.0;
    }
    let mut expected = vec![0.0f64; hi + 2];
    let mut tail = 1.0;
    for k in 0..=hi {
        expected[k] = n * pmf[k];
        tail -= pmf[k];
    }
    expected[hi + 1] = n * tail.max(0.0);

    // Pool adjacent cells until each expected count is at least 5.
    let mut obs_b = Vec::new();
    let mut exp_b = Vec::new();
    let (mut co, mut ce) = (0.0, 0.0);
    for k in 0..observed.len() {
        co += observed[k];
        ce += expected[k];
        if ce >= 5.0 {
            obs_b.push(co);
            exp_b.push(ce);
            co = 0.0;
            ce = 0.0;
        }
    }
    if ce > 0.0 || co > 0.0 {
        if let (Some(o), Some(e)) = (obs_b.last_mut(), exp_b.last_mut()) {
            *o += co;
            *e += ce;
        } else {
            obs_b.push(co);
            exp_b.push(ce.max(1e-12));
        }
    }

    let stat: f64 = obs_b
        .iter()
        .zip(&exp_b)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    let dof = obs_b.len().saturating_sub(1).max(1);
    let p = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    GofResult {
        statistic: stat,
        dof,
        p_value: p,
    }
}

/// Asymptotic Kolmogorov distribution tail `P(sqrt(n) D > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against a CDF.
pub fn ks_one_sample(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> GofResult {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    GofResult {
        statistic: d,
        dof: samples.len(),
        p_value: kolmogorov_tail(n.sqrt() * d),
    }
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &mut [f64], b: &mut [f64]) -> GofResult {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let eff = (n * m / (n + m)).sqrt();
    GofResult {
        statistic: d,
        dof: a.len() + b.len(),
        p_value: kolmogorov_tail(eff * d),
    }
}

/// Clopper–Pearson lower confidence bound for a binomial proportion.
pub fn binomial_lower_bound(successes: u64, trials: u64, confidence: f64) -> f64 {
    if successes == 0 {
        return 0.0;
    }
    if successes >= trials {
        return (1.0 - confidence).powf(1.0 / trials as f64);
    }
    let a = successes as f64;
    let b = (trials - successes + 1) as f64;
    Beta::new(a, b).unwrap().inverse_cdf(1.0 - confidence)
}

/// Standardized difference of two estimates with independent errors.
pub fn z_difference(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let se = (se_a * se_a + se_b * se_b).sqrt();
    if se == 0.0 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a - b) / se
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use rand_distr::Distribution;

    #[test]
    fn normal_cdf_round_trip() {
        assert_abs_diff_eq!(phi(phi_inv(0.975)), 0.975, epsilon = 1e-9);
        assert_abs_diff_eq!(phi(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn chi_square_accepts_true_poisson() {
        let mut r = rng::stream(7, &[99]);
        let d = rand_distr::Poisson::new(6.5).unwrap();
        let counts: Vec<u64> = (0..10_000).map(|_| d.sample(&mut r) as u64).collect();
        let res = chi_square_poisson(&counts, 6.5);
        assert!(res.passes(0.01), "p={} stat={}", res.p_value, res.statistic);
    }

    #[test]
    fn chi_square_rejects_wrong_mean() {
        let mut r = rng::stream(7, &[100]);
        let d = rand_distr::Poisson::new(6.5).unwrap();
        let counts: Vec<u64> = (0..10_000).map(|_| d.sample(&mut r) as u64).collect();
        let res = chi_square_poisson(&counts, 7.5);
        assert!(!res.passes(0.01));
    }

    #[test]
    fn ks_accepts_uniform() {
        let mut r = rng::stream(3, &[1]);
        let mut xs: Vec<f64> = (0..5_000).map(|_| rand::Rng::gen::<f64>(&mut r)).collect();
        let res = ks_one_sample(&mut xs, |x| x.clamp(0.0, 1.0));
        assert!(res.passes(0.01));
    }

    #[test]
    fn binomial_bound_monotone() {
        let lo = binomial_lower_bound(5, 100, 0.99);
        let hi = binomial_lower_bound(50, 100, 0.99);
        assert!(lo < hi);
        assert!(lo > 0.0 && hi < 0.5);
        assert_eq!(binomial_lower_bound(0, 100, 0.99), 0.0);
    }
}
