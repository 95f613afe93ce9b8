//! Linear path tilts and their environment-shear counterparts: the
//! diffusivity statistic and the quadratic rate probe.

use crate::gibbs::GibbsEnsemble;
use crate::numerics::log_mean_exp;
use crate::paths::count_hits;
use crate::{Estimate, Method, PolyError, Result};

/// Which coupling the estimator uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TiltMode {
    /// Left side from the free-path Gibbs average, right side from sheared
    /// hit counts of the same paths; the two sides agree statistically.
    Independent,
    /// Both sides evaluated through the drifted proposal so the change of
    /// variables is an algebraic identity of the empirical measure.
    DriftedProposal,
}

pub struct TiltedMgf {
    pub lhs: Estimate,
    pub rhs: Estimate,
}

impl TiltedMgf {
    pub fn relative_residual(&self) -> f64 {
        (self.lhs.value - self.rhs.value).abs()
            / self.lhs.value.abs().max(self.rhs.value.abs()).max(f64::MIN_POSITIVE)
    }
}

/// Gibbs moment generating function of the scaled endpoint against its
/// shear representation: the left side is the Gibbs average of
/// `exp(a . B_t / sqrt(t))`, the right side is
/// `exp(|a|^2/2) W_t(sheared medium) / W_t(medium)`, with the sheared medium
/// evaluated through the displaced paths of the same sample. Only the linear
/// displacement `s -> (s ^ t) a / sqrt(t)` is representable, so non-linear
/// tilts cannot be requested.
pub fn tilted_mgf(ens: &GibbsEnsemble, a: &[f64], mode: TiltMode) -> Result<TiltedMgf> {
    let d = ens.spec.d;
    if a.len() != d {
        return Err(PolyError::config("tilt vector has wrong dimension"));
    }
    let t = ens.horizon();
    let sqrt_t = t.sqrt();
    let a2: f64 = a.iter().map(|v| v * v).sum();
    let half_a2 = 0.5 * a2;
    let n = ens.n_paths();

    // Hits of the displaced paths against the same medium: equivalently the
    // hits of the original paths in the oppositely sheared medium.
    let phi: Vec<f64> = a.iter().map(|v| v / sqrt_t).collect();
    let displaced = ens.bundle.shear(move |s| phi.iter().map(|v| s.min(t) * v).collect())?;
    let hits_displaced = count_hits(&displaced, &ens.env, &ens.spec)?;

    let lw_orig: Vec<f64> = (0..n)
        .map(|p| ens.beta * ens.count_at(p, t) as f64)
        .collect();
    let lw_disp: Vec<f64> = (0..n)
        .map(|p| ens.beta * hits_displaced.count_at(p, t) as f64)
        .collect();
    let dot_scaled: Vec<f64> = (0..n)
        .map(|p| {
            let b = ens.bundle.endpoint(p);
            a.iter().zip(b).map(|(ai, bi)| ai * bi).sum::<f64>() / sqrt_t
        })
        .collect();

    match mode {
        TiltMode::Independent => {
            let lhs = ens.expect(t, |p| dot_scaled[p].exp());
            // W ratio from the same path sample.
            let ln_w_disp = log_mean_exp(&lw_disp);
            let ln_w = log_mean_exp(&lw_orig);
            let value = (half_a2 + ln_w_disp - ln_w).exp();
            let rhs = Estimate::new(value, 0.0, n as u64, Method::Direct)
                .with_flag("ratio of coupled partition estimates");
            Ok(TiltedMgf { lhs, rhs })
        }
        TiltMode::DriftedProposal => {
            // Proposal paths are the displaced ones; importance weights for
            // the free law are exp(-a.B_t/sqrt(t) - |a|^2/2) in terms of the
            // pre-displacement endpoints. The left side is the
            // self-normalized average with the statistic read off the
            // displaced endpoints; the right side is the partition-ratio
            // form. They coincide up to rounding.
            let log_rho: Vec<f64> = (0..n).map(|p| -dot_scaled[p] - half_a2).collect();
            let log_num: Vec<f64> = (0..n)
                .map(|p| {
                    let e = displaced.endpoint(p);
                    let dot: f64 =
                        a.iter().zip(e).map(|(ai, bi)| ai * bi).sum::<f64>() / sqrt_t;
                    dot + lw_disp[p] + log_rho[p]
                })
                .collect();
            let log_den: Vec<f64> = (0..n).map(|p| lw_disp[p] + log_rho[p]).collect();
            let lhs_val = (log_mean_exp(&log_num) - log_mean_exp(&log_den)).exp();
            let lhs = Estimate::new(lhs_val, 0.0, n as u64, Method::Snis);

            let rhs_val =
                (half_a2 + log_mean_exp(&lw_disp) - log_mean_exp(&log_den)).exp();
            let rhs = Estimate::new(rhs_val, 0.0, n as u64, Method::Direct);
            Ok(TiltedMgf { lhs, rhs })
        }
    }
}

/// `(1/t) ln P_t[exp(a . B_t)] - |a|^2 / 2`: the deviation of the quenched
/// cumulant from the quadratic shape, which vanishes for large horizons.
///
/// Evaluated through the shear coupling: the cumulant equals
/// `|a|^2 t / 2 + ln W_t(sheared medium) - ln W_t(medium)`, and both
/// partition estimates reuse the same path sample (the sheared one counts
/// hits of the displaced paths). This keeps the estimator variance at the
/// scale of plain partition estimation instead of the exploding direct
/// tilt. The caller must size the box for the drifted cloud,
/// `L >= 6 sqrt(t) + |a| t + r`.
pub fn rate_function_probe(ens: &GibbsEnsemble, a: &[f64]) -> Result<Estimate> {
    let d = ens.spec.d;
    if a.len() != d {
        return Err(PolyError::config("drift vector has wrong dimension"));
    }
    let a_norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if a_norm > 2.0 {
        return Err(PolyError::config("drift too large: |a| must be at most 2"));
    }
    let t = ens.horizon();
    let n = ens.n_paths();
    let drift = a.to_vec();
    let displaced = ens
        .bundle
        .shear(move |s| drift.iter().map(|v| s.min(t) * v).collect())?;
    let hits_displaced = count_hits(&displaced, &ens.env, &ens.spec)?;

    let lw: Vec<f64> = (0..n)
        .map(|p| ens.beta * ens.count_at(p, t) as f64)
        .collect();
    let lw_disp: Vec<f64> = (0..n)
        .map(|p| ens.beta * hits_displaced.count_at(p, t) as f64)
        .collect();
    if lw_disp.iter().any(|v| !v.is_finite()) {
        return Err(PolyError::numeric("tilted weight overflow"));
    }
    let value = (log_mean_exp(&lw_disp) - log_mean_exp(&lw)) / t;
    // Delta-method error for the log-ratio of two correlated averages.
    let shift_u = lw_disp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift_v = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let u: Vec<f64> = lw_disp.iter().map(|&x| (x - shift_u).exp()).collect();
    let v: Vec<f64> = lw.iter().map(|&x| (x - shift_v).exp()).collect();
    let (mu, mv) = (
        u.iter().sum::<f64>() / n as f64,
        v.iter().sum::<f64>() / n as f64,
    );
    let mut var = 0.0;
    for p in 0..n {
        let g = u[p] / mu - v[p] / mv;
        var += g * g;
    }
    var /= (n as f64) * (n as f64 - 1.0);
    Ok(Estimate::new(value, var.sqrt() / t, n as u64, Method::Snis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EnvConfig, Environment};
    use crate::geometry::TubeSpec;
    use crate::gibbs::GibbsEnsemble;
    use crate::numerics::linspace;
    use crate::rng;

    fn ensemble(beta: f64, seed: u64, n: usize) -> GibbsEnsemble {
        let cfg = EnvConfig::new(1, 1.0, 2.0, 9.5, seed).unwrap();
        let env = Environment::sample(&cfg).unwrap();
        let spec = TubeSpec::new(1, 1.0).unwrap();
        let mut s = rng::stream(seed, &[rng::tag::PATHS, 9]);
        GibbsEnsemble::sample_free(env, spec, beta, 2.0, &linspace(0.0, 2.0, 4), n, &mut s)
            .unwrap()
    }

    #[test]
    fn zero_tilt_is_exactly_one() {
        let ens = ensemble(0.5, 61, 64);
        for mode in [TiltMode::Independent, TiltMode::DriftedProposal] {
            let out = tilted_mgf(&ens, &[0.0], mode).unwrap();
            assert!((out.lhs.value - 1.0).abs() < 1e-12);
            assert!((out.rhs.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn drifted_proposal_is_an_identity() {
        for seed in [71u64, 72, 73] {
            for (beta, a) in [(0.5, 0.8), (-0.4, 1.3), (0.9, -0.6)] {
                let ens = ensemble(beta, seed, 32);
                let out = tilted_mgf(&ens, &[a], TiltMode::DriftedProposal).unwrap();
                assert!(
                    out.relative_residual() < 1e-10,
                    "residual {} at beta={beta}, a={a}",
                    out.relative_residual()
                );
            }
        }
    }

    #[test]
    fn free_measure_matches_gaussian_mgf() {
        let ens = ensemble(0.0, 74, 20_000);
        let out = tilted_mgf(&ens, &[0.7], TiltMode::Independent).unwrap();
        let target = (0.5f64 * 0.49).exp();
        assert!(
            (out.lhs.value - target).abs() < 3.0 * out.lhs.stderr,
            "lhs {} target {target}",
            out.lhs.value
        );
    }

    #[test]
    fn rate_probe_zero_drift() {
        let ens = ensemble(0.5, 75, 64);
        let e = rate_function_probe(&ens, &[0.0]).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn rate_probe_free_measure_within_error() {
        let ens = ensemble(0.0, 76, 20_000);
        let e = rate_function_probe(&ens, &[1.0]).unwrap();
        assert!(e.value.abs() < 3.0 * e.stderr.max(1e-3), "{} vs {}", e.value, e.stderr);
    }

    #[test]
    fn rate_probe_rejects_large_drift() {
        let ens = ensemble(0.1, 77, 16);
        assert!(rate_function_probe(&ens, &[2.5]).is_err());
    }
}
