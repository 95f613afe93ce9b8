//! Closed-form curve utilities for the phase-diagram scan: the family
//! `nu(beta) = a |lambda(beta)|^{-alpha}` and the sign function `h_alpha`
//! controlling the monotonicity of the excess free energy along it.

use polylab_core::geometry::lambda;
use polylab_core::{PolyError, Result};

/// `h_alpha(u) = u - u^2 / (alpha (1 + u)) - ln(1 + u)` for `u > -1`.
pub fn h_alpha(alpha: f64, u: f64) -> Result<f64> {
    if u <= -1.0 {
        return Err(PolyError::config("h_alpha requires u > -1"));
    }
    if alpha <= 0.0 {
        return Err(PolyError::config("h_alpha requires alpha > 0"));
    }
    Ok(u - u * u / (alpha * (1.0 + u)) - u.ln_1p())
}

/// The curve `nu(beta) = a |lambda(beta)|^{-alpha}`.
pub fn curve_nu(a: f64, alpha: f64, beta: f64) -> Result<f64> {
    let lam = lambda(beta);
    if lam == 0.0 {
        return Err(PolyError::config("curve undefined at lambda(beta) = 0"));
    }
    Ok(a * lam.abs().powf(-alpha))
}

/// The exponent at which `h_alpha` changes sign on `[0, lambda(beta)]`:
/// `alpha(beta) = lambda(beta)^2 / (e^beta (e^beta - 1 - beta))`.
pub fn alpha_of_beta(beta: f64) -> f64 {
    if beta == 0.0 {
        return 2.0;
    }
    let lam = lambda(beta);
    lam * lam / (beta.exp() * (beta.exp() - 1.0 - beta))
}

/// Dense-grid verification of the four-case sign table of `h_alpha`.
pub fn sign_table_ok(grid_points: usize) -> bool {
    let tol = 1e-12;
    // alpha = 2, u >= 0: non-negative on (0, 10].
    for i in 1..=grid_points {
        let u = 10.0 * i as f64 / grid_points as f64;
        if h_alpha(2.0, u).unwrap() < -tol {
            return false;
        }
    }
    // alpha = 2, u in (-1, 0]: non-positive.
    for i in 1..grid_points {
        let u = -1.0 + i as f64 / grid_points as f64;
        if h_alpha(2.0, u).unwrap() > tol {
            return false;
        }
    }
    // beta > 0, alpha <= alpha(beta): non-positive on [0, lambda].
    for &beta in &[0.3, 1.0, 2.0] {
        let ab = alpha_of_beta(beta);
        let lam = lambda(beta);
        for i in 0..=grid_points {
            let u = lam * i as f64 / grid_points as f64;
            if h_alpha(ab, u).unwrap() > 1e-9 {
                return false;
            }
        }
    }
    // beta < 0, alpha >= alpha(beta): non-negative on [lambda, 0].
    for &beta in &[-0.3, -1.0, -2.0] {
        let ab = alpha_of_beta(beta);
        let lam = lambda(beta);
        for i in 0..=grid_points {
            let u = lam * (1.0 - i as f64 / grid_points as f64);
            if h_alpha(ab, u).unwrap() < -1e-9 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn h_alpha_zero_at_origin() {
        for &a in &[0.5, 1.0, 2.0, 3.7] {
            assert_eq!(h_alpha(a, 0.0).unwrap(), 0.0);
        }
        assert!(h_alpha(2.0, -1.0).is_err());
        assert!(h_alpha(0.0, 0.5).is_err());
    }

    #[test]
    fn alpha_of_beta_reference() {
        assert_eq!(alpha_of_beta(0.0), 2.0);
        let b = 1.0f64;
        let lam = b.exp() - 1.0;
        let expect = lam * lam / (b.exp() * (b.exp() - 1.0 - b));
        assert_abs_diff_eq!(alpha_of_beta(1.0), expect, epsilon = 1e-14);
        // At beta = 1 the cutoff sits above 1 and below 2.
        assert!(alpha_of_beta(1.0) > 1.0 && alpha_of_beta(1.0) < 2.0);
    }

    #[test]
    fn sign_table_verified_on_dense_grid() {
        assert!(sign_table_ok(2000));
    }

    #[test]
    fn h_at_alpha_of_one_nonpositive_on_interval() {
        let ab = alpha_of_beta(1.0);
        let lam = lambda(1.0);
        for i in 0..=2000 {
            let u = lam * i as f64 / 2000.0;
            assert!(h_alpha(ab, u).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn curve_values() {
        let v = curve_nu(1.5, 2.0, 0.5).unwrap();
        let lam = lambda(0.5);
        assert_abs_diff_eq!(v, 1.5 / (lam * lam), epsilon = 1e-14);
        assert!(curve_nu(1.0, 2.0, 0.0).is_err());
    }
}
