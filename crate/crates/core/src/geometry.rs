//! Tube geometry around paths: ball radii, the seen/not-seen indicator,
//! pairwise ball-overlap volumes and the interaction scale `lambda`.

use crate::{PolyError, Result};
use std::f64::consts::PI;

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    match d {
        1 => Ok(2.0),
        2 => Ok(PI),
        3 => Ok(4.0 * PI / 3.0),
        _ => Err(PolyError::config(format!("unsupported dimension {d}"))),
    }
}

/// Radius of the ball whose volume is `r^d`.
pub fn ball_radius(d: usize, r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(PolyError::config("tube parameter r must be positive"));
    }
    Ok(unit_ball_volume(d)?.powf(-1.0 / d as f64) * r)
}

/// `lambda(beta) = e^beta - 1`, the linearized weight of a single seen point.
pub fn lambda(beta: f64) -> f64 {
    beta.exp_m1()
}

/// Cross-section of the tube around a path: closed balls of radius
/// `rho = gamma_d^(-1/d) r`, so each slice has volume `r^d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TubeSpec {
    pub d: usize,
    pub r: f64,
    pub rho: f64,
}

impl TubeSpec {
    pub fn new(d: usize, r: f64) -> Result<Self> {
        let rho = ball_radius(d, r)?;
        Ok(TubeSpec { d, r, rho })
    }

    /// Volume of one cross-section slice.
    pub fn slice_volume(&self) -> f64 {
        self.r.powi(self.d as i32)
    }

    /// Closed-ball indicator: does a path at `path_position` see a point at
    /// `event_position`?
    pub fn sees(&self, path_position: &[f64], event_position: &[f64]) -> bool {
        debug_assert_eq!(path_position.len(), self.d);
        debug_assert_eq!(event_position.len(), self.d);
        let mut s = 0.0;
        for (a, b) in path_position.iter().zip(event_position) {
            let dx = a - b;
            s += dx * dx;
        }
        s <= self.rho * self.rho
    }

    /// Scalar shortcut for one dimension.
    #[inline]
    pub fn sees_1d(&self, path_position: f64, event_position: f64) -> bool {
        (path_position - event_position).abs() <= self.rho
    }

    /// Exact Lebesgue volume of the intersection of the balls centered at `x`
    /// and `y`. Full slice volume at separation zero, zero beyond `2 rho`.
    pub fn overlap_volume(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s2 = 0.0;
        for (a, b) in x.iter().zip(y) {
            let dx = a - b;
            s2 += dx * dx;
        }
        self.overlap_volume_at(s2.sqrt())
    }

    /// Overlap volume as a function of the center separation.
    pub fn overlap_volume_at(&self, sep: f64) -> f64 {
        let rho = self.rho;
        if sep >= 2.0 * rho {
            return 0.0;
        }
        match self.d {
            1 => 2.0 * rho - sep,
            2 => {
                // Circular lens of two equal disks.
                let h = sep / (2.0 * rho);
                2.0 * rho * rho * h.acos() - 0.5 * sep * (4.0 * rho * rho - sep * sep).sqrt()
            }
            3 => {
                // Two equal spherical caps.
                PI * (4.0 * rho + sep) * (2.0 * rho - sep) * (2.0 * rho - sep) / 12.0
            }
            _ => unreachable!("TubeSpec construction rejects d > 3"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn ball_radius_reference_values() {
        assert_abs_diff_eq!(ball_radius(1, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            ball_radius(2, 1.0).unwrap(),
            1.0 / PI.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            ball_radius(3, 1.0).unwrap(),
            (3.0 / (4.0 * PI)).powf(1.0 / 3.0),
            epsilon = 1e-12
        );
        assert!(ball_radius(4, 1.0).is_err());
    }

    #[test]
    fn ball_volume_normalization_to_twelve_digits() {
        for d in 1..=3 {
            for &r in &[0.3, 1.0, 2.5] {
                let spec = TubeSpec::new(d, r).unwrap();
                let vol = unit_ball_volume(d).unwrap() * spec.rho.powi(d as i32);
                assert_abs_diff_eq!(vol, r.powi(d as i32), epsilon = 1e-12 * r.powi(d as i32));
                assert_abs_diff_eq!(
                    spec.overlap_volume_at(0.0),
                    r.powi(d as i32),
                    epsilon = 1e-12 * r.powi(d as i32)
                );
            }
        }
    }

    #[test]
    fn sees_closed_ball_boundary() {
        let spec = TubeSpec::new(2, 1.0).unwrap();
        assert!(spec.sees(&[0.0, 0.0], &[0.0, 0.0]));
        assert!(spec.sees(&[0.0, 0.0], &[spec.rho, 0.0]));
        assert!(!spec.sees(&[0.0, 0.0], &[2.0 * spec.rho, 0.0]));
    }

    #[test]
    fn interval_overlap_formula() {
        let spec = TubeSpec::new(1, 1.0).unwrap();
        assert_abs_diff_eq!(spec.overlap_volume(&[0.0], &[0.3]), 0.7, epsilon = 1e-15);
        assert_eq!(spec.overlap_volume(&[0.0], &[1.0]), 0.0);
    }

    #[test]
    fn lambda_reference_values() {
        assert_eq!(lambda(0.0), 0.0);
        assert_abs_diff_eq!(lambda(2.0f64.ln()), 1.0, epsilon = 1e-15);
        // Strictly increasing, always above -1.
        let mut prev = lambda(-30.0);
        assert!(prev > -1.0);
        for i in 1..200 {
            let b = -30.0 + i as f64 * 0.3;
            let v = lambda(b);
            assert!(v > prev);
            assert!(v > -1.0);
            prev = v;
        }
    }

    #[test]
    fn cap_volume_matches_hit_or_miss_monte_carlo() {
        // d = 3, r = 1, separation half a ball radius.
        let spec = TubeSpec::new(3, 1.0).unwrap();
        let sep = 0.5 * spec.rho;
        let exact = spec.overlap_volume(&[0.0, 0.0, 0.0], &[sep, 0.0, 0.0]);

        let mut r = crate::rng::stream(11, &[311]);
        let n = 10_000_000u64;
        let mut hits = 0u64;
        for _ in 0..n {
            // Uniform point in the first ball via rejection from its cube.
            loop {
                let p = [
                    spec.rho * (2.0 * r.gen::<f64>() - 1.0),
                    spec.rho * (2.0 * r.gen::<f64>() - 1.0),
                    spec.rho * (2.0 * r.gen::<f64>() - 1.0),
                ];
                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] <= spec.rho * spec.rho {
                    let dx = p[0] - sep;
                    if dx * dx + p[1] * p[1] + p[2] * p[2] <= spec.rho * spec.rho {
                        hits += 1;
                    }
                    break;
                }
            }
        }
        let ball_vol = spec.slice_volume();
        let p_hat = hits as f64 / n as f64;
        let mc = ball_vol * p_hat;
        let se = ball_vol * (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        assert!(
            (mc - exact).abs() <= 3.0 * se,
            "mc={mc} exact={exact} se={se}"
        );
    }

    proptest! {
        #[test]
        fn overlap_symmetric_monotone_bounded(
            d in 1usize..=3,
            r in 0.1f64..3.0,
            s1 in 0.0f64..5.0,
            s2 in 0.0f64..5.0,
        ) {
            let spec = TubeSpec::new(d, r).unwrap();
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let v_lo = spec.overlap_volume_at(lo);
            let v_hi = spec.overlap_volume_at(hi);
            prop_assert!(v_lo >= v_hi - 1e-12);
            prop_assert!(v_lo <= spec.slice_volume() + 1e-12);
            prop_assert!(v_hi >= 0.0);
            // Depends only on |x - y|: compare vector and scalar forms.
            let mut x = vec![0.0; d];
            let mut y = vec![0.0; d];
            x[0] = 1.0;
            y[0] = 1.0 + lo;
            prop_assert!((spec.overlap_volume(&x, &y) - v_lo).abs() < 1e-12);
        }

        #[test]
        fn sees_iff_within_rho(d in 1usize..=3, r in 0.1f64..2.0, sep in 0.0f64..3.0) {
            let spec = TubeSpec::new(d, r).unwrap();
            let mut x = vec![0.0; d];
            let y = vec![0.0; d];
            x[0] = sep;
            prop_assert_eq!(spec.sees(&x, &y), sep <= spec.rho);
        }
    }
}
