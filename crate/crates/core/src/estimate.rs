//! The universal return type of every Monte Carlo operation.

use std::fmt;

/// How an [`Estimate`] was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Plain Monte Carlo average.
    Direct,
    /// Self-normalized importance sampling.
    Snis,
    /// Deterministic closed form (stderr 0).
    ClosedForm,
    /// Deterministic quadrature (stderr 0 up to the quadrature tolerance).
    Quadrature,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Direct => "direct",
            Method::Snis => "snis",
            Method::ClosedForm => "closed-form",
            Method::Quadrature => "quadrature",
        };
        f.write_str(s)
    }
}

/// Value, standard error, sample count and method tag.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
    pub method: Method,
    /// Diagnostics attached by the producing operation, e.g. a degeneracy or
    /// coarse-grid warning.
    pub flags: Vec<String>,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, n: u64, method: Method) -> Self {
        Estimate {
            value,
            stderr,
            n,
            method,
            flags: Vec::new(),
        }
    }

    pub fn closed_form(value: f64) -> Self {
        Estimate::new(value, 0.0, 1, Method::ClosedForm)
    }

    pub fn from_samples(samples: &[f64], method: Method) -> Self {
        let m = crate::numerics::Moments::from_slice(samples);
        Estimate::new(m.mean(), m.sem(), m.n(), method)
    }

    pub fn with_flag(mut self, flag: impl Into<String>) -> Self {
        self.flags.push(flag.into());
        self
    }

    /// Standardized distance to a reference value.
    pub fn z_against(&self, target: f64) -> f64 {
        if self.stderr == 0.0 {
            if self.value == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - target) / self.stderr
        }
    }

    /// `|value - target| <= k * stderr`.
    pub fn within_se(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }

    /// CSV row in the shared observable schema:
    /// `observable, beta, nu, r, d, t, value, stderr, n, method, seed`.
    #[allow(clippy::too_many_arguments)]
    pub fn csv_row(
        &self,
        observable: &str,
        beta: f64,
        nu: f64,
        r: f64,
        d: usize,
        t: f64,
        seed: u64,
    ) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            observable, beta, nu, r, d, t, self.value, self.stderr, self.n, self.method, seed
        )
    }
}

/// Header matching [`Estimate::csv_row`].
pub const CSV_HEADER: &str = "observable,beta,nu,r,d,t,value,stderr,n,method,seed";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_samples_moments() {
        let e = Estimate::from_samples(&[1.0, 3.0], Method::Direct);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.n, 2);
        assert!(e.within_se(2.0, 3.0));
    }

    #[test]
    fn csv_row_shape() {
        let e = Estimate::closed_form(1.5);
        let row = e.csv_row("w_mean", 0.5, 1.0, 1.0, 1, 2.0, 42);
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.contains("closed-form"));
    }
}
