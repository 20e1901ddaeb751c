//! Normal tempered stable (NTS) laws and their multivariate extension (MNTS).
//!
//! A vector `X` is MNTS distributed when
//!
//! ```text
//! X = mu + beta (T - 1) + diag(gamma) sqrt(T) Z
//! ```
//!
//! with `Z ~ N(0, Sigma)` (`Sigma` a correlation matrix) and `T` an independent
//! tempered stable subordinator of index `alpha / 2` and tempering `theta`,
//! normalized so that `E[T] = 1`. Its Laplace transform is
//!
//! ```text
//! E[exp(-s T)] = exp(-(2 theta^(1 - alpha/2) / alpha) ((theta + s)^(alpha/2) - theta^(alpha/2)))
//! ```
//!
//! and `Var[T] = (2 - alpha) / (2 theta)`. The standard margin (zero mean, unit
//! variance) fixes `gamma^2 = 1 - beta^2 (2 - alpha) / (2 theta)`.

mod fit;
mod inversion;
mod sample;

pub use fit::{correlation, dependence_from_correlation, fit_std_mnts, nearest_correlation, MntsFit, NtsFitOptions};
pub use inversion::{density_on_grid, GridSettings, NtsDist, SubordinatorTable, Table};
pub use sample::{MntsSampler, SubordinatorSampler};
pub(crate) use sample::sqrt_factor;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shared `(alpha, theta)` of the subordinator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorParams {
    pub alpha: f64,
    pub theta: f64,
}

impl SubordinatorParams {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 2), got {alpha}")));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("theta must be positive, got {theta}")));
        }
        Ok(Self { alpha, theta })
    }

    /// Index of the tempered stable subordinator, `alpha / 2`.
    pub fn index(&self) -> f64 {
        0.5 * self.alpha
    }

    fn scale_const(&self) -> f64 {
        2.0 * self.theta.powf(1.0 - self.index()) / self.alpha
    }

    /// `ln E[exp(-s T)]` for complex `s` with `Re(theta + s) > 0`.
    pub fn laplace_exponent(&self, s: Complex64) -> Complex64 {
        let a = self.index();
        -self.scale_const() * ((self.theta + s).powf(a) - self.theta.powf(a))
    }

    pub fn variance(&self) -> f64 {
        (2.0 - self.alpha) / (2.0 * self.theta)
    }

    /// Characteristic function of `T` itself.
    pub fn char_fn(&self, u: f64) -> Complex64 {
        self.laplace_exponent(Complex64::new(0.0, -u)).exp()
    }
}

/// `sqrt(2 theta / (2 - alpha))`, the bound on `|beta|` for a standard margin.
pub fn beta_bound(alpha: f64, theta: f64) -> f64 {
    (2.0 * theta / (2.0 - alpha)).sqrt()
}

/// Standard NTS margin: zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdNtsParams {
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
}

impl StdNtsParams {
    pub fn new(alpha: f64, theta: f64, beta: f64) -> Result<Self> {
        SubordinatorParams::new(alpha, theta)?;
        let bound = beta_bound(alpha, theta);
        if !(beta.abs() < bound) {
            return Err(Error::Domain(format!("|beta| = {} must be below {bound}", beta.abs())));
        }
        Ok(Self { alpha, theta, beta })
    }

    pub fn subordinator(&self) -> SubordinatorParams {
        SubordinatorParams { alpha: self.alpha, theta: self.theta }
    }

    pub fn gamma(&self) -> f64 {
        (1.0 - self.beta * self.beta * self.subordinator().variance()).sqrt()
    }

    pub fn as_nts(&self) -> NtsParams {
        NtsParams { alpha: self.alpha, theta: self.theta, beta: self.beta, gamma: self.gamma(), mu: 0.0 }
    }

    pub fn char_fn(&self, u: f64) -> Complex64 {
        self.as_nts().char_fn(u)
    }
}

/// General univariate NTS margin `(alpha, theta, beta, gamma, mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtsParams {
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl NtsParams {
    pub fn validate(&self) -> Result<()> {
        SubordinatorParams::new(self.alpha, self.theta)?;
        if !(self.gamma > 0.0) {
            return Err(Error::Domain(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !self.beta.is_finite() || !self.mu.is_finite() {
            return Err(Error::Domain("beta and mu must be finite".into()));
        }
        Ok(())
    }

    pub fn subordinator(&self) -> SubordinatorParams {
        SubordinatorParams { alpha: self.alpha, theta: self.theta }
    }

    pub fn char_fn(&self, u: f64) -> Complex64 {
        let s = Complex64::new(0.5 * self.gamma * self.gamma * u * u, -self.beta * u);
        let shift = Complex64::new(0.0, u * (self.mu - self.beta));
        (shift + self.subordinator().laplace_exponent(s)).exp()
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn variance(&self) -> f64 {
        self.gamma * self.gamma + self.beta * self.beta * self.subordinator().variance()
    }

    /// `ln E[exp(s X)]`, finite for `s` strictly inside the tail-rate interval.
    pub fn ln_mgf(&self, s: f64) -> f64 {
        let v = s * self.beta + 0.5 * self.gamma * self.gamma * s * s;
        if v >= self.theta {
            return f64::INFINITY;
        }
        s * (self.mu - self.beta) + self.subordinator().laplace_exponent(Complex64::new(-v, 0.0)).re
    }

    /// Exponential decay rates `(left, right)` of the two tails.
    pub fn tail_rates(&self) -> (f64, f64) {
        let g2 = self.gamma * self.gamma;
        let disc = (self.beta * self.beta + 2.0 * g2 * self.theta).sqrt();
        ((self.beta + disc) / g2, (-self.beta + disc) / g2)
    }
}

/// Multivariate NTS parameter set `(alpha, theta, beta, gamma, mu, Sigma)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MntsParams {
    pub alpha: f64,
    pub theta: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    /// Correlation matrix of the Gaussian component, row-major rows.
    pub sigma_corr: Vec<Vec<f64>>,
}

impl MntsParams {
    /// Standardized margins: `mu = 0` and `gamma` from the unit-variance constraint.
    pub fn standardized(alpha: f64, theta: f64, beta: Vec<f64>, sigma_corr: Vec<Vec<f64>>) -> Result<Self> {
        let gamma = beta
            .iter()
            .map(|&b| StdNtsParams::new(alpha, theta, b).map(|p| p.gamma()))
            .collect::<Result<Vec<_>>>()?;
        let n = beta.len();
        let p = Self { alpha, theta, beta, gamma, mu: vec![0.0; n], sigma_corr };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn subordinator(&self) -> SubordinatorParams {
        SubordinatorParams { alpha: self.alpha, theta: self.theta }
    }

    pub fn validate(&self) -> Result<()> {
        SubordinatorParams::new(self.alpha, self.theta)?;
        let n = self.dim();
        if self.gamma.len() != n || self.mu.len() != n {
            return Err(Error::Dimension { expected: n, got: self.gamma.len().min(self.mu.len()) });
        }
        if self.sigma_corr.len() != n || self.sigma_corr.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: self.sigma_corr.len() });
        }
        if self.gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Domain("gamma must be positive".into()));
        }
        for i in 0..n {
            if (self.sigma_corr[i][i] - 1.0).abs() > 1e-9 {
                return Err(Error::Domain("correlation matrix needs a unit diagonal".into()));
            }
            for j in 0..i {
                if (self.sigma_corr[i][j] - self.sigma_corr[j][i]).abs() > 1e-9 {
                    return Err(Error::Domain("correlation matrix must be symmetric".into()));
                }
            }
        }
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.sigma_corr[i][j]);
        let min_eig = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        if n > 0 && min_eig < -1e-8 {
            return Err(Error::Domain(format!("correlation matrix not positive semi-definite (min eigenvalue {min_eig})")));
        }
        Ok(())
    }

    pub fn margin(&self, i: usize) -> NtsParams {
        NtsParams { alpha: self.alpha, theta: self.theta, beta: self.beta[i], gamma: self.gamma[i], mu: self.mu[i] }
    }

    /// `E[exp(i u'X)]`.
    pub fn char_fn(&self, u: &[f64]) -> Complex64 {
        let n = self.dim();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += u[i] * self.gamma[i] * self.sigma_corr[i][j] * self.gamma[j] * u[j];
            }
        }
        let ub: f64 = u.iter().zip(&self.beta).map(|(a, b)| a * b).sum();
        let um: f64 = u.iter().zip(&self.mu).map(|(a, b)| a * b).sum();
        let s = Complex64::new(0.5 * quad, -ub);
        (Complex64::new(0.0, um - ub) + self.subordinator().laplace_exponent(s)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_fn_at_origin_is_one() {
        let p = StdNtsParams::new(1.2, 0.7, -0.3).unwrap();
        assert_eq!(p.char_fn(0.0), Complex64::new(1.0, 0.0));
        let m = MntsParams::standardized(1.2, 0.7, vec![-0.3, 0.2], vec![vec![1.0, 0.4], vec![0.4, 1.0]]).unwrap();
        assert_eq!(m.char_fn(&[0.0, 0.0]), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn symmetric_char_fn_is_real_and_even() {
        let p = StdNtsParams::new(0.8, 1.5, 0.0).unwrap();
        for u in [0.3, 1.0, 2.5, 7.0] {
            let a = p.char_fn(u);
            let b = p.char_fn(-u);
            assert!(a.im.abs() < 1e-15);
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn modulus_bounded_by_one() {
        for (a, t, b) in [(0.3, 0.2, 0.1), (1.0, 1.0, -0.5), (1.9, 5.0, 2.0)] {
            let p = StdNtsParams::new(a, t, b).unwrap();
            for k in 0..200 {
                let u = -50.0 + 0.5 * k as f64;
                assert!(p.char_fn(u).norm() <= 1.0 + 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_limit_char_fn() {
        let p = StdNtsParams::new(1.99, 1.0, 0.0).unwrap();
        for k in 0..=100 {
            let u = -5.0 + 0.1 * k as f64;
            assert!((p.char_fn(u).re - (-0.5 * u * u).exp()).abs() < 1e-2);
        }
    }

    #[test]
    fn moments_from_char_fn_derivatives() {
        // E[X] = -i phi'(0), E[X^2] = -phi''(0), by central differences.
        for (a, t, b) in [(1.2, 1.0, -0.2), (0.6, 0.4, 0.3), (1.7, 3.0, 1.0)] {
            let p = StdNtsParams::new(a, t, b).unwrap();
            let h = 1e-3;
            let d1 = (p.char_fn(h) - p.char_fn(-h)) / (2.0 * h);
            let d2 = (p.char_fn(h) - 2.0 * p.char_fn(0.0) + p.char_fn(-h)) / (h * h);
            let mean = (d1 * Complex64::new(0.0, -1.0)).re;
            let second = -d2.re;
            assert!(mean.abs() < 1e-4, "mean {mean}");
            assert!((second - 1.0).abs() < 1e-4, "second moment {second}");
        }
    }

    #[test]
    fn subordinator_has_unit_mean() {
        let s = SubordinatorParams::new(0.9, 0.5).unwrap();
        let h = 1e-5;
        let d = (s.laplace_exponent(Complex64::new(h, 0.0)) - s.laplace_exponent(Complex64::new(-h, 0.0))) / (2.0 * h);
        assert!((d.re + 1.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_params_are_domain_errors() {
        assert!(StdNtsParams::new(2.0, 1.0, 0.0).is_err());
        assert!(StdNtsParams::new(1.0, -1.0, 0.0).is_err());
        assert!(StdNtsParams::new(1.0, 1.0, 1.5).is_err());
        assert!(MntsParams::standardized(1.0, 1.0, vec![0.0, 0.0], vec![vec![1.0, 1.2], vec![1.2, 1.0]]).is_err());
    }
}
