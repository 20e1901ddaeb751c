//! One-day-ahead marginal return laws `r = mu + sigma * eta`.
//!
//! `eta` is a zero-mean, unit-variance innovation: Gaussian, standardized
//! Student-t or standard NTS. These laws feed the backtests (VaR/AVaR
//! forecasts, probability integral transforms and simulated paths).

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::nts::NtsDist;
use crate::timeseries::Innovation;

/// Law of a standardized innovation.
#[derive(Debug, Clone)]
pub enum StdLaw {
    Normal,
    /// Student-t rescaled to unit variance (`nu > 2`).
    StudentT { nu: f64 },
    Nts(Arc<NtsDist>),
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid")
}

fn t_scale(nu: f64) -> f64 {
    ((nu - 2.0) / nu).sqrt()
}

impl StdLaw {
    pub fn from_innovation(inn: &Innovation) -> Self {
        match *inn {
            Innovation::Normal => StdLaw::Normal,
            Innovation::StudentT { nu } => StdLaw::StudentT { nu },
        }
    }

    fn student(nu: f64) -> StudentsT {
        StudentsT::new(0.0, 1.0, nu).expect("nu > 2 by construction")
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match self {
            StdLaw::Normal => std_normal().cdf(z),
            StdLaw::StudentT { nu } => Self::student(*nu).cdf(z / t_scale(*nu)),
            StdLaw::Nts(d) => d.cdf(z),
        }
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {q}")));
        }
        Ok(match self {
            StdLaw::Normal => std_normal().inverse_cdf(q),
            StdLaw::StudentT { nu } => Self::student(*nu).inverse_cdf(q) * t_scale(*nu),
            StdLaw::Nts(d) => d.quantile(q)?,
        })
    }

    /// `E[eta | eta <= q_eps]`.
    pub fn tail_mean(&self, eps: f64) -> Result<f64> {
        let q = self.quantile(eps)?;
        Ok(match self {
            StdLaw::Normal => -std_normal().pdf(q) / eps,
            StdLaw::StudentT { nu } => {
                let s = t_scale(*nu);
                let qt = q / s;
                let dens = Self::student(*nu).pdf(qt);
                -s * (nu + qt * qt) / (nu - 1.0) * dens / eps
            }
            StdLaw::Nts(d) => d.tail_mean(eps)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            StdLaw::Normal => rng.sample(StandardNormal),
            StdLaw::StudentT { nu } => Innovation::StudentT { nu: *nu }.sample(rng),
            StdLaw::Nts(d) => d.sample(rng),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StdLaw::Normal => "normal",
            StdLaw::StudentT { .. } => "student-t",
            StdLaw::Nts(_) => "stdNTS",
        }
    }
}

/// Location-scale forecast of a single return.
#[derive(Debug, Clone)]
pub struct MarginalForecast {
    pub mu: f64,
    pub sigma: f64,
    pub law: StdLaw,
}

impl MarginalForecast {
    pub fn new(mu: f64, sigma: f64, law: StdLaw) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::Domain(format!("invalid location/scale ({mu}, {sigma})")));
        }
        Ok(Self { mu, sigma, law })
    }

    pub fn cdf(&self, r: f64) -> f64 {
        self.law.cdf((r - self.mu) / self.sigma)
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        Ok(self.mu + self.sigma * self.law.quantile(q)?)
    }

    /// Value at risk in loss units.
    pub fn var(&self, eps: f64) -> Result<f64> {
        Ok(-self.quantile(eps)?)
    }

    /// Average value at risk in loss units.
    pub fn avar(&self, eps: f64) -> Result<f64> {
        Ok(-(self.mu + self.sigma * self.law.tail_mean(eps)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.mu + self.sigma * self.law.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nts::{GridSettings, StdNtsParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mc_tail_mean(law: &StdLaw, eps: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut v: Vec<f64> = (0..400_000).map(|_| law.sample(&mut rng)).collect();
        v.sort_by(f64::total_cmp);
        let k = (v.len() as f64 * eps) as usize;
        v[..k].iter().sum::<f64>() / k as f64
    }

    #[test]
    fn normal_tail_values() {
        let f = MarginalForecast::new(0.0, 1.0, StdLaw::Normal).unwrap();
        assert!((f.var(0.01).unwrap() - 2.326_347_874).abs() < 1e-6);
        assert!((f.avar(0.01).unwrap() - 2.665_214_13).abs() < 1e-6);
    }

    #[test]
    fn student_tail_mean_matches_simulation() {
        let law = StdLaw::StudentT { nu: 4.0 };
        let exact = law.tail_mean(0.05).unwrap();
        let mc = mc_tail_mean(&law, 0.05);
        assert!((exact - mc).abs() < 0.03, "{exact} vs {mc}");
    }

    #[test]
    fn nts_tail_mean_matches_simulation() {
        let d = NtsDist::standard(StdNtsParams::new(1.2, 1.0, -0.3).unwrap(), &GridSettings::default()).unwrap();
        let law = StdLaw::Nts(Arc::new(d));
        let exact = law.tail_mean(0.05).unwrap();
        let mc = mc_tail_mean(&law, 0.05);
        assert!((exact - mc).abs() < 0.03, "{exact} vs {mc}");
    }

    #[test]
    fn location_scale() {
        let f = MarginalForecast::new(0.01, 0.02, StdLaw::StudentT { nu: 5.0 }).unwrap();
        let q = f.quantile(0.3).unwrap();
        assert!((f.cdf(q) - 0.3).abs() < 1e-9);
        assert!(f.avar(0.01).unwrap() > f.var(0.01).unwrap());
        assert!(MarginalForecast::new(0.0, 0.0, StdLaw::Normal).is_err());
    }
}
