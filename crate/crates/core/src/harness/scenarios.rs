//! Joint scenario generation per model and the synthetic data set.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::{Model, ModelEstimate, SimulationConfig};
use crate::data::ReturnPanel;
use crate::error::{Error, Result};
use crate::nts::{sqrt_factor, GridSettings, MntsParams, MntsSampler};
use crate::risk::ScenarioMatrix;
use crate::timeseries::{simulate_with_innovations, ArmaGarchParams, Innovation, Presample};

/// Seed of day `day` in a run seeded with `run_seed` (SplitMix64 finalizer).
///
/// Every model draws its scenarios from the same day seed.
pub fn day_seed(run_seed: u64, day: u64) -> u64 {
    let mut z = run_seed.wrapping_add(day.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standardized joint residual law of one model on one window.
#[derive(Debug, Clone)]
pub enum ScenarioModel {
    /// `eta = L z` with `L L' = R`.
    Gaussian { factor: Vec<Vec<f64>> },
    /// Gaussian copula with correlation `R` and unit-variance Student-t margins.
    StudentCopula { factor: Vec<Vec<f64>>, nu: Vec<f64> },
    /// Standard MNTS.
    Mnts(MntsSampler),
}

impl ScenarioModel {
    pub fn from_estimate(est: &ModelEstimate, grid: &GridSettings) -> Result<Self> {
        let factor = || sqrt_factor(&est.residual_corr);
        Ok(match est.model {
            Model::AgNormal => ScenarioModel::Gaussian { factor: factor() },
            Model::Agt => {
                let nu = est
                    .forecasts
                    .iter()
                    .map(|f| match f.law {
                        super::LawSpec::StudentT { nu } => Ok(nu),
                        other => Err(Error::Contract(format!("AGT forecast carries a {} law", other.label()))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ScenarioModel::StudentCopula { factor: factor(), nu }
            }
            Model::Agnts => {
                let p = est.mnts.clone().ok_or_else(|| Error::Contract("AGNTS estimate without MNTS parameters".into()))?;
                ScenarioModel::Mnts(MntsSampler::new(p, grid)?)
            }
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ScenarioModel::Gaussian { factor } | ScenarioModel::StudentCopula { factor, .. } => factor.len(),
            ScenarioModel::Mnts(s) => s.params().dim(),
        }
    }

    /// `n x dim` standardized draws, row-major.
    pub fn standardized<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        match self {
            ScenarioModel::Mnts(s) => s.sample_with(n, rng),
            ScenarioModel::Gaussian { factor } => correlated_normals(factor, n, rng),
            ScenarioModel::StudentCopula { factor, nu } => {
                let mut v = correlated_normals(factor, n, rng);
                let phi = Normal::new(0.0, 1.0).expect("valid");
                let margins: Vec<(StudentsT, f64)> = nu
                    .iter()
                    .map(|&nu| (StudentsT::new(0.0, 1.0, nu).expect("nu > 2"), ((nu - 2.0) / nu).sqrt()))
                    .collect();
                for row in v.chunks_exact_mut(d) {
                    for (x, (t, scale)) in row.iter_mut().zip(&margins) {
                        let u = phi.cdf(*x).clamp(1e-16, 1.0 - 1e-16);
                        *x = t.inverse_cdf(u) * scale;
                    }
                }
                v
            }
        }
    }

    /// Return scenarios `r = mu + sigma * eta` for seed `seed`.
    pub fn scenarios(&self, mu: &[f64], sigma: &[f64], n: usize, seed: u64, ids: Vec<String>) -> Result<ScenarioMatrix> {
        let d = self.dim();
        if mu.len() != d || sigma.len() != d {
            return Err(Error::Dimension { expected: d, got: mu.len().min(sigma.len()) });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = self.standardized(n, &mut rng);
        for row in v.chunks_exact_mut(d) {
            for ((x, m), s) in row.iter_mut().zip(mu).zip(sigma) {
                *x = m + s * *x;
            }
        }
        ScenarioMatrix::new(v, n, ids, Some(seed))
    }
}

fn correlated_normals<R: Rng + ?Sized>(factor: &[Vec<f64>], n: usize, rng: &mut R) -> Vec<f64> {
    let d = factor.len();
    let mut out = vec![0.0; n * d];
    let mut z = vec![0.0; d];
    for row in out.chunks_exact_mut(d) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for i in 0..d {
            row[i] = factor[i][..=i].iter().zip(&z).map(|(l, v)| l * v).sum();
        }
    }
    out
}

/// Data-generating process of [`simulate_panel`]: one ARMA(1,1)-GARCH(1,1)
/// filter per asset driven by standard MNTS innovations.
pub fn simulation_model(n_assets: usize) -> Result<(Vec<ArmaGarchParams>, MntsParams)> {
    if n_assets == 0 {
        return Err(Error::Config("the synthetic panel needs at least one asset".into()));
    }
    let garch = (0..n_assets)
        .map(|i| ArmaGarchParams {
            c: 0.001 + 0.0002 * i as f64,
            ar: 0.1,
            ma: -0.05,
            omega: 2e-5 * (1.0 + 0.25 * i as f64),
            a: 0.1,
            b: 0.85,
            dist: Innovation::Normal,
        })
        .collect();
    let beta = (0..n_assets).map(|i| -0.2 + 0.1 * (i % 3) as f64).collect();
    let corr = (0..n_assets).map(|i| (0..n_assets).map(|j| if i == j { 1.0 } else { 0.5 }).collect()).collect();
    Ok((garch, MntsParams::standardized(1.2, 1.0, beta, corr)?))
}

/// Synthetic daily return panel with asset ids `SIM1..` on consecutive calendar days.
pub fn simulate_panel(cfg: &SimulationConfig) -> Result<ReturnPanel> {
    const BURN_IN: usize = 200;
    let start = NaiveDate::parse_from_str(&cfg.start_date, "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("bad start_date {:?}: {e}", cfg.start_date)))?;
    let (garch, mnts) = simulation_model(cfg.assets)?;
    let sampler = MntsSampler::new(mnts, &GridSettings::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let eta = sampler.sample_with(cfg.length + BURN_IN, &mut rng);
    let d = cfg.assets;
    let returns = garch
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let col: Vec<f64> = eta.iter().skip(i).step_by(d).copied().collect();
            let pre = Presample { r: p.c / (1.0 - p.ar), eps: 0.0, sigma2: p.omega / (1.0 - p.a - p.b) };
            let mut r = simulate_with_innovations(p, &col, pre);
            r.drain(..BURN_IN);
            r
        })
        .collect();
    Ok(ReturnPanel {
        asset_ids: (1..=d).map(|i| format!("SIM{i}")).collect(),
        dates: (0..cfg.length).map(|t| start + Duration::days(t as i64)).collect(),
        returns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{AssetForecast, LawSpec};

    fn estimate(model: Model, law: LawSpec, rho: f64) -> ModelEstimate {
        let f = AssetForecast { mu: 0.0, sigma: 1.0, law, var: 0.0, avar: 0.0, realized: None, pit: None };
        ModelEstimate {
            model,
            forecasts: vec![f.clone(), f],
            residual_corr: vec![vec![1.0, rho], vec![rho, 1.0]],
            mnts: None,
            ks: vec![],
            ad: vec![],
        }
    }

    fn moments(m: &ScenarioMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
        (m.column_means(), m.covariance())
    }

    #[test]
    fn day_seeds_are_distinct_and_stable() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|d| day_seed(42, d)).collect();
        assert_eq!(s.len(), 1000);
        assert_eq!(day_seed(42, 3), day_seed(42, 3));
        assert_ne!(day_seed(42, 3), day_seed(43, 3));
    }

    #[test]
    fn copula_margins_are_standardized_with_target_correlation() {
        let grid = GridSettings::default();
        for (model, law) in [(Model::AgNormal, LawSpec::Normal), (Model::Agt, LawSpec::StudentT { nu: 6.0 })] {
            let sm = ScenarioModel::from_estimate(&estimate(model, law, 0.6), &grid).unwrap();
            let s = sm.scenarios(&[0.01, -0.02], &[2.0, 0.5], 100_000, 9, vec!["a".into(), "b".into()]).unwrap();
            let (m, c) = moments(&s);
            assert!((m[0] - 0.01).abs() < 0.03 && (m[1] + 0.02).abs() < 0.008, "{m:?}");
            assert!((c[0][0] / 4.0 - 1.0).abs() < 0.05, "{c:?}");
            assert!((c[1][1] / 0.25 - 1.0).abs() < 0.05, "{c:?}");
            let r = c[0][1] / (c[0][0] * c[1][1]).sqrt();
            // the t copula margins slightly dampen Pearson correlation
            assert!((r - 0.6).abs() < 0.03, "{model}: {r}");
        }
    }

    #[test]
    fn same_seed_same_scenarios() {
        let sm = ScenarioModel::from_estimate(&estimate(Model::AgNormal, LawSpec::Normal, 0.2), &GridSettings::default())
            .unwrap();
        let ids = || vec!["a".to_string(), "b".to_string()];
        let a = sm.scenarios(&[0.0; 2], &[1.0; 2], 100, 5, ids()).unwrap();
        let b = sm.scenarios(&[0.0; 2], &[1.0; 2], 100, 5, ids()).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn synthetic_panel_shape() {
        let cfg = SimulationConfig { assets: 3, length: 50, ..Default::default() };
        let p = simulate_panel(&cfg).unwrap();
        assert_eq!(p.n_assets(), 3);
        assert_eq!(p.len(), 50);
        assert!(p.returns.iter().flatten().all(|r| r.is_finite()));
        assert_eq!(p, simulate_panel(&cfg).unwrap());
    }
}
