//! Out-of-sample validation of VaR and AVaR forecasts.
//!
//! Three tests are provided: Christoffersen's conditional coverage
//! likelihood ratio (CLR), Berkowitz's censored tail likelihood ratio (BLR)
//! and the Acerbi-Szekely `Z` statistic (AS) with simulated p-values.
//! VaR and AVaR are loss-oriented: positive numbers are losses.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::forecast::MarginalForecast;
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Default tail probability (99% confidence).
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Minimum stream length for [`clr_test`].
pub const MIN_CLR_LENGTH: usize = 50;

/// Daily forecasts paired with realized returns.
#[derive(Debug, Clone)]
pub struct ForecastStream {
    pub dates: Vec<NaiveDate>,
    pub var: Vec<f64>,
    pub avar: Vec<f64>,
    pub realized: Vec<f64>,
    /// Per-day forecast law: distribution function for BLR and path simulator for AS.
    pub forecasts: Vec<MarginalForecast>,
}

impl ForecastStream {
    /// Builds a stream whose VaR/AVaR come from `forecasts` at level `epsilon`.
    pub fn from_forecasts(
        dates: Vec<NaiveDate>,
        forecasts: Vec<MarginalForecast>,
        realized: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let var = forecasts.iter().map(|f| f.var(epsilon)).collect::<Result<Vec<_>>>()?;
        let avar = forecasts.iter().map(|f| f.avar(epsilon)).collect::<Result<Vec<_>>>()?;
        let s = Self { dates, var, avar, realized, forecasts };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.realized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realized.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.realized.len();
        for (name, len) in [("var", self.var.len()), ("avar", self.avar.len()), ("forecasts", self.forecasts.len())] {
            if len != t {
                return Err(Error::Validation(format!("{name} has length {len}, realized has {t}")));
            }
        }
        if !self.dates.is_empty() && self.dates.len() != t {
            return Err(Error::Validation(format!("dates has length {}, realized has {t}", self.dates.len())));
        }
        if let Some(k) = (0..t).find(|&k| self.avar[k] < self.var[k]) {
            return Err(Error::Validation(format!("avar < var on day {k}")));
        }
        Ok(())
    }

    /// Sub-stream over the index range `r`.
    pub fn slice(&self, r: std::ops::Range<usize>) -> Self {
        Self {
            dates: if self.dates.is_empty() { Vec::new() } else { self.dates[r.clone()].to_vec() },
            var: self.var[r.clone()].to_vec(),
            avar: self.avar[r.clone()].to_vec(),
            realized: self.realized[r.clone()].to_vec(),
            forecasts: self.forecasts[r].to_vec(),
        }
    }
}

/// `I_t = 1` when the realized loss exceeds the VaR forecast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreachSeries {
    pub indicators: Vec<u8>,
}

impl BreachSeries {
    pub fn from_stream(f: &ForecastStream) -> Self {
        Self::from_parts(&f.realized, &f.var)
    }

    pub fn from_parts(realized: &[f64], var: &[f64]) -> Self {
        Self { indicators: realized.iter().zip(var).map(|(r, v)| u8::from(-r > *v)).collect() }
    }

    pub fn count(&self) -> usize {
        self.indicators.iter().map(|&i| i as usize).sum()
    }
}

/// `k ln p + (n - k) ln(1 - p)` with `0 ln 0 = 0`.
fn bernoulli_loglik(k: f64, n: f64, p: f64) -> f64 {
    let a = if k > 0.0 { k * p.ln() } else { 0.0 };
    let b = if n - k > 0.0 { (n - k) * (1.0 - p).ln() } else { 0.0 };
    a + b
}

fn chi2_2_survival(x: f64) -> f64 {
    1.0 - ChiSquared::new(2.0).expect("valid").cdf(x.max(0.0))
}

/// Christoffersen conditional coverage test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClrResult {
    pub lr_uc: f64,
    pub lr_ind: f64,
    pub lr_cc: f64,
    pub p_value: f64,
    pub breaches: usize,
    pub length: usize,
}

pub fn clr_test(b: &BreachSeries, epsilon: f64) -> Result<ClrResult> {
    let t = b.indicators.len();
    if t < MIN_CLR_LENGTH {
        return Err(Error::InsufficientData { needed: MIN_CLR_LENGTH, got: t });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let x = b.count() as f64;
    let n = t as f64;
    let pi_hat = x / n;
    let lr_uc = (2.0 * (bernoulli_loglik(x, n, pi_hat) - bernoulli_loglik(x, n, epsilon))).max(0.0);

    let mut c = [[0.0f64; 2]; 2];
    for w in b.indicators.windows(2) {
        c[w[0] as usize][w[1] as usize] += 1.0;
    }
    let (n0, n1) = (c[0][0] + c[0][1], c[1][0] + c[1][1]);
    // empty transition classes contribute zero log-likelihood
    let markov = |k: f64, m: f64| if m > 0.0 { bernoulli_loglik(k, m, k / m) } else { 0.0 };
    let l_markov = markov(c[0][1], n0) + markov(c[1][1], n1);
    let l_iid = markov(c[0][1] + c[1][1], n0 + n1);
    let lr_ind = (2.0 * (l_markov - l_iid)).max(0.0);
    let lr_cc = lr_uc + lr_ind;
    Ok(ClrResult { lr_uc, lr_ind, lr_cc, p_value: chi2_2_survival(lr_cc), breaches: x as usize, length: t })
}

/// Berkowitz censored tail test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrResult {
    pub lr: f64,
    pub p_value: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    /// Observations inside the tail.
    pub tail_count: usize,
    /// PIT values clipped away from 0 or 1.
    pub clipped: usize,
}

/// Clip applied to PIT values before the Gaussian transform.
pub const PIT_CLIP: f64 = 1e-10;

fn censored_loglik(z: &[f64], cutoff: f64, mu: f64, sigma: f64) -> f64 {
    let nd = Normal::new(0.0, 1.0).expect("valid");
    let mut tail = 0.0;
    let mut censored = 0usize;
    for &v in z {
        if v < cutoff {
            let s = (v - mu) / sigma;
            tail += -0.5 * s * s - 0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln();
        } else {
            censored += 1;
        }
    }
    let survive = 1.0 - nd.cdf((cutoff - mu) / sigma);
    let cens = if censored > 0 { censored as f64 * survive.max(f64::MIN_POSITIVE).ln() } else { 0.0 };
    tail + cens
}

/// Tail test on `z_t = Phi^-1(F_t(y_t))` censored at `Phi^-1(epsilon)`.
pub fn blr_tail_test(f: &ForecastStream, epsilon: f64) -> Result<BlrResult> {
    let pit: Vec<f64> = f.forecasts.iter().zip(&f.realized).map(|(fc, y)| fc.cdf(*y)).collect();
    blr_tail_test_pit(&pit, epsilon)
}

/// As [`blr_tail_test`] from precomputed probability integral transforms.
pub fn blr_tail_test_pit(pit: &[f64], epsilon: f64) -> Result<BlrResult> {
    if pit.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let nd = Normal::new(0.0, 1.0).expect("valid");
    let mut clipped = 0;
    let z: Vec<f64> = pit
        .iter()
        .map(|&u| {
            let c = u.clamp(PIT_CLIP, 1.0 - PIT_CLIP);
            if c != u {
                clipped += 1;
            }
            nd.inverse_cdf(c)
        })
        .collect();
    let cutoff = nd.inverse_cdf(epsilon);
    let tail_count = z.iter().filter(|v| **v < cutoff).count();

    let null = censored_loglik(&z, cutoff, 0.0, 1.0);
    let nll = |p: &[f64]| {
        let v = -censored_loglik(&z, cutoff, p[0], p[1].exp());
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let opts = NelderMeadOptions { max_evaluations: 4000, f_tol: 1e-12, x_tol: 1e-9, initial_step: 0.5 };
    let mut best = nelder_mead(nll, &[0.0, 0.0], &opts);
    if tail_count >= 2 {
        let tail: Vec<f64> = z.iter().copied().filter(|v| *v < cutoff).collect();
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        let s = (tail.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / tail.len() as f64).sqrt().max(0.05);
        let alt = nelder_mead(nll, &[m, s.ln()], &opts);
        if alt.f < best.f {
            best = alt;
        }
    }
    let alt_ll = (-best.f).max(null);
    let (mu_hat, sigma_hat) = if -best.f >= null { (best.x[0], best.x[1].exp()) } else { (0.0, 1.0) };
    let lr = 2.0 * (alt_ll - null);
    Ok(BlrResult { lr, p_value: chi2_2_survival(lr), mu_hat, sigma_hat, tail_count, clipped })
}

/// Acerbi-Szekely test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsResult {
    pub z_stat: f64,
    pub p_value: f64,
    pub n_sim: usize,
    /// Mean of the simulated statistics.
    pub sim_mean: f64,
}

/// `Z = sum_t R_t I_t / (T eps AVaR_t) + 1`.
pub fn as_statistic(realized: &[f64], var: &[f64], avar: &[f64], epsilon: f64) -> Result<f64> {
    let t = realized.len();
    if var.len() != t || avar.len() != t {
        return Err(Error::Dimension { expected: t, got: var.len().min(avar.len()) });
    }
    if t == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(k) = avar.iter().position(|a| !(*a > 0.0)) {
        return Err(Error::Contract(format!("AVaR forecast on day {k} is not a positive loss")));
    }
    let denom = t as f64 * epsilon;
    let s: f64 = (0..t).filter(|&k| -realized[k] > var[k]).map(|k| realized[k] / (denom * avar[k])).sum();
    Ok(s + 1.0)
}

/// Simulated left-tail p-value: the share of simulated `Z` at or below the observed one.
///
/// Replication `k` draws a full path from the per-day forecasts with a
/// ChaCha8 stream `k` of `seed`, so results do not depend on thread count.
pub fn as_test(f: &ForecastStream, epsilon: f64, n_sim: usize, seed: u64) -> Result<AsResult> {
    f.validate()?;
    let z_obs = as_statistic(&f.realized, &f.var, &f.avar, epsilon)?;
    let sims: Vec<f64> = (0..n_sim)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let path: Vec<f64> = f.forecasts.iter().map(|fc| fc.sample(&mut rng)).collect();
            as_statistic(&path, &f.var, &f.avar, epsilon).expect("validated inputs")
        })
        .collect();
    let below = sims.iter().filter(|z| **z <= z_obs).count();
    let sim_mean = sims.iter().sum::<f64>() / n_sim.max(1) as f64;
    Ok(AsResult { z_stat: z_obs, p_value: below as f64 / n_sim.max(1) as f64, n_sim, sim_mean })
}

/// Calendar sub-period used to split backtest reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    pub fn new(label: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Self {
        Self { label: label.into(), start, end }
    }

    /// Index range of `dates` (ordered) falling inside the period, inclusive of both ends.
    pub fn range(&self, dates: &[NaiveDate]) -> std::ops::Range<usize> {
        let a = dates.partition_point(|d| *d < self.start);
        let b = dates.partition_point(|d| *d <= self.end);
        a..b.max(a)
    }
}

/// The three evaluation periods of the reference crypto-asset study.
pub fn default_periods() -> Vec<Period> {
    let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
    vec![
        Period::new("Period 1", d(2017, 1, 12), d(2018, 3, 31)),
        Period::new("Period 2", d(2018, 4, 1), d(2019, 3, 31)),
        Period::new("Period 3", d(2019, 4, 1), d(2020, 3, 31)),
    ]
}

/// All three tests on one stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub clr: ClrResult,
    pub blr: BlrResult,
    pub as_test: AsResult,
}

pub fn run_all(f: &ForecastStream, epsilon: f64, n_sim: usize, seed: u64) -> Result<BacktestSummary> {
    Ok(BacktestSummary {
        clr: clr_test(&BreachSeries::from_stream(f), epsilon)?,
        blr: blr_tail_test(f, epsilon)?,
        as_test: as_test(f, epsilon, n_sim, seed)?,
    })
}
