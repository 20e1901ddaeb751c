//! Densities, distribution functions and quantiles from characteristic functions
//! by discrete Fourier inversion on a uniform grid.

use std::cell::RefCell;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{NtsParams, StdNtsParams, SubordinatorParams};
use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Inversion grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSettings {
    /// log2 of the initial number of grid points.
    pub log2_points: u32,
    /// Upper limit when the grid is refined to meet `cf_cutoff`.
    pub max_log2_points: u32,
    /// Required characteristic-function modulus at the Nyquist frequency.
    pub cf_cutoff: f64,
    /// Probability mass allowed outside each end of the grid (Chernoff bound).
    pub tail_mass: f64,
    /// Densities below `pdf_floor * max(pdf)` are replaced by exponential tails.
    pub pdf_floor: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self { log2_points: 16, max_log2_points: 20, cf_cutoff: 1e-10, tail_mass: 1e-12, pdf_floor: 1e-10 }
    }
}

/// Density at `x_k = x_lo + k dx`, `k = 0..n`, from the characteristic function `cf`.
///
/// The integral `(1/2pi) int cf(u) exp(-iux) du` is discretized on
/// `u_j = (j - n/2) du` with `du dx = 2pi / n` and evaluated with one FFT.
/// `cf` must be the characteristic function of a real random variable
/// (`cf(-u) = conj(cf(u))`); only non-negative frequencies are evaluated.
pub fn density_on_grid<F: Fn(f64) -> Complex64>(cf: F, x_lo: f64, dx: f64, n: usize) -> Vec<f64> {
    let du = std::f64::consts::TAU / (n as f64 * dx);
    let half = n / 2;
    let positive: Vec<Complex64> = (0..=half).map(|m| cf(m as f64 * du)).collect();
    let mut buf: Vec<Complex64> = (0..n)
        .map(|j| {
            let u = (j as f64 - half as f64) * du;
            let v = if j >= half { positive[j - half] } else { positive[half - j].conj() };
            v * Complex64::from_polar(1.0, -u * x_lo)
        })
        .collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    let scale = du / std::f64::consts::TAU;
    buf.iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { v.re * scale } else { -v.re * scale })
        .collect()
}

/// Tabulated density with its distribution function and partial first moment.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    x0: f64,
    dx: f64,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
    /// `int_{x0}^{x_k} t f(t) dt`
    m1: Vec<f64>,
    k_lo: usize,
    k_hi: usize,
    left_slope: f64,
    right_slope: f64,
}

impl Table {
    pub fn from_density(x0: f64, dx: f64, raw_pdf: Vec<f64>, floor_rel: f64) -> Self {
        let n = raw_pdf.len();
        let mut pdf: Vec<f64> = raw_pdf.into_iter().map(|v| v.max(0.0)).collect();
        let peak = pdf.iter().copied().fold(0.0, f64::max);
        let floor = peak * floor_rel;
        let k_lo = pdf.iter().position(|v| *v >= floor).unwrap_or(0);
        let k_hi = pdf.iter().rposition(|v| *v >= floor).unwrap_or(n - 1);

        // exponential tails beyond the reliable range
        let span = ((k_hi - k_lo) / 20).max(1);
        let slope = |a: usize, b: usize| (pdf[b].ln() - pdf[a].ln()) / ((b - a) as f64 * dx);
        let left_slope = if k_lo + span <= k_hi { slope(k_lo, k_lo + span).max(1e-3) } else { 1.0 };
        let right_slope = if k_hi >= k_lo + span { (-slope(k_hi - span, k_hi)).max(1e-3) } else { 1.0 };
        for k in 0..k_lo {
            pdf[k] = pdf[k_lo] * (-(left_slope * (k_lo - k) as f64 * dx)).exp();
        }
        for k in k_hi + 1..n {
            pdf[k] = pdf[k_hi] * (-(right_slope * (k - k_hi) as f64 * dx)).exp();
        }

        let mut cdf = vec![0.0; n];
        let mut m1 = vec![0.0; n];
        for k in 1..n {
            let xa = x0 + (k - 1) as f64 * dx;
            let xb = xa + dx;
            cdf[k] = cdf[k - 1] + 0.5 * dx * (pdf[k - 1] + pdf[k]);
            m1[k] = m1[k - 1] + 0.5 * dx * (xa * pdf[k - 1] + xb * pdf[k]);
        }
        let total = cdf[n - 1];
        if total > 0.0 {
            cdf.iter_mut().for_each(|c| *c = (*c / total).clamp(0.0, 1.0));
            m1.iter_mut().for_each(|m| *m /= total);
            pdf.iter_mut().for_each(|p| *p /= total);
        }
        for k in 1..n {
            if cdf[k] < cdf[k - 1] {
                cdf[k] = cdf[k - 1];
            }
        }
        Self { x0, dx, pdf, cdf, m1, k_lo, k_hi, left_slope, right_slope }
    }

    pub fn len(&self) -> usize {
        self.pdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pdf.is_empty()
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x0 + k as f64 * self.dx
    }

    pub fn grid(&self) -> (f64, f64) {
        (self.x0, self.x(self.len() - 1))
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let pos = (x - self.x0) / self.dx;
        if !(pos >= 0.0) || pos >= (self.len() - 1) as f64 {
            return None;
        }
        let k = pos.floor() as usize;
        Some((k, pos - k as f64))
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let (xl, xh) = (self.x(self.k_lo), self.x(self.k_hi));
        if x < xl {
            return self.pdf[self.k_lo].ln() - self.left_slope * (xl - x);
        }
        if x > xh {
            return self.pdf[self.k_hi].ln() - self.right_slope * (x - xh);
        }
        match self.locate(x) {
            Some((k, t)) => ((1.0 - t) * self.pdf[k] + t * self.pdf[k + 1]).max(f64::MIN_POSITIVE).ln(),
            None => self.pdf[self.len() - 1].max(f64::MIN_POSITIVE).ln(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((k, t)) => (1.0 - t) * self.cdf[k] + t * self.cdf[k + 1],
            None if x < self.x0 => 0.0,
            None => 1.0,
        }
    }

    /// Inverse of [`Table::cdf`] by monotone linear interpolation.
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.len();
        if q <= self.cdf[0] {
            return self.x0;
        }
        if q >= self.cdf[n - 1] {
            return self.x(n - 1);
        }
        // first index with cdf >= q
        let hi = self.cdf.partition_point(|c| *c < q);
        let lo = hi - 1;
        let (c0, c1) = (self.cdf[lo], self.cdf[hi]);
        let t = if c1 > c0 { (q - c0) / (c1 - c0) } else { 0.0 };
        self.x(lo) + t * self.dx
    }

    /// `int_{-inf}^{x} t f(t) dt`
    pub fn partial_mean(&self, x: f64) -> f64 {
        match self.locate(x) {
            Some((k, t)) => (1.0 - t) * self.m1[k] + t * self.m1[k + 1],
            None if x < self.x0 => 0.0,
            None => self.m1[self.len() - 1],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

fn choose_points(settings: &GridSettings, width: f64, cf_mod: impl Fn(f64) -> f64) -> Result<usize> {
    let mut log2 = settings.log2_points;
    loop {
        let n = 1usize << log2;
        let dx = width / n as f64;
        let nyquist = std::f64::consts::PI / dx;
        let m = cf_mod(nyquist);
        if m < settings.cf_cutoff {
            return Ok(n);
        }
        if log2 >= settings.max_log2_points {
            return Err(Error::Accuracy(format!(
                "|cf| = {m:.3e} at Nyquist frequency {nyquist:.1} with 2^{log2} points over width {width:.2}; cutoff {:.1e}",
                settings.cf_cutoff
            )));
        }
        log2 += 1;
    }
}

/// Univariate NTS law with FFT-tabulated density and distribution function.
#[derive(Debug, Clone, PartialEq)]
pub struct NtsDist {
    pub params: NtsParams,
    table: Table,
}

impl NtsDist {
    pub fn new(params: NtsParams, settings: &GridSettings) -> Result<Self> {
        params.validate()?;
        let (left_rate, right_rate) = params.tail_rates();
        let sd = params.variance().sqrt();
        let ln_tol = settings.tail_mass.ln();
        let reach = |rate: f64, sign: f64| {
            let s = 0.5 * rate;
            let bound = (params.ln_mgf(sign * s) - sign * s * params.mu - ln_tol) / s;
            bound.max(12.0 * sd)
        };
        let half_width = 1.1 * reach(left_rate, -1.0).max(reach(right_rate, 1.0));
        let n = choose_points(settings, 2.0 * half_width, |u| params.char_fn(u).norm())?;
        let dx = 2.0 * half_width / n as f64;
        let x0 = params.mu - half_width;
        let pdf = density_on_grid(|u| params.char_fn(u), x0, dx, n);
        Ok(Self { params, table: Table::from_density(x0, dx, pdf, settings.pdf_floor) })
    }

    pub fn standard(p: StdNtsParams, settings: &GridSettings) -> Result<Self> {
        Self::new(p.as_nts(), settings)
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.table.cdf(x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.table.pdf(x)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        self.table.ln_pdf(x)
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {q}")));
        }
        Ok(self.table.quantile(q))
    }

    /// Lower-tail conditional mean `E[X | X <= q_eps]`.
    pub fn tail_mean(&self, eps: f64) -> Result<f64> {
        let q = self.quantile(eps)?;
        Ok(self.table.partial_mean(q) / eps)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.table.sample(rng)
    }
}

/// Inverse-CDF table for the unit-mean subordinator `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubordinatorTable {
    pub params: SubordinatorParams,
    table: Table,
}

impl SubordinatorTable {
    pub fn new(params: SubordinatorParams, settings: &GridSettings) -> Result<Self> {
        let s = 0.5 * params.theta;
        let ln_mgf = params.laplace_exponent(Complex64::new(-s, 0.0)).re;
        let sd = params.variance().sqrt();
        let x_hi = 1.1 * ((ln_mgf - settings.tail_mass.ln()) / s).max(1.0 + 12.0 * sd);
        let x_lo = -0.02 * x_hi;
        let width = x_hi - x_lo;
        let n = choose_points(settings, width, |u| params.char_fn(u).norm())?;
        let dx = width / n as f64;
        let pdf = density_on_grid(|u| params.char_fn(u), x_lo, dx, n);
        Ok(Self { params, table: Table::from_density(x_lo, dx, pdf, settings.pdf_floor) })
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.table.sample(rng).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn fft_recovers_gaussian_density() {
        let pdf = density_on_grid(|u| Complex64::new((-0.5 * u * u).exp(), 0.0), -20.0, 40.0 / 4096.0, 4096);
        for (k, v) in pdf.iter().enumerate() {
            let x = -20.0 + k as f64 * 40.0 / 4096.0;
            let exact = (-0.5 * x * x).exp() / std::f64::consts::TAU.sqrt();
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_cdf_at_zero() {
        let d = NtsDist::standard(StdNtsParams::new(1.1, 0.8, 0.0).unwrap(), &GridSettings::default()).unwrap();
        assert!((d.cdf(0.0) - 0.5).abs() < 1e-6);
        assert!(d.quantile(0.5).unwrap().abs() < 1e-5);
    }

    #[test]
    fn gaussian_limit_cdf_and_quantile() {
        let d = NtsDist::standard(StdNtsParams::new(1.99, 1.0, 0.0).unwrap(), &GridSettings::default()).unwrap();
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!((d.cdf(1.96) - 0.975).abs() < 1e-2);
        for x in [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0] {
            assert!((d.cdf(x) - n.cdf(x)).abs() < 1e-2);
        }
        assert!((d.quantile(0.01).unwrap() + 2.3263).abs() < 1e-2);
    }

    #[test]
    fn cdf_limits_and_monotone() {
        let d = NtsDist::standard(StdNtsParams::new(0.7, 0.3, -0.4).unwrap(), &GridSettings::default()).unwrap();
        let (lo, hi) = d.table().grid();
        assert!(d.cdf(lo) < 1e-9);
        assert!(d.cdf(hi) > 1.0 - 1e-9);
        assert!(d.table().cdf_values().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn quantile_round_trips() {
        let d = NtsDist::standard(StdNtsParams::new(1.2, 1.0, -0.2).unwrap(), &GridSettings::default()).unwrap();
        for k in 0..=100 {
            let x = -5.0 + 0.1 * k as f64;
            assert!((d.quantile(d.cdf(x)).unwrap() - x).abs() < 1e-4, "x = {x}");
        }
        for q in [1e-4, 0.01, 0.3, 0.5, 0.9, 0.999] {
            assert!((d.cdf(d.quantile(q).unwrap()) - q).abs() < 1e-5);
        }
        assert!(d.quantile(0.0).is_err() && d.quantile(1.0).is_err());
    }

    #[test]
    fn tabulated_moments() {
        let d = NtsDist::standard(StdNtsParams::new(0.9, 0.6, 0.35).unwrap(), &GridSettings::default()).unwrap();
        let t = d.table();
        let (mut m1, mut m2) = (0.0, 0.0);
        for k in 0..t.len() {
            let x = t.x(k);
            let w = t.pdf(x) * t.dx();
            m1 += x * w;
            m2 += x * x * w;
        }
        assert!(m1.abs() < 1e-6, "{m1}");
        assert!((m2 - 1.0).abs() < 1e-5, "{m2}");
    }

    #[test]
    fn subordinator_table_mean_one() {
        for (a, th) in [(1.2, 1.0), (0.8, 0.5), (1.99, 1.0)] {
            let t = SubordinatorTable::new(SubordinatorParams::new(a, th).unwrap(), &GridSettings::default()).unwrap();
            let tab = t.table();
            let (_, hi) = tab.grid();
            let mean = tab.partial_mean(hi);
            assert!((mean - 1.0).abs() < 1e-5, "alpha {a}: mean {mean}");
        }
    }

    #[test]
    fn too_coarse_grid_is_accuracy_error() {
        let s = GridSettings { log2_points: 6, max_log2_points: 6, ..Default::default() };
        let r = NtsDist::standard(StdNtsParams::new(0.3, 1.0, 0.0).unwrap(), &s);
        assert!(matches!(r, Err(Error::Accuracy(_))));
    }
}
