//! ARMA(1,1)-GARCH(1,1) estimation, filtering, simulation and one-step forecasts.
//!
//! Conditional mean and variance recursions:
//!
//! ```text
//! mu_t      = c + ar * r_{t-1} + ma * eps_{t-1}
//! sigma_t^2 = omega + a * eps_{t-1}^2 + b * sigma_{t-1}^2
//! eps_t     = r_t - mu_t,   eta_t = eps_t / sigma_t
//! ```
//!
//! The recursion starts from a presample state `(r_0, eps_0, sigma_0^2)`; by default
//! `r_0` is the window mean, `eps_0 = 0` and `sigma_0^2` is the window variance.
//! Innovations `eta_t` are standard normal or Student-t rescaled to unit variance.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::optim::{bfgs, BfgsOptions};

/// Upper bound on `a + b` enforced by the parameter transform.
pub const MAX_PERSISTENCE: f64 = 1.0 - 1e-6;
const MAX_LOG_NU_EXCESS: f64 = 7.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Innovation {
    Normal,
    StudentT { nu: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnovationFamily {
    Normal,
    StudentT,
}

impl Innovation {
    pub fn family(&self) -> InnovationFamily {
        match self {
            Innovation::Normal => InnovationFamily::Normal,
            Innovation::StudentT { .. } => InnovationFamily::StudentT,
        }
    }

    /// Log-density of the unit-variance innovation.
    pub fn ln_pdf(&self, eta: f64) -> f64 {
        match *self {
            Innovation::Normal => -0.5 * (std::f64::consts::TAU.ln() + eta * eta),
            Innovation::StudentT { nu } => {
                student_t_ln_const(nu) - 0.5 * (nu + 1.0) * (eta * eta / (nu - 2.0)).ln_1p()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Innovation::Normal => rng.sample(StandardNormal),
            Innovation::StudentT { nu } => {
                let z: f64 = rng.sample(StandardNormal);
                let w = ChiSquared::new(nu).expect("nu > 2").sample(rng);
                z * ((nu - 2.0) / w).sqrt()
            }
        }
    }
}

fn student_t_ln_const(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaGarchParams {
    pub c: f64,
    pub ar: f64,
    pub ma: f64,
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    pub dist: Innovation,
}

impl ArmaGarchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("ARMA-GARCH parameters: {m}")));
        if !(self.omega > 0.0) {
            return bad("omega must be positive");
        }
        if !(self.a >= 0.0 && self.b >= 0.0) {
            return bad("a and b must be non-negative");
        }
        if !(self.a + self.b < 1.0) {
            return bad("a + b must be below 1");
        }
        if !(self.ar.abs() < 1.0) {
            return bad("|ar| must be below 1");
        }
        if let Innovation::StudentT { nu } = self.dist {
            if !(nu > 2.0) {
                return bad("Student-t degrees of freedom must exceed 2");
            }
        }
        if ![self.c, self.ar, self.ma].iter().all(|v| v.is_finite()) {
            return bad("non-finite mean parameters");
        }
        Ok(())
    }
}

/// Pre-sample state feeding the first recursion step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Presample {
    pub r: f64,
    pub eps: f64,
    pub sigma2: f64,
}

impl Presample {
    /// Window mean, zero innovation, window (population) variance.
    pub fn from_data(r: &[f64]) -> Self {
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { r: mean, eps: 0.0, sigma2: var }
    }
}

/// Filtered innovations and conditional variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub eps: Vec<f64>,
    pub sigma2: Vec<f64>,
}

impl Filtered {
    pub fn eta(&self) -> Vec<f64> {
        self.eps.iter().zip(&self.sigma2).map(|(e, s2)| e / s2.sqrt()).collect()
    }
}

/// Runs the ARMA-GARCH recursion over `r`.
pub fn filter(params: &ArmaGarchParams, r: &[f64], pre: Presample) -> Filtered {
    let mut eps = Vec::with_capacity(r.len());
    let mut sigma2 = Vec::with_capacity(r.len());
    let (mut r_prev, mut e_prev, mut s2_prev) = (pre.r, pre.eps, pre.sigma2);
    for &rt in r {
        let mu = params.c + params.ar * r_prev + params.ma * e_prev;
        let s2 = params.omega + params.a * e_prev * e_prev + params.b * s2_prev;
        let e = rt - mu;
        eps.push(e);
        sigma2.push(s2);
        r_prev = rt;
        e_prev = e;
        s2_prev = s2;
    }
    Filtered { eps, sigma2 }
}

/// Conditional log-likelihood of `r` under `params`.
pub fn log_likelihood(params: &ArmaGarchParams, r: &[f64], pre: Presample) -> f64 {
    let (mut r_prev, mut e_prev, mut s2_prev) = (pre.r, pre.eps, pre.sigma2);
    let mut ll = 0.0;
    let (t_const, nu) = match params.dist {
        Innovation::Normal => (0.0, 0.0),
        Innovation::StudentT { nu } => (student_t_ln_const(nu), nu),
    };
    let half_ln_tau = 0.5 * std::f64::consts::TAU.ln();
    for &rt in r {
        let mu = params.c + params.ar * r_prev + params.ma * e_prev;
        let s2 = params.omega + params.a * e_prev * e_prev + params.b * s2_prev;
        if !(s2 > 0.0) || !s2.is_finite() {
            return f64::NEG_INFINITY;
        }
        let e = rt - mu;
        let z2 = e * e / s2;
        ll += match params.dist {
            Innovation::Normal => -half_ln_tau - 0.5 * (s2.ln() + z2),
            Innovation::StudentT { .. } => t_const - 0.5 * s2.ln() - 0.5 * (nu + 1.0) * (z2 / (nu - 2.0)).ln_1p(),
        };
        r_prev = rt;
        e_prev = e;
        s2_prev = s2;
    }
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Simulates returns driven by the given unit-variance innovations.
pub fn simulate_with_innovations(params: &ArmaGarchParams, eta: &[f64], pre: Presample) -> Vec<f64> {
    let (mut r_prev, mut e_prev, mut s2_prev) = (pre.r, pre.eps, pre.sigma2);
    eta.iter()
        .map(|&z| {
            let mu = params.c + params.ar * r_prev + params.ma * e_prev;
            let s2 = params.omega + params.a * e_prev * e_prev + params.b * s2_prev;
            let e = s2.sqrt() * z;
            let rt = mu + e;
            r_prev = rt;
            e_prev = e;
            s2_prev = s2;
            rt
        })
        .collect()
}

/// Simulates `n` returns with innovations drawn from `params.dist`, after
/// discarding `burn_in` steps started from the unconditional state.
pub fn simulate<R: Rng + ?Sized>(params: &ArmaGarchParams, n: usize, burn_in: usize, rng: &mut R) -> Vec<f64> {
    let uncond_var = params.omega / (1.0 - params.a - params.b);
    let uncond_mean = params.c / (1.0 - params.ar);
    let pre = Presample { r: uncond_mean, eps: 0.0, sigma2: uncond_var };
    let eta: Vec<f64> = (0..n + burn_in).map(|_| params.dist.sample(rng)).collect();
    let mut r = simulate_with_innovations(params, &eta, pre);
    r.drain(..burn_in);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Minimum series length accepted for estimation.
    pub min_length: usize,
    pub bfgs: BfgsOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { min_length: 100, bfgs: BfgsOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    /// Index of the multi-start that produced the reported optimum.
    pub best_start: usize,
    /// Log-likelihood at each multi-start initial point.
    pub start_logliks: Vec<f64>,
    /// Log-likelihood reached from each multi-start.
    pub final_logliks: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: ArmaGarchParams,
    pub presample: Presample,
    /// Estimation sample.
    pub returns: Vec<f64>,
    /// Standardized residuals `eta_t`.
    pub residuals: Vec<f64>,
    /// Raw innovations `eps_t`.
    pub eps: Vec<f64>,
    /// Conditional volatility path `sigma_t`.
    pub sigma: Vec<f64>,
    pub loglik: f64,
    pub convergence: Convergence,
}

impl GarchFit {
    /// Builds a fit object for fixed parameters, refiltering `returns`.
    pub fn from_params(params: ArmaGarchParams, returns: &[f64], presample: Presample) -> Self {
        let f = filter(&params, returns, presample);
        let loglik = log_likelihood(&params, returns, presample);
        Self {
            params,
            presample,
            returns: returns.to_vec(),
            residuals: f.eta(),
            sigma: f.sigma2.iter().map(|s| s.sqrt()).collect(),
            eps: f.eps,
            loglik,
            convergence: Convergence {
                converged: true,
                best_start: 0,
                start_logliks: vec![],
                final_logliks: vec![],
                iterations: 0,
                evaluations: 0,
            },
        }
    }
}

/// Unconstrained coordinates: `[c/s, atanh ar, atanh ma, ln(omega/s^2), logit p, logit share, ln(nu-2)]`
/// where `s` is the sample scale, `p = (a+b)/MAX_PERSISTENCE` and `share = a/(a+b)`.
fn decode(x: &[f64], scale: f64, family: InnovationFamily) -> ArmaGarchParams {
    let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
    let p = MAX_PERSISTENCE * logistic(x[4]);
    let share = logistic(x[5]);
    ArmaGarchParams {
        c: x[0] * scale,
        ar: x[1].tanh(),
        ma: x[2].tanh(),
        omega: x[3].exp() * scale * scale,
        a: p * share,
        b: p * (1.0 - share),
        dist: match family {
            InnovationFamily::Normal => Innovation::Normal,
            InnovationFamily::StudentT => Innovation::StudentT { nu: 2.0 + x[6].min(MAX_LOG_NU_EXCESS).exp() },
        },
    }
}

fn encode(p: &ArmaGarchParams, scale: f64) -> Vec<f64> {
    let logit = |v: f64| (v / (1.0 - v)).ln();
    let clamp = |v: f64| v.clamp(1e-9, 1.0 - 1e-9);
    let pers = clamp((p.a + p.b) / MAX_PERSISTENCE);
    let share = clamp(p.a / (p.a + p.b).max(1e-12));
    let mut x = vec![
        p.c / scale,
        p.ar.clamp(-0.999, 0.999).atanh(),
        p.ma.clamp(-0.999, 0.999).atanh(),
        (p.omega / (scale * scale)).ln(),
        logit(pers),
        logit(share),
    ];
    if let Innovation::StudentT { nu } = p.dist {
        x.push((nu - 2.0).ln());
    }
    x
}

/// Deterministic multi-start points `(ar, ma, a, b)`.
const STARTS: [(f64, f64, f64, f64); 5] = [
    (0.0, 0.0, 0.05, 0.90),
    (0.1, 0.0, 0.10, 0.80),
    (0.0, 0.1, 0.15, 0.60),
    (0.3, -0.3, 0.05, 0.94),
    (-0.1, 0.1, 0.20, 0.20),
];
const T_START_NU: f64 = 6.0;

/// Maximum-likelihood ARMA(1,1)-GARCH(1,1) fit from five deterministic starts.
///
/// On non-convergence the best-effort fit is returned inside
/// [`FitError::NotConverged`].
pub fn fit_arma_garch(r: &[f64], family: InnovationFamily, opts: &FitOptions) -> std::result::Result<GarchFit, FitError> {
    if r.len() < opts.min_length {
        return Err(FitError::Failed(Error::InsufficientData { needed: opts.min_length, got: r.len() }));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(FitError::Failed(Error::Validation("non-finite return".into())));
    }
    let pre = Presample::from_data(r);
    let scale = pre.sigma2.sqrt();
    let max_abs = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 1e-12 * max_abs) || scale == 0.0 {
        return Err(FitError::Failed(Error::Degenerate("constant series has zero variance".into())));
    }
    // Likelihood is evaluated on the rescaled sample `r / scale` for conditioning.
    let y: Vec<f64> = r.iter().map(|v| v / scale).collect();
    let pre_y = Presample { r: pre.r / scale, eps: 0.0, sigma2: 1.0 };
    let n = r.len() as f64;
    let objective = |x: &[f64]| -> f64 {
        let p = decode(x, 1.0, family);
        -log_likelihood(&p, &y, pre_y) / n
    };

    let mean = pre.r;
    let mut start_logliks = Vec::new();
    let mut final_logliks = Vec::new();
    let mut best: Option<(usize, crate::optim::Minimum)> = None;
    let mut iterations = 0;
    let mut evaluations = 0;
    let mut any_converged = false;
    for (k, &(ar, ma, a, b)) in STARTS.iter().enumerate() {
        let start = ArmaGarchParams {
            c: mean * (1.0 - ar),
            ar,
            ma,
            omega: pre.sigma2 * (1.0 - a - b),
            a,
            b,
            dist: match family {
                InnovationFamily::Normal => Innovation::Normal,
                InnovationFamily::StudentT => Innovation::StudentT { nu: T_START_NU },
            },
        };
        let x0 = encode(&start, scale);
        start_logliks.push(log_likelihood(&decode(&x0, scale, family), r, pre));
        let m = bfgs(objective, &x0, &opts.bfgs);
        iterations += m.iterations;
        evaluations += m.evaluations;
        any_converged |= m.converged;
        final_logliks.push(-m.f * n - n * scale.ln());
        if best.as_ref().map_or(true, |(_, b)| m.f < b.f) {
            best = Some((k, m));
        }
    }
    let (best_start, m) = best.expect("at least one start");
    let params = decode(&m.x, scale, family);
    let mut fit = GarchFit::from_params(params, r, pre);
    fit.convergence = Convergence {
        converged: any_converged && fit.loglik.is_finite(),
        best_start,
        start_logliks,
        final_logliks,
        iterations,
        evaluations,
    };
    if fit.convergence.converged {
        Ok(fit)
    } else {
        Err(FitError::NotConverged(Box::new(fit)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("ARMA-GARCH estimation did not converge (best loglik {})", .0.loglik)]
    NotConverged(Box<GarchFit>),
    #[error(transparent)]
    Failed(#[from] Error),
}

impl From<FitError> for Error {
    fn from(e: FitError) -> Self {
        match e {
            FitError::NotConverged(f) => Error::Estimation(format!("no multi-start converged; best loglik {}", f.loglik)),
            FitError::Failed(e) => e,
        }
    }
}

/// Recomputes standardized residuals from the fitted parameters.
pub fn filter_residuals(fit: &GarchFit) -> Vec<f64> {
    filter(&fit.params, &fit.returns, fit.presample).eta()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub mu_next: f64,
    pub sigma_next: f64,
}

/// Final recursion state of a filtered sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub r_last: f64,
    pub eps_last: f64,
    pub sigma2_last: f64,
}

pub fn forecast_from_state(params: &ArmaGarchParams, s: FilterState) -> Forecast {
    let mu_next = params.c + params.ar * s.r_last + params.ma * s.eps_last;
    let var = params.omega + params.a * s.eps_last * s.eps_last + params.b * s.sigma2_last;
    Forecast { mu_next, sigma_next: var.sqrt() }
}

pub fn forecast_one_step(fit: &GarchFit) -> Forecast {
    let state = match (fit.returns.last(), fit.eps.last(), fit.sigma.last()) {
        (Some(&r), Some(&e), Some(&s)) => FilterState { r_last: r, eps_last: e, sigma2_last: s * s },
        _ => FilterState { r_last: fit.presample.r, eps_last: fit.presample.eps, sigma2_last: fit.presample.sigma2 },
    };
    forecast_from_state(&fit.params, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn garch(a: f64, b: f64) -> ArmaGarchParams {
        ArmaGarchParams { c: 0.0, ar: 0.0, ma: 0.0, omega: 1e-5, a, b, dist: Innovation::Normal }
    }

    #[test]
    fn collapsed_recursion_scales_by_root_omega() {
        let p = garch(0.0, 0.0);
        let r = [0.01, -0.02, 0.005, 0.0];
        let fit = GarchFit::from_params(p, &r, Presample::from_data(&r));
        for (eta, x) in fit.residuals.iter().zip(&r) {
            assert!((eta - x / 1e-5f64.sqrt()).abs() < 1e-12);
        }
        let f = forecast_one_step(&fit);
        assert!((f.sigma_next - 1e-5f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.mu_next, 0.0);
    }

    #[test]
    fn hand_set_forecast() {
        let p = ArmaGarchParams { c: 0.001, ar: 0.2, ma: 0.1, omega: 1e-5, a: 0.1, b: 0.8, dist: Innovation::Normal };
        let f = forecast_from_state(&p, FilterState { r_last: 0.05, eps_last: 0.04, sigma2_last: 0.03 * 0.03 });
        assert!((f.mu_next - 0.015).abs() < 1e-15);
        let expect = (1e-5f64 + 0.1 * 0.0016 + 0.8 * 0.0009).sqrt();
        assert!((f.sigma_next - expect).abs() < 1e-15);
    }

    #[test]
    fn refilter_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = simulate(&garch(0.1, 0.85), 400, 100, &mut rng);
        let fit = fit_arma_garch(&r, InnovationFamily::Normal, &FitOptions::default()).unwrap();
        let again = filter_residuals(&fit);
        assert_eq!(again, fit.residuals);
    }

    #[test]
    fn simulate_filter_round_trip() {
        let p = ArmaGarchParams { c: 1e-3, ar: 0.4, ma: -0.2, omega: 2e-5, a: 0.12, b: 0.8, dist: Innovation::StudentT { nu: 5.0 } };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eta: Vec<f64> = (0..2000).map(|_| p.dist.sample(&mut rng)).collect();
        let pre = Presample { r: 0.0, eps: 0.0, sigma2: 1e-4 };
        let r = simulate_with_innovations(&p, &eta, pre);
        let back = filter(&p, &r, pre).eta();
        for (x, y) in eta.iter().zip(&back) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn constant_series_is_degenerate() {
        let r = vec![0.01; 200];
        assert!(matches!(
            fit_arma_garch(&r, InnovationFamily::Normal, &FitOptions::default()),
            Err(FitError::Failed(Error::Degenerate(_)))
        ));
    }

    #[test]
    fn short_series_rejected() {
        let r: Vec<f64> = (0..50).map(|i| (i as f64).sin() * 0.01).collect();
        assert!(matches!(
            fit_arma_garch(&r, InnovationFamily::Normal, &FitOptions::default()),
            Err(FitError::Failed(Error::InsufficientData { .. }))
        ));
    }

    #[test]
    fn fit_dominates_start_points_and_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = simulate(&garch(0.1, 0.85), 1500, 200, &mut rng);
        for fam in [InnovationFamily::Normal, InnovationFamily::StudentT] {
            let fit = fit_arma_garch(&r, fam, &FitOptions::default()).unwrap();
            for s in &fit.convergence.start_logliks {
                assert!(fit.loglik >= *s);
            }
            assert!(fit.params.a + fit.params.b <= 1.0 - 1e-6);
            assert!(fit.sigma.iter().all(|s| *s > 0.0));
            let n = fit.residuals.len() as f64;
            let m = fit.residuals.iter().sum::<f64>() / n;
            let v = fit.residuals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            assert!(m.abs() < 0.1 && (v - 1.0).abs() < 0.15, "mean {m} var {v}");
        }
    }

    #[test]
    fn standardized_t_has_unit_variance() {
        let d = Innovation::StudentT { nu: 5.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let v = (0..n).map(|_| d.sample(&mut rng).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 1.0).abs() < 0.03, "{v}");
        // density integrates to one
        let h = 1e-3;
        let total: f64 = (-40_000..40_000).map(|i| d.ln_pdf(i as f64 * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-3);
    }
}
