//! Maximum-likelihood calibration of standard MNTS margins to standardized residuals.
//!
//! Shared `(alpha, theta)` are found by a profile search: a coarse grid over
//! `alpha x ln(theta)`, local grid refinement, then a Nelder-Mead polish. For each
//! candidate `(alpha, theta)` every margin's `beta_i` is optimized independently
//! (Brent). Margin densities come from FFT inversion on a fixed grid; the sample
//! is pre-binned on that grid so one likelihood evaluation costs one FFT.

use serde::{Deserialize, Serialize};

use super::inversion::density_on_grid;
use super::{beta_bound, MntsParams, StdNtsParams};
use crate::error::{Error, Result};
use crate::optim::{brent_minimize, nelder_mead, NelderMeadOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NtsFitOptions {
    /// Minimum number of observations per margin.
    pub min_obs: usize,
    pub alpha_range: (f64, f64),
    pub theta_range: (f64, f64),
    /// Coarse grid points per axis.
    pub coarse_points: usize,
    /// Rounds of 3x3 local grid refinement around the incumbent.
    pub refine_levels: usize,
    /// Final Nelder-Mead polish over `(alpha, ln theta)`.
    pub polish: bool,
    /// log2 of the likelihood-grid size.
    pub log2_points: u32,
    /// Half width of the likelihood grid (extended to cover the sample).
    pub half_width: f64,
    pub beta_tol: f64,
    /// `|beta_i|` above this fraction of its admissible bound is flagged and clamped.
    pub boundary_fraction: f64,
}

impl Default for NtsFitOptions {
    fn default() -> Self {
        Self {
            min_obs: 250,
            alpha_range: (0.1, 1.99),
            theta_range: (0.1, 20.0),
            coarse_points: 6,
            refine_levels: 1,
            polish: true,
            log2_points: 11,
            half_width: 40.0,
            beta_tol: 1e-5,
            boundary_fraction: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MntsFit {
    pub params: MntsParams,
    /// Sum of margin log-likelihoods at the optimum.
    pub loglik: f64,
    pub margin_loglik: Vec<f64>,
    /// Margins whose `beta` hit the admissible boundary and was clamped.
    pub boundary: Vec<bool>,
    /// Sample correlation of the residuals before the subordinator correction.
    pub sample_corr: Vec<Vec<f64>>,
    pub profile_evaluations: usize,
}

/// Linear-interpolation weights of one sample on the fixed grid.
struct BinnedMargin {
    entries: Vec<(usize, f64)>,
}

struct Grid {
    x0: f64,
    dx: f64,
    n: usize,
}

impl BinnedMargin {
    fn new(xs: &[f64], g: &Grid) -> Self {
        let mut w = vec![0.0; g.n];
        for &x in xs {
            let pos = ((x - g.x0) / g.dx).clamp(0.0, (g.n - 2) as f64);
            let k = pos.floor() as usize;
            let t = pos - k as f64;
            w[k] += 1.0 - t;
            w[k + 1] += t;
        }
        Self { entries: w.into_iter().enumerate().filter(|(_, v)| *v > 0.0).collect() }
    }

    fn loglik(&self, pdf: &[f64]) -> f64 {
        self.entries.iter().map(|&(k, w)| w * pdf[k].max(1e-14).ln()).sum()
    }
}

fn margin_loglik(alpha: f64, theta: f64, beta: f64, g: &Grid, m: &BinnedMargin) -> f64 {
    let Ok(p) = StdNtsParams::new(alpha, theta, beta) else {
        return f64::NEG_INFINITY;
    };
    let pdf = density_on_grid(|u| p.char_fn(u), g.x0, g.dx, g.n);
    m.loglik(&pdf)
}

struct Profile {
    alpha: f64,
    theta: f64,
    betas: Vec<f64>,
    logliks: Vec<f64>,
    total: f64,
}

fn profile(alpha: f64, theta: f64, g: &Grid, margins: &[BinnedMargin], opts: &NtsFitOptions, warm: Option<&[f64]>) -> Profile {
    let bound = beta_bound(alpha, theta) * opts.boundary_fraction;
    let mut betas = Vec::with_capacity(margins.len());
    let mut logliks = Vec::with_capacity(margins.len());
    for (i, m) in margins.iter().enumerate() {
        // bracket around a warm start when available, otherwise the full admissible range
        let (lo, hi) = match warm.map(|w| w[i]) {
            Some(b) if b.abs() < bound => ((b - 0.5).max(-bound), (b + 0.5).min(bound)),
            _ => (-bound, bound),
        };
        let (mut b, mut nll) = brent_minimize(|b| -margin_loglik(alpha, theta, b, g, m), lo, hi, opts.beta_tol, 100);
        if warm.is_some() && ((b - lo).abs() < 1e-3 || (hi - b).abs() < 1e-3) && (lo > -bound || hi < bound) {
            (b, nll) = brent_minimize(|b| -margin_loglik(alpha, theta, b, g, m), -bound, bound, opts.beta_tol, 100);
        }
        betas.push(b);
        logliks.push(-nll);
    }
    let total = logliks.iter().sum();
    Profile { alpha, theta, betas, logliks, total }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Fits standard MNTS parameters to an `N x n` residual sample given as `n` columns.
pub fn fit_std_mnts(columns: &[Vec<f64>], opts: &NtsFitOptions) -> Result<MntsFit> {
    let n_assets = columns.len();
    if n_assets == 0 {
        return Err(Error::Validation("no residual columns".into()));
    }
    let n_obs = columns[0].len();
    if columns.iter().any(|c| c.len() != n_obs) {
        return Err(Error::Dimension { expected: n_obs, got: columns.iter().map(|c| c.len()).min().unwrap_or(0) });
    }
    if n_obs < opts.min_obs {
        return Err(Error::InsufficientData { needed: opts.min_obs, got: n_obs });
    }
    for (i, c) in columns.iter().enumerate() {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Estimation(format!("margin {i} has non-finite residuals")));
        }
        let m = c.iter().sum::<f64>() / n_obs as f64;
        let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n_obs as f64;
        if !(v > 1e-12) {
            return Err(Error::Estimation(format!("margin {i} has zero variance")));
        }
    }

    let max_abs = columns.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let half_width = opts.half_width.max(1.25 * max_abs + 5.0);
    let n = 1usize << opts.log2_points;
    let grid = Grid { x0: -half_width, dx: 2.0 * half_width / n as f64, n };
    let margins: Vec<BinnedMargin> = columns.iter().map(|c| BinnedMargin::new(c, &grid)).collect();

    let (a_lo, a_hi) = opts.alpha_range;
    let (lt_lo, lt_hi) = (opts.theta_range.0.ln(), opts.theta_range.1.ln());
    let mut evaluations = 0usize;
    let mut eval = |alpha: f64, ln_theta: f64, warm: Option<&[f64]>| {
        evaluations += 1;
        profile(alpha, ln_theta.exp(), &grid, &margins, opts, warm)
    };

    let alphas = linspace(a_lo, a_hi, opts.coarse_points);
    let lthetas = linspace(lt_lo, lt_hi, opts.coarse_points);
    let mut best: Option<Profile> = None;
    for &a in &alphas {
        for &lt in &lthetas {
            let p = eval(a, lt, None);
            if best.as_ref().map_or(true, |b| p.total > b.total) {
                best = Some(p);
            }
        }
    }
    let mut best = best.expect("non-empty grid");
    let mut da = (a_hi - a_lo) / (opts.coarse_points.max(2) - 1) as f64;
    let mut dlt = (lt_hi - lt_lo) / (opts.coarse_points.max(2) - 1) as f64;
    for _ in 0..opts.refine_levels {
        da *= 0.5;
        dlt *= 0.5;
        let (ca, clt) = (best.alpha, best.theta.ln());
        let warm = best.betas.clone();
        for ia in [-1.0, 0.0, 1.0] {
            for it in [-1.0, 0.0, 1.0] {
                if ia == 0.0 && it == 0.0 {
                    continue;
                }
                let a = (ca + ia * da).clamp(a_lo, a_hi);
                let lt = (clt + it * dlt).clamp(lt_lo, lt_hi);
                let p = eval(a, lt, Some(&warm));
                if p.total > best.total {
                    best = p;
                }
            }
        }
    }
    if opts.polish {
        let warm = best.betas.clone();
        let start = [best.alpha, best.theta.ln()];
        let mut incumbent: Option<Profile> = None;
        let nm_opts = NelderMeadOptions { max_evaluations: 80, f_tol: 1e-9, x_tol: 1e-4, initial_step: 0.5 * da.min(dlt) };
        nelder_mead(
            |x| {
                if x[0] < a_lo || x[0] > a_hi || x[1] < lt_lo || x[1] > lt_hi {
                    return f64::INFINITY;
                }
                let p = eval(x[0], x[1], Some(&warm));
                let v = -p.total;
                if incumbent.as_ref().map_or(true, |b| p.total > b.total) {
                    incumbent = Some(p);
                }
                v
            },
            &start,
            &nm_opts,
        );
        if let Some(p) = incumbent {
            if p.total > best.total {
                best = p;
            }
        }
    }

    let bound = beta_bound(best.alpha, best.theta);
    let boundary: Vec<bool> = best.betas.iter().map(|b| b.abs() >= opts.boundary_fraction * bound * (1.0 - 1e-6)).collect();
    let betas: Vec<f64> = best
        .betas
        .iter()
        .map(|b| b.clamp(-opts.boundary_fraction * bound, opts.boundary_fraction * bound))
        .collect();

    let sample_corr = correlation(columns);
    let sigma_corr = dependence_from_correlation(&sample_corr, best.alpha, best.theta, &betas);
    let params = MntsParams::standardized(best.alpha, best.theta, betas, sigma_corr)?;
    Ok(MntsFit {
        params,
        loglik: best.total,
        margin_loglik: best.logliks,
        boundary,
        sample_corr,
        profile_evaluations: evaluations,
    })
}

/// Pearson correlation matrix of the columns.
pub fn correlation(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = columns.len();
    let m = columns[0].len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / m).collect();
    let mut cov = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = columns[i].iter().zip(&columns[j]).map(|(a, b)| (a - means[i]) * (b - means[j])).sum();
            cov[i][j] = s;
            cov[j][i] = s;
        }
    }
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { cov[i][j] / (cov[i][i] * cov[j][j]).sqrt() }).collect())
        .collect()
}

/// Gaussian-component correlation implied by a target margin correlation:
/// `rho_ij = (corr_ij - beta_i beta_j Var[T]) / (gamma_i gamma_j)`, then the
/// nearest valid correlation matrix by eigenvalue clipping.
pub fn dependence_from_correlation(corr: &[Vec<f64>], alpha: f64, theta: f64, beta: &[f64]) -> Vec<Vec<f64>> {
    let n = corr.len();
    let var_t = (2.0 - alpha) / (2.0 * theta);
    let gamma: Vec<f64> = beta.iter().map(|b| (1.0 - b * b * var_t).max(1e-12).sqrt()).collect();
    let adjusted = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            (corr[i][j] - beta[i] * beta[j] * var_t) / (gamma[i] * gamma[j])
        }
    });
    nearest_correlation(adjusted)
}

/// Clips negative eigenvalues and rescales to a unit diagonal.
pub fn nearest_correlation(m: nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    let n = m.nrows();
    let sym = 0.5 * (&m + m.transpose());
    let eig = sym.clone().symmetric_eigen();
    let floor = 1e-10;
    let needs_fix = eig.eigenvalues.iter().any(|v| *v < floor);
    let fixed = if needs_fix {
        let d = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(floor)));
        &eig.eigenvectors * d * eig.eigenvectors.transpose()
    } else {
        sym
    };
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = if i == j { 1.0 } else { fixed[(i, j)] / (fixed[(i, i)] * fixed[(j, j)]).sqrt() };
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out[i][j] + out[j][i]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_margin_is_estimation_error() {
        let cols = vec![vec![0.0; 300]];
        assert!(matches!(fit_std_mnts(&cols, &NtsFitOptions::default()), Err(Error::Estimation(_))));
    }

    #[test]
    fn too_few_observations() {
        let cols = vec![(0..100).map(|i| (i as f64).sin()).collect::<Vec<_>>()];
        assert!(matches!(fit_std_mnts(&cols, &NtsFitOptions::default()), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn nearest_correlation_repairs_indefinite_matrix() {
        let m = nalgebra::DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        let c = nearest_correlation(m);
        let cm = nalgebra::DMatrix::from_fn(3, 3, |i, j| c[i][j]);
        assert!(cm.symmetric_eigenvalues().iter().all(|v| *v > -1e-12));
        for i in 0..3 {
            assert_eq!(c[i][i], 1.0);
        }
    }

    #[test]
    fn correction_is_identity_without_skew() {
        let corr = vec![vec![1.0, 0.3], vec![0.3, 1.0]];
        let s = dependence_from_correlation(&corr, 1.2, 1.0, &[0.0, 0.0]);
        assert!((s[0][1] - 0.3).abs() < 1e-12);
    }
}
