//! Mean-risk portfolio selection on a scenario set.
//!
//! Minimizes
//!
//! ```text
//! rho(w) / (w' mu) + C (lambda ||w - w_prev||_1 / (w' mu))^2
//! ```
//!
//! over the box `[-1, 1]^n` (or `[0, 1]^n` long-only) subject to
//! `w' mu >= 1e-8`, by multi-start adaptive Nelder-Mead. Infeasible points
//! evaluate to `+inf`. Returned weights are scaled to unit gross exposure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::risk::{foster_hart_hinted, portfolio_outcomes_into, sd, var_avar_in_place, ScenarioMatrix};

/// Smallest admissible expected portfolio return.
pub const MIN_EXPECTED_RETURN: f64 = 1e-8;

/// Default transaction cost per unit of weight change.
pub const DEFAULT_LAMBDA: f64 = 1e-7;

/// Risk measure in the numerator of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskMeasure {
    #[serde(rename = "SD")]
    Sd,
    #[serde(rename = "AVaR")]
    Avar,
    #[serde(rename = "FH")]
    Fh,
}

impl RiskMeasure {
    pub const ALL: [RiskMeasure; 3] = [RiskMeasure::Sd, RiskMeasure::Avar, RiskMeasure::Fh];

    pub fn label(&self) -> &'static str {
        match self {
            RiskMeasure::Sd => "SD",
            RiskMeasure::Avar => "AVaR",
            RiskMeasure::Fh => "FH",
        }
    }
}

impl std::str::FromStr for RiskMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(Self::Sd),
            "avar" | "cvar" | "es" => Ok(Self::Avar),
            "fh" => Ok(Self::Fh),
            _ => Err(Error::Config(format!("unknown risk measure {s:?}"))),
        }
    }
}

/// One instance of the mean-risk problem.
#[derive(Debug, Clone)]
pub struct OptimizationProblem<'a> {
    pub scenarios: &'a ScenarioMatrix,
    /// Expected returns.
    pub mu: Vec<f64>,
    pub w_prev: Vec<f64>,
    pub rho: RiskMeasure,
    /// Transaction cost per unit weight change.
    pub lambda: f64,
    /// Cost aversion `C`.
    pub cost_aversion: f64,
    pub long_only: bool,
    /// Tail probability for AVaR.
    pub epsilon: f64,
    /// When set, SD is `sqrt(w' V w)` with this covariance instead of the scenario SD.
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl<'a> OptimizationProblem<'a> {
    /// Problem with expected returns taken as scenario column means and
    /// previous weights equal to zero.
    pub fn new(scenarios: &'a ScenarioMatrix, rho: RiskMeasure) -> Self {
        let n = scenarios.n_assets();
        Self {
            scenarios,
            mu: scenarios.column_means(),
            w_prev: vec![0.0; n],
            rho,
            lambda: DEFAULT_LAMBDA,
            cost_aversion: 0.0,
            long_only: false,
            epsilon: 0.01,
            covariance: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.scenarios.n_assets()
    }

    pub fn bounds(&self) -> (f64, f64) {
        if self.long_only {
            (0.0, 1.0)
        } else {
            (-1.0, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        for (name, len) in [("mu", self.mu.len()), ("w_prev", self.w_prev.len())] {
            if len != n {
                return Err(Error::Validation(format!("{name} has length {len}, expected {n}")));
            }
        }
        if let Some(c) = &self.covariance {
            if c.len() != n || c.iter().any(|r| r.len() != n) {
                return Err(Error::Dimension { expected: n, got: c.len() });
            }
        }
        if !(self.lambda >= 0.0 && self.cost_aversion >= 0.0) {
            return Err(Error::Validation("lambda and C must be non-negative".into()));
        }
        Ok(())
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerOptions {
    /// Number of deterministic starting points used (at most 8).
    pub multi_starts: usize,
    pub nelder_mead: NelderMeadOptions,
    /// Relative tolerance of the Foster-Hart root.
    pub fh_tol: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            multi_starts: 8,
            nelder_mead: NelderMeadOptions { max_evaluations: 600, f_tol: 1e-6, x_tol: 1e-4, initial_step: 0.2 },
            fh_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    /// Weights at unit gross exposure.
    pub weights: Vec<f64>,
    /// Objective at the solver's (unnormalized) minimizer.
    pub objective: f64,
    /// Objective at the normalized weights.
    pub objective_normalized: f64,
    /// `rho` at the normalized weights.
    pub risk: f64,
    /// `w' mu` at the normalized weights.
    pub expected_return: f64,
    pub feasible: bool,
    pub evaluations: usize,
    /// Starts whose simplex search hit the evaluation limit.
    pub stagnated_starts: usize,
    pub best_start: usize,
}

/// Reusable evaluator holding scratch buffers.
struct Evaluator<'p, 'a> {
    p: &'p OptimizationProblem<'a>,
    outcomes: Vec<f64>,
    fh_tol: f64,
    /// Last Foster-Hart root and the quadratic-expansion root `E[g^2] / (2 mean)`
    /// of the same outcomes, and whether that root was the maximal loss
    /// bracket end, used to start the next root search.
    fh_hint: Option<(f64, f64, bool)>,
}

impl<'p, 'a> Evaluator<'p, 'a> {
    fn new(p: &'p OptimizationProblem<'a>, fh_tol: f64) -> Self {
        Self { p, outcomes: vec![0.0; p.scenarios.n_scenarios()], fh_tol, fh_hint: None }
    }

    fn risk(&mut self, w: &[f64]) -> Option<f64> {
        let p = self.p;
        if let (RiskMeasure::Sd, Some(cov)) = (p.rho, &p.covariance) {
            let n = w.len();
            let v: f64 = (0..n).map(|i| (0..n).map(|j| w[i] * cov[i][j] * w[j]).sum::<f64>()).sum();
            return Some(v.max(0.0).sqrt());
        }
        portfolio_outcomes_into(p.scenarios, w, &mut self.outcomes).ok()?;
        match p.rho {
            RiskMeasure::Sd => sd(&self.outcomes).ok(),
            RiskMeasure::Avar => var_avar_in_place(&mut self.outcomes, p.epsilon).ok().map(|v| v.1),
            RiskMeasure::Fh => {
                let n = self.outcomes.len() as f64;
                let (m1, m2, lo) = self
                    .outcomes
                    .iter()
                    .fold((0.0, 0.0, f64::INFINITY), |(a, b, c), g| (a + g, b + g * g, c.min(*g)));
                let quad = (m2 / n) / (2.0 * m1 / n);
                let hint = self.fh_hint.map(|(r, q, at_cap)| if at_cap { -lo } else { r * quad / q });
                let r = foster_hart_hinted(&self.outcomes, self.fh_tol, hint).ok()?;
                self.fh_hint = Some((r, quad, r <= -lo * (1.0 + 2e-9)));
                Some(r)
            }
        }
    }

    fn objective(&mut self, w: &[f64]) -> f64 {
        let p = self.p;
        let (lo, hi) = p.bounds();
        if w.iter().any(|v| !(*v >= lo - 1e-12 && *v <= hi + 1e-12)) {
            return f64::INFINITY;
        }
        let m: f64 = w.iter().zip(&p.mu).map(|(a, b)| a * b).sum();
        if !(m >= MIN_EXPECTED_RETURN) {
            return f64::INFINITY;
        }
        let Some(r) = self.risk(w) else { return f64::INFINITY };
        let turnover: f64 = w.iter().zip(&p.w_prev).map(|(a, b)| (a - b).abs()).sum();
        let cost = p.lambda * turnover / m;
        r / m + p.cost_aversion * cost * cost
    }
}

/// `rho(w) / (w' mu) + C (lambda ||w - w_prev||_1 / (w' mu))^2`; `+inf` when
/// infeasible (outside the box, `w' mu < 1e-8`, or FH undefined).
pub fn evaluate_objective(p: &OptimizationProblem, w: &[f64]) -> f64 {
    Evaluator::new(p, OptimizerOptions::default().fh_tol).objective(w)
}

/// `rho(w)` alone, `None` when undefined.
pub fn evaluate_risk(p: &OptimizationProblem, w: &[f64]) -> Option<f64> {
    Evaluator::new(p, OptimizerOptions::default().fh_tol).risk(w)
}

fn clip(w: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    w.iter().map(|v| v.clamp(lo, hi)).collect()
}

/// Deterministic starting points: previous weights, equal weights, the
/// corners `sign(mu_i) e_i`, `sign(mu)` and `mu / max|mu|`, scaled to the
/// interior and clipped into the box.
pub fn starting_points(p: &OptimizationProblem) -> Vec<Vec<f64>> {
    let n = p.dim();
    let (lo, hi) = p.bounds();
    let sign = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
    let mut starts = vec![p.w_prev.clone(), vec![1.0 / n as f64; n]];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 0.5 * sign(p.mu[i]);
        starts.push(e);
    }
    starts.push(p.mu.iter().map(|&m| 0.5 * sign(m) / n as f64).collect());
    let mmax = p.mu.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if mmax > 0.0 {
        starts.push(p.mu.iter().map(|m| 0.5 * m / mmax).collect());
    }
    starts.iter().map(|s| clip(s, lo, hi)).collect()
}

/// Weights divided by their gross exposure `sum |w_i|`.
pub fn normalize_gross(w: &[f64]) -> Vec<f64> {
    let g: f64 = w.iter().map(|v| v.abs()).sum();
    if g > 0.0 {
        w.iter().map(|v| v / g).collect()
    } else {
        w.to_vec()
    }
}

pub fn optimize(p: &OptimizationProblem, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    optimize_from(p, opts, &[])
}

/// As [`optimize`], trying `extra_starts` before the default ones.
pub fn optimize_from(
    p: &OptimizationProblem,
    opts: &OptimizerOptions,
    extra_starts: &[Vec<f64>],
) -> Result<OptimizationResult> {
    p.validate()?;
    if p.mu.iter().all(|m| *m == 0.0) {
        return Err(Error::Infeasible("expected returns are all zero, so w'mu > 0 is impossible".into()));
    }
    if p.long_only && p.mu.iter().all(|m| *m <= 0.0) {
        return Err(Error::Infeasible("no asset has a positive expected return under long-only weights".into()));
    }
    let (lo, hi) = p.bounds();
    let mut ev = Evaluator::new(p, opts.fh_tol);
    let mut starts: Vec<Vec<f64>> = extra_starts.iter().map(|s| clip(s, lo, hi)).collect();
    starts.extend(starting_points(p).into_iter().take(opts.multi_starts.clamp(1, 8)));

    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    let mut evaluations = 0;
    let mut stagnated = 0;
    for (k, s) in starts.iter().enumerate() {
        if !ev.objective(s).is_finite() {
            continue;
        }
        let m = nelder_mead(|x| ev.objective(&clip(x, lo, hi)), s, &opts.nelder_mead);
        evaluations += m.evaluations;
        if !m.converged {
            stagnated += 1;
        }
        if m.f.is_finite() && best.as_ref().is_none_or(|b| m.f < b.1) {
            best = Some((clip(&m.x, lo, hi), m.f, k));
        }
    }
    let Some((w_raw, f, best_start)) = best else {
        return Err(Error::Infeasible(format!(
            "no starting point gives a finite {} objective with w'mu >= {MIN_EXPECTED_RETURN}",
            p.rho.label()
        )));
    };
    let weights = normalize_gross(&w_raw);
    let expected_return: f64 = weights.iter().zip(&p.mu).map(|(a, b)| a * b).sum();
    let risk = ev.risk(&weights).unwrap_or(f64::NAN);
    let objective_normalized = ev.objective(&weights);
    Ok(OptimizationResult {
        weights,
        objective: f,
        objective_normalized,
        risk,
        expected_return,
        feasible: true,
        evaluations,
        stagnated_starts: stagnated,
        best_start,
    })
}

/// One solution per cost-aversion value, each warm-started from the previous one.
///
/// With `lambda = 0` the objective does not depend on `C` and the first
/// solution is reused.
pub fn frontier_sweep(
    p: &OptimizationProblem,
    c_values: &[f64],
    opts: &OptimizerOptions,
) -> Result<Vec<OptimizationResult>> {
    let mut out: Vec<OptimizationResult> = Vec::with_capacity(c_values.len());
    for &c in c_values {
        if p.lambda == 0.0 {
            // the cost term is identically zero, so every C poses the same problem
            if let Some(prev) = out.last() {
                out.push(prev.clone());
                continue;
            }
        }
        let mut q = p.clone();
        q.cost_aversion = c;
        let warm: Vec<Vec<f64>> = out.last().map(|r| vec![r.weights.clone()]).unwrap_or_default();
        out.push(optimize_from(&q, opts, &warm)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn two_asset(n: usize, seed: u64) -> ScenarioMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                vec![0.01 + 0.02 * a, 0.01 + 0.04 * b]
            })
            .collect();
        ScenarioMatrix::from_rows(&rows, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn single_asset_goes_fully_long() {
        let rows: Vec<Vec<f64>> = (0..200).map(|k| vec![0.01 + 0.02 * ((k % 7) as f64 - 3.0)]).collect();
        let s = ScenarioMatrix::from_rows(&rows, vec!["a".into()]).unwrap();
        for rho in RiskMeasure::ALL {
            let mut p = OptimizationProblem::new(&s, rho);
            p.lambda = 0.0;
            let r = optimize(&p, &OptimizerOptions::default()).unwrap();
            assert_eq!(r.weights, vec![1.0], "{rho:?}");
        }
    }

    #[test]
    fn zero_means_are_infeasible() {
        let s = two_asset(500, 1);
        let mut p = OptimizationProblem::new(&s, RiskMeasure::Sd);
        p.mu = vec![0.0, 0.0];
        assert!(matches!(optimize(&p, &OptimizerOptions::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn cost_term_vanishes_without_cost_aversion_or_turnover() {
        let s = two_asset(500, 2);
        let mut p = OptimizationProblem::new(&s, RiskMeasure::Avar);
        p.w_prev = vec![0.3, 0.2];
        p.cost_aversion = 0.0;
        p.lambda = 0.5;
        let w = [0.6, 0.1];
        let m: f64 = w.iter().zip(&p.mu).map(|(a, b)| a * b).sum();
        let r = evaluate_risk(&p, &w).unwrap();
        assert_eq!(evaluate_objective(&p, &w), r / m);
        p.cost_aversion = 3.0;
        let w = [0.3, 0.2];
        let m: f64 = w.iter().zip(&p.mu).map(|(a, b)| a * b).sum();
        assert_eq!(evaluate_objective(&p, &w), evaluate_risk(&p, &w).unwrap() / m);
    }

    #[test]
    fn objective_matches_direct_recomputation() {
        let rows = vec![vec![0.02, -0.01], vec![-0.03, 0.04], vec![0.01, 0.01], vec![0.05, -0.02]];
        let s = ScenarioMatrix::from_rows(&rows, vec!["a".into(), "b".into()]).unwrap();
        let mut p = OptimizationProblem::new(&s, RiskMeasure::Sd);
        p.w_prev = vec![0.5, -0.5];
        p.lambda = 0.01;
        p.cost_aversion = 2.0;
        let w = [0.7, 0.3];
        // portfolio outcomes by hand: 0.011, -0.009, 0.01, 0.029
        let x = [0.011, -0.009, 0.01, 0.029];
        let mean = x.iter().sum::<f64>() / 4.0;
        let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
        let mu = [0.05 / 4.0, 0.02 / 4.0];
        let m = 0.7 * mu[0] + 0.3 * mu[1];
        let cost = 0.01 * (0.2 + 0.8) / m;
        let want = sd / m + 2.0 * cost * cost;
        assert!((evaluate_objective(&p, &w) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn infeasible_points_are_infinite() {
        let s = two_asset(500, 3);
        let p = OptimizationProblem::new(&s, RiskMeasure::Sd);
        assert_eq!(evaluate_objective(&p, &[-0.5, -0.5]), f64::INFINITY);
        assert_eq!(evaluate_objective(&p, &[1.5, 0.0]), f64::INFINITY);
    }

    #[test]
    fn long_only_weights_are_non_negative() {
        let s = two_asset(2000, 4);
        let mut p = OptimizationProblem::new(&s, RiskMeasure::Avar);
        p.long_only = true;
        p.mu = vec![0.01, -0.002];
        let r = optimize(&p, &OptimizerOptions::default()).unwrap();
        assert!(r.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn lambda_zero_sweep_is_flat() {
        let s = two_asset(2000, 5);
        let mut p = OptimizationProblem::new(&s, RiskMeasure::Avar);
        p.lambda = 0.0;
        p.w_prev = vec![0.5, -0.5];
        let r = frontier_sweep(&p, &[0.01, 0.1, 1.0], &OptimizerOptions::default()).unwrap();
        let single = optimize(&OptimizationProblem { cost_aversion: 0.01, ..p.clone() }, &OptimizerOptions::default())
            .unwrap();
        assert_eq!(r[0].weights, single.weights);
        assert!(r.iter().all(|x| x.weights == single.weights));
    }
}
