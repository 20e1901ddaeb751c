//! Out-of-sample walk: scenarios, optimization and realized-return accounting.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::estimate::panel_fingerprint;
use super::scenarios::{day_seed, simulate_panel, ScenarioModel};
use super::{
    estimate_windows, strategy_grid, Accounting, MeanSource, Model, RunConfig, SdSource, StrategySpec, WindowEstimate,
};
use crate::data::{load_prices, ReturnPanel};
use crate::error::{Error, Result};
use crate::nts::GridSettings;
use crate::optimizer::{optimize, OptimizationProblem, RiskMeasure};
use crate::risk::{portfolio_outcomes, var_avar, ScenarioMatrix};

/// One trading day of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    /// Date of the realized return.
    pub date: NaiveDate,
    pub window: usize,
    /// Weights held over the day (unit gross exposure unless carried forward).
    pub weights: Vec<f64>,
    /// `||w - w_prev||_1`.
    pub turnover: f64,
    /// `lambda * turnover`.
    pub cost: f64,
    /// `w' r`.
    pub gross_return: f64,
    /// `gross_return - cost`.
    pub net_return: f64,
    /// Scenario VaR and AVaR of the held portfolio (loss units).
    pub var: Option<f64>,
    pub avar: Option<f64>,
    pub objective: Option<f64>,
    /// Set when the optimizer or the model failed and weights were carried forward.
    pub defect: Option<String>,
}

/// Daily records of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub strategy: StrategySpec,
    pub id: String,
    pub records: Vec<DayRecord>,
}

impl RunLedger {
    pub fn net_returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.net_return).collect()
    }

    /// Cumulative net return after each day.
    pub fn cumulative(&self, accounting: Accounting) -> Vec<f64> {
        let mut acc = match accounting {
            Accounting::Sum => 0.0,
            Accounting::Compound => 1.0,
        };
        self.records
            .iter()
            .map(|r| match accounting {
                Accounting::Sum => {
                    acc += r.net_return;
                    acc
                }
                Accounting::Compound => {
                    acc *= 1.0 + r.net_return;
                    acc - 1.0
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEntry {
    pub date: NaiveDate,
    pub context: String,
    pub message: String,
}

/// Provenance of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package_version: String,
    pub config_hash: String,
    pub estimation_hash: String,
    pub data_fingerprint: String,
    pub run_seed: u64,
    /// How per-day scenario seeds are derived.
    pub seed_rule: String,
    pub accounting: Accounting,
    pub mean_source: MeanSource,
    pub sd_source: SdSource,
    pub assets: Vec<String>,
    pub windows: usize,
    pub trading_days: usize,
    pub strategies: Vec<String>,
    pub defects: Vec<DefectEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutput {
    pub config: RunConfig,
    pub panel: ReturnPanel,
    pub estimates: Vec<WindowEstimate>,
    pub ledgers: Vec<RunLedger>,
    pub manifest: Manifest,
}

impl RunOutput {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Panel from `cfg.data`, or the synthetic panel when no file is configured.
pub fn load_panel(cfg: &RunConfig) -> Result<ReturnPanel> {
    match &cfg.data {
        Some(path) => ReturnPanel::from_prices(&load_prices(path)?),
        None => simulate_panel(&cfg.simulate),
    }
}

/// Builds the optimization inputs of one model on one day.
struct DayModel {
    scenarios: ScenarioMatrix,
    mu: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

fn day_model(est: &WindowEstimate, model: Model, ids: &[String], cfg: &RunConfig, grid: &GridSettings) -> Result<DayModel> {
    let m = est.models.get(&model).ok_or_else(|| Error::Incomplete(format!("no {model} estimate")))?;
    let mu: Vec<f64> = m.forecasts.iter().map(|f| f.mu).collect();
    let sigma: Vec<f64> = m.forecasts.iter().map(|f| f.sigma).collect();
    let sm = ScenarioModel::from_estimate(m, grid)?;
    let scenarios = sm.scenarios(&mu, &sigma, cfg.n_scenarios, day_seed(cfg.seed, est.window.index as u64), ids.to_vec())?;
    let mu = match cfg.mean_source {
        MeanSource::Forecast => mu,
        MeanSource::Scenario => scenarios.column_means(),
    };
    let n = sigma.len();
    let covariance =
        (0..n).map(|i| (0..n).map(|j| sigma[i] * m.residual_corr[i][j] * sigma[j]).collect()).collect();
    Ok(DayModel { scenarios, mu, covariance })
}

#[derive(Clone)]
struct Decision {
    weights: Vec<f64>,
    objective: Option<f64>,
    var: Option<f64>,
    avar: Option<f64>,
    defect: Option<String>,
}

fn decide(s: &StrategySpec, w_prev: &[f64], dm: std::result::Result<&DayModel, &String>, cfg: &RunConfig) -> Decision {
    let carry = |msg: String| Decision { weights: w_prev.to_vec(), objective: None, var: None, avar: None, defect: Some(msg) };
    let dm = match dm {
        Ok(d) => d,
        Err(e) => return carry(format!("model unavailable: {e}")),
    };
    let mut p = OptimizationProblem::new(&dm.scenarios, s.rho);
    p.mu = dm.mu.clone();
    p.w_prev = w_prev.to_vec();
    p.lambda = s.lambda;
    p.cost_aversion = s.cost_aversion;
    p.long_only = s.long_only;
    p.epsilon = s.epsilon;
    if s.rho == RiskMeasure::Sd && cfg.sd_source == SdSource::Analytic {
        p.covariance = Some(dm.covariance.clone());
    }
    match optimize(&p, &cfg.solver.options()) {
        Ok(r) => {
            let tail = portfolio_outcomes(&dm.scenarios, &r.weights).and_then(|o| var_avar(&o, s.epsilon)).ok();
            Decision {
                weights: r.weights,
                objective: Some(r.objective_normalized),
                var: tail.map(|t| t.0),
                avar: tail.map(|t| t.1),
                defect: None,
            }
        }
        Err(e) => carry(format!("optimizer failed: {e}")),
    }
}

/// Walks the estimates in date order and solves every strategy each day.
///
/// Strategies start flat. A strategy whose model or optimizer fails on a day
/// keeps its previous weights and records the defect. Strategies posing the
/// identical problem on a day (same model, measure, box, cost terms and
/// previous weights) are solved once.
pub fn run_strategies(
    panel: &ReturnPanel,
    estimates: &[WindowEstimate],
    strategies: &[StrategySpec],
    cfg: &RunConfig,
) -> Result<Vec<RunLedger>> {
    let grid = GridSettings::default();
    let n = panel.n_assets();
    let mut ledgers: Vec<RunLedger> =
        strategies.iter().map(|s| RunLedger { strategy: *s, id: s.id(), records: Vec::new() }).collect();
    let mut w_prev: Vec<Vec<f64>> = vec![vec![0.0; n]; strategies.len()];
    let models: Vec<Model> = {
        let mut m: Vec<Model> = strategies.iter().map(|s| s.model).collect();
        m.sort();
        m.dedup();
        m
    };

    for est in estimates {
        let (Some(t), Some(date)) = (est.window.target, est.target_date) else { continue };
        let realized = panel.row(t);
        let day: BTreeMap<Model, std::result::Result<DayModel, String>> = models
            .par_iter()
            .map(|&m| (m, day_model(est, m, &panel.asset_ids, cfg, &grid).map_err(|e| e.to_string())))
            .collect();

        let key = |i: usize| {
            let s = &strategies[i];
            let c = if s.lambda == 0.0 { 0.0 } else { s.cost_aversion };
            let bits = |v: f64| v.to_bits();
            (
                s.model,
                s.rho.label(),
                bits(s.lambda),
                bits(c),
                s.long_only,
                bits(s.epsilon),
                w_prev[i].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        };
        let mut unique: HashMap<_, usize> = HashMap::new();
        let mut rep = Vec::with_capacity(strategies.len());
        for i in 0..strategies.len() {
            let next = unique.len();
            rep.push(*unique.entry(key(i)).or_insert(next));
        }
        let mut firsts = vec![usize::MAX; unique.len()];
        for (i, &r) in rep.iter().enumerate() {
            if firsts[r] == usize::MAX {
                firsts[r] = i;
            }
        }
        let decisions: Vec<Decision> = firsts
            .par_iter()
            .map(|&i| {
                let s = &strategies[i];
                let dm = day.get(&s.model).expect("model prepared").as_ref();
                decide(s, &w_prev[i], dm, cfg)
            })
            .collect();

        for (i, ledger) in ledgers.iter_mut().enumerate() {
            let d = &decisions[rep[i]];
            let s = &strategies[i];
            let turnover: f64 = d.weights.iter().zip(&w_prev[i]).map(|(a, b)| (a - b).abs()).sum();
            let gross: f64 = d.weights.iter().zip(&realized).map(|(a, b)| a * b).sum();
            let cost = s.lambda * turnover;
            ledger.records.push(DayRecord {
                date,
                window: est.window.index,
                weights: d.weights.clone(),
                turnover,
                cost,
                gross_return: gross,
                net_return: gross - cost,
                var: d.var,
                avar: d.avar,
                objective: d.objective,
                defect: d.defect.clone(),
            });
            w_prev[i] = d.weights.clone();
        }
    }
    Ok(ledgers)
}

/// Estimation followed by the strategy walk, with a manifest of the run.
pub fn run_experiment(panel: &ReturnPanel, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if panel.len() < cfg.window.length + 1 {
        return Err(Error::InsufficientData { needed: cfg.window.length + 1, got: panel.len() });
    }
    let checkpoints = cfg.checkpoint.then(|| cfg.output_dir.join("checkpoints"));
    let estimates = estimate_windows(panel, cfg, checkpoints.as_deref().map(Path::new))?;
    let strategies = strategy_grid(cfg);
    let ledgers = run_strategies(panel, &estimates, &strategies, cfg)?;

    let mut defects = Vec::new();
    for e in &estimates {
        for d in &e.defects {
            defects.push(DefectEntry { date: e.date, context: format!("window {}", e.window.index), message: d.clone() });
        }
    }
    for l in &ledgers {
        for r in &l.records {
            if let Some(d) = &r.defect {
                defects.push(DefectEntry { date: r.date, context: l.id.clone(), message: d.clone() });
            }
        }
    }
    let manifest = Manifest {
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash()?,
        estimation_hash: cfg.estimation_hash()?,
        data_fingerprint: panel_fingerprint(panel),
        run_seed: cfg.seed,
        seed_rule: "day seed = splitmix64(run_seed + (window_index + 1) * 0x9E3779B97F4A7C15), shared by all models"
            .into(),
        accounting: cfg.accounting,
        mean_source: cfg.mean_source,
        sd_source: cfg.sd_source,
        assets: panel.asset_ids.clone(),
        windows: estimates.len(),
        trading_days: ledgers.first().map_or(0, |l| l.records.len()),
        strategies: ledgers.iter().map(|l| l.id.clone()).collect(),
        defects,
    };
    Ok(RunOutput { config: cfg.clone(), panel: panel.clone(), estimates, ledgers, manifest })
}
