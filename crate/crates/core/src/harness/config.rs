//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Model;
use crate::backtest::{default_periods, Period};
use crate::error::{Error, Result};
use crate::nts::NtsFitOptions;
use crate::optim::NelderMeadOptions;
use crate::optimizer::{OptimizerOptions, RiskMeasure};

/// How daily net returns aggregate into a cumulative return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accounting {
    /// Arithmetic sum of daily net returns.
    Sum,
    /// `prod(1 + r) - 1`.
    Compound,
}

/// Source of the expected-return vector in the optimization problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanSource {
    /// Conditional means `mu_next` of the fitted ARMA-GARCH models.
    Forecast,
    /// Column means of the simulated scenarios.
    Scenario,
}

/// Source of the covariance used when the risk measure is SD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdSource {
    /// `D R D` with forecast volatilities `D` and residual correlation `R`.
    Analytic,
    /// Sample SD of the scenario portfolio outcomes.
    Scenario,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub length: usize,
    pub step: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { length: 500, step: 1 }
    }
}

/// Strategy grid: every combination of model x rho x lambda x C x long_only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyGrid {
    pub rho: Vec<RiskMeasure>,
    pub lambda: Vec<f64>,
    pub cost_aversion: Vec<f64>,
    pub long_only: Vec<bool>,
}

impl Default for StrategyGrid {
    fn default() -> Self {
        Self {
            rho: RiskMeasure::ALL.to_vec(),
            lambda: vec![0.0, 1e-7],
            cost_aversion: vec![0.01, 0.1, 1.0],
            long_only: vec![false],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub multi_starts: usize,
    pub max_evaluations: usize,
    pub f_tol: f64,
    pub x_tol: f64,
    pub initial_step: f64,
    pub fh_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = OptimizerOptions::default();
        Self {
            multi_starts: o.multi_starts,
            max_evaluations: o.nelder_mead.max_evaluations,
            f_tol: o.nelder_mead.f_tol,
            x_tol: o.nelder_mead.x_tol,
            initial_step: o.nelder_mead.initial_step,
            fh_tol: o.fh_tol,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            multi_starts: self.multi_starts,
            nelder_mead: NelderMeadOptions {
                max_evaluations: self.max_evaluations,
                f_tol: self.f_tol,
                x_tol: self.x_tol,
                initial_step: self.initial_step,
            },
            fh_tol: self.fh_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Simulated statistics per Acerbi-Szekely p-value.
    pub n_sim: usize,
    pub periods: Vec<Period>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self { n_sim: 10_000, periods: default_periods() }
    }
}

/// Synthetic data set used when no CSV is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub assets: usize,
    /// Number of returns per asset.
    pub length: usize,
    pub seed: u64,
    /// First date of the synthetic calendar (`YYYY-MM-DD`).
    pub start_date: String,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { assets: 4, length: 160, seed: 7, start_date: "2017-01-01".into() }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Price CSV (long or wide layout); the synthetic panel is used when absent.
    pub data: Option<PathBuf>,
    pub simulate: SimulationConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub epsilon: f64,
    pub n_scenarios: usize,
    pub window: WindowConfig,
    /// Re-estimate every `refit_every` windows; in between, parameters are held
    /// fixed and only the filter is rerun.
    pub refit_every: usize,
    pub models: Vec<Model>,
    pub strategies: StrategyGrid,
    pub solver: SolverConfig,
    pub nts: NtsFitOptions,
    pub backtest: BacktestConfig,
    pub accounting: Accounting,
    pub mean_source: MeanSource,
    pub sd_source: SdSource,
    /// Persist per-window estimates and reuse them on restart.
    pub checkpoint: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            simulate: SimulationConfig::default(),
            output_dir: PathBuf::from("output"),
            seed: 20200331,
            epsilon: 0.01,
            n_scenarios: 10_000,
            window: WindowConfig::default(),
            refit_every: 1,
            models: Model::ALL.to_vec(),
            strategies: StrategyGrid::default(),
            solver: SolverConfig::default(),
            nts: NtsFitOptions { min_obs: 100, ..NtsFitOptions::default() },
            backtest: BacktestConfig::default(),
            accounting: Accounting::Sum,
            mean_source: MeanSource::Forecast,
            sd_source: SdSource::Analytic,
            checkpoint: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path.as_ref())?)?;
        // relative data paths are resolved against the config file
        if let (Some(d), Some(dir)) = (cfg.data.as_ref(), path.as_ref().parent()) {
            if d.is_relative() {
                cfg.data = Some(dir.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.window.length < 2 || self.window.step == 0 {
            return Err(Error::Config("window length must be >= 2 and step >= 1".into()));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit_every must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        if (self.n_scenarios as f64) * self.epsilon < 1.0 {
            return Err(Error::Config("n_scenarios * epsilon must be at least 1".into()));
        }
        let g = &self.strategies;
        if g.lambda.iter().chain(&g.cost_aversion).any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("lambda and cost_aversion values must be non-negative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Hash of the settings that determine per-window estimates.
    pub fn estimation_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            data: &'a Option<PathBuf>,
            simulate: &'a SimulationConfig,
            epsilon: f64,
            window: &'a WindowConfig,
            refit_every: usize,
            models: &'a [Model],
            nts: &'a NtsFitOptions,
        }
        let key = Key {
            data: &self.data,
            simulate: &self.simulate,
            epsilon: self.epsilon,
            window: &self.window,
            refit_every: self.refit_every,
            models: &self.models,
            nts: &self.nts,
        };
        let s = serde_json::to_string(&key)?;
        let digest = Sha256::digest(s.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
            seed = 5
            models = ["AGNormal", "AGNTS"]
            [window]
            length = 100
            [strategies]
            rho = ["FH"]
            lambda = [0.0]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.window.length, 100);
        assert_eq!(cfg.window.step, 1);
        assert_eq!(cfg.models, vec![Model::AgNormal, Model::Agnts]);
        assert_eq!(cfg.strategies.rho, vec![RiskMeasure::Fh]);
        assert_eq!(cfg.strategies.cost_aversion, vec![0.01, 0.1, 1.0]);
        let again = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash().unwrap(), again.hash().unwrap());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        assert!(matches!(RunConfig::from_toml_str("epsilon = 2.0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("refit_every = 0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("models = [\"GARCH\"]"), Err(Error::Config(_))));
    }

    #[test]
    fn hash_changes_with_settings() {
        let a = RunConfig::default();
        let b = RunConfig { seed: a.seed + 1, ..a.clone() };
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.estimation_hash().unwrap(), b.estimation_hash().unwrap());
    }
}
