//! Rolling-window experiment: estimation, scenario generation, optimization,
//! realized-return accounting and reports.
//!
//! The run has two stages. [`estimate_windows`] fits every model on every
//! window (in parallel, optionally checkpointed). [`run_experiment`] then
//! walks the out-of-sample days in order, simulates joint scenarios for each
//! model and solves every strategy, strategies in parallel within a day.

mod config;
mod estimate;
mod report;
mod run;
mod scenarios;

pub use config::{
    Accounting, BacktestConfig, MeanSource, RunConfig, SdSource, SimulationConfig, SolverConfig, StrategyGrid,
    WindowConfig,
};
pub use estimate::{
    estimate_window, estimate_windows, AssetForecast, GarchEstimate, LawSpec, ModelEstimate, WindowEstimate,
};
pub use estimate::forecast_series;
pub use report::{
    backtest_counts, backtest_table, cumulative_curve, gof_tables, performance_table, statistical_suite, write_describe,
    write_reports, BacktestCount, BacktestRow, GofTables, PerformanceRow, StatisticalSuite, PERFORMANCE_EPSILON,
};
pub use run::{load_panel, run_experiment, run_strategies, DayRecord, DefectEntry, Manifest, RunLedger, RunOutput};
pub use scenarios::{day_seed, simulate_panel, simulation_model, ScenarioModel};

use serde::{Deserialize, Serialize};

/// Residual model on top of the ARMA(1,1)-GARCH(1,1) filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Model {
    /// Multivariate normal residuals.
    #[serde(rename = "AGNormal")]
    AgNormal,
    /// Student-t margins (Gaussian dependence).
    #[serde(rename = "AGT")]
    Agt,
    /// Standard MNTS residuals fitted to the Student-t filter's residuals.
    #[serde(rename = "AGNTS")]
    Agnts,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::AgNormal, Model::Agt, Model::Agnts];

    pub fn label(&self) -> &'static str {
        match self {
            Model::AgNormal => "AGNormal",
            Model::Agt => "AGT",
            Model::Agnts => "AGNTS",
        }
    }

    /// Whether the model is filtered with Student-t innovations.
    pub fn uses_t_filter(&self) -> bool {
        !matches!(self, Model::AgNormal)
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Model {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "agnormal" | "normal" => Ok(Model::AgNormal),
            "agt" | "t" => Ok(Model::Agt),
            "agnts" | "nts" => Ok(Model::Agnts),
            _ => Err(crate::Error::Config(format!("unknown model {s:?}"))),
        }
    }
}

/// One portfolio strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub model: Model,
    pub rho: crate::optimizer::RiskMeasure,
    pub lambda: f64,
    pub cost_aversion: f64,
    pub long_only: bool,
    pub epsilon: f64,
    pub n_scenarios: usize,
}

impl StrategySpec {
    /// Stable identifier, e.g. `AGNTS-FH-l1e-7-C0.1`.
    pub fn id(&self) -> String {
        let mut s = format!("{}-{}-l{:e}-C{}", self.model, self.rho.label(), self.lambda, self.cost_aversion);
        if self.long_only {
            s.push_str("-long");
        }
        s
    }
}

/// Expands the strategy grid of `cfg` over its models.
pub fn strategy_grid(cfg: &RunConfig) -> Vec<StrategySpec> {
    let g = &cfg.strategies;
    let mut out = Vec::new();
    for &model in &cfg.models {
        for &rho in &g.rho {
            for &lambda in &g.lambda {
                for &cost_aversion in &g.cost_aversion {
                    for &long_only in &g.long_only {
                        out.push(StrategySpec {
                            model,
                            rho,
                            lambda,
                            cost_aversion,
                            long_only,
                            epsilon: cfg.epsilon,
                            n_scenarios: cfg.n_scenarios,
                        });
                    }
                }
            }
        }
    }
    out
}
