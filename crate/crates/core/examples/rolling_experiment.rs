//! A small rolling-window experiment on the synthetic MNTS panel: estimation,
//! daily rebalancing for every strategy, and the performance table.

use mnts_risk::harness::{
    performance_table, run_experiment, simulate_panel, RunConfig, SimulationConfig, StrategyGrid, WindowConfig,
};
use mnts_risk::optimizer::RiskMeasure;

fn main() -> mnts_risk::Result<()> {
    let cfg = RunConfig {
        output_dir: std::env::temp_dir().join("mnts_risk_rolling_example"),
        simulate: SimulationConfig { assets: 3, length: 140, ..SimulationConfig::default() },
        window: WindowConfig { length: 100, step: 1 },
        refit_every: 10,
        n_scenarios: 5000,
        strategies: StrategyGrid {
            rho: RiskMeasure::ALL.to_vec(),
            lambda: vec![0.0, 1e-7],
            cost_aversion: vec![1.0],
            long_only: vec![false],
        },
        ..RunConfig::default()
    };
    let panel = simulate_panel(&cfg.simulate)?;
    let out = run_experiment(&panel, &cfg)?;
    println!("{} windows, {} trading days, {} defects", out.manifest.windows, out.manifest.trading_days, out.manifest.defects.len());
    println!("{:<24} {:>9} {:>8} {:>8}", "strategy", "cum.ret", "sd", "sharpe");
    for r in performance_table(&out.ledgers, cfg.accounting)? {
        println!(
            "{:<24} {:>9.4} {:>8.4} {:>8}",
            r.strategy,
            r.cumulative_return,
            r.sd,
            r.sharpe_ratio.map_or("-".into(), |s| format!("{s:.3}"))
        );
    }
    Ok(())
}
