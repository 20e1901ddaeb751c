//! Command-line front end of the rolling-window risk pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mnts_risk::data::{describe, load_prices, ReturnPanel};
use mnts_risk::harness::{
    self, backtest_counts, backtest_table, estimate_windows, gof_tables, load_panel, performance_table,
    run_experiment, statistical_suite, strategy_grid, write_describe, write_reports, RunConfig, RunOutput,
    ScenarioModel,
};
use mnts_risk::nts::GridSettings;
use mnts_risk::optimizer::{optimize, OptimizationProblem};
use mnts_risk::Result;

#[derive(Parser)]
#[command(name = "mnts-risk", version, about = "ARMA-GARCH/MNTS risk forecasting and mean-risk portfolios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Price CSV overriding the configured data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory overriding the configured one.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &self.data {
            cfg.data = Some(d.clone());
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Descriptive statistics of the log returns in a price CSV.
    Describe {
        data: PathBuf,
        /// Report excess kurtosis (kurtosis - 3).
        #[arg(long)]
        excess: bool,
        /// Also write the table to this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Estimates every window and writes the estimates as JSON.
    Fit(Common),
    /// In-sample KS/AD rejection tables.
    Gof(Common),
    /// VaR/AVaR backtests (CLR, BLR, AS) per period, model and asset.
    Backtest(Common),
    /// Solves every strategy on a single window.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Window index (default: the last window).
        #[arg(long)]
        window: Option<usize>,
    },
    /// Full pipeline: estimation, strategies, statistical suite and reports.
    Run(Common),
    /// Rebuilds reports from a saved `run.json`.
    Report {
        run: PathBuf,
        /// Output directory (default: the directory holding `run.json`).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also recompute goodness-of-fit and backtest tables.
        #[arg(long)]
        suite: bool,
    },
}

fn panel(cfg: &RunConfig) -> Result<ReturnPanel> {
    let p = load_panel(cfg)?;
    eprintln!("panel: {} assets x {} days", p.n_assets(), p.len());
    Ok(p)
}

fn checkpoint_dir(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.checkpoint.then(|| cfg.output_dir.join("checkpoints"))
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(v)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Describe { data, excess, csv } => {
            let panel = ReturnPanel::from_prices(&load_prices(&data)?)?;
            println!("{:<10} {:>6} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}", "asset", "count", "mean", "max", "min", "sd", "kurtosis", "skewness");
            let mut stats = Vec::new();
            for (id, r) in panel.asset_ids.iter().zip(&panel.returns) {
                let s = describe(r, excess)?;
                println!(
                    "{:<10} {:>6} {:>11.6} {:>11.6} {:>11.6} {:>11.6} {:>11.4} {:>11.4}",
                    id, s.count, s.mean, s.max, s.min, s.sd, s.kurtosis, s.skewness
                );
                stats.push((id.clone(), s));
            }
            if let Some(path) = csv {
                write_describe(&path, &stats)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Fit(c) => {
            let cfg = c.config()?;
            let p = panel(&cfg)?;
            let est = estimate_windows(&p, &cfg, checkpoint_dir(&cfg).as_deref())?;
            let defects: usize = est.iter().map(|e| e.defects.len()).sum();
            println!("estimated {} windows ({defects} defects)", est.len());
            write_json(&cfg.output_dir.join("estimates.json"), &est)?;
        }
        Command::Gof(c) => {
            let cfg = c.config()?;
            let p = panel(&cfg)?;
            let est = estimate_windows(&p, &cfg, checkpoint_dir(&cfg).as_deref())?;
            let tables = gof_tables(&est, &p.asset_ids, &cfg.models)?;
            for (name, rows) in [("KS", &tables.ks), ("AD", &tables.ad)] {
                println!("{name} rejections (p < 0.01 / 0.05 / 0.10):");
                for r in rows {
                    println!("  {:<10} {:<9} {:>4} tests: {:?}", r.asset, r.model, r.tests, r.counts);
                }
            }
            write_json(&cfg.output_dir.join("gof.json"), &tables)?;
        }
        Command::Backtest(c) => {
            let cfg = c.config()?;
            let p = panel(&cfg)?;
            let est = estimate_windows(&p, &cfg, checkpoint_dir(&cfg).as_deref())?;
            let rows = backtest_table(&est, &p.asset_ids, &cfg.models, &cfg)?;
            for r in &rows {
                let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
                println!(
                    "{:<12} {:<9} {:<8} days {:>4} breaches {:>3}  CLR {:>6}  BLR {:>6}  AS {:>6}",
                    r.period, r.model, r.asset, r.days, r.breaches, f(r.clr_p), f(r.blr_p), f(r.as_p)
                );
            }
            write_json(&cfg.output_dir.join("backtests.json"), &(&rows, backtest_counts(&rows, 0.05)))?;
        }
        Command::Optimize { common, window } => {
            let cfg = common.config()?;
            let p = panel(&cfg)?;
            let est = estimate_windows(&p, &cfg, checkpoint_dir(&cfg).as_deref())?;
            let idx = window.unwrap_or(est.len().saturating_sub(1));
            let e = est.get(idx).ok_or_else(|| mnts_risk::Error::Config(format!("no window {idx}")))?;
            println!("window {idx} ending {}", e.date);
            let grid = GridSettings::default();
            for s in strategy_grid(&cfg) {
                let Some(m) = e.models.get(&s.model) else {
                    println!("{:<28} model unavailable", s.id());
                    continue;
                };
                let mu: Vec<f64> = m.forecasts.iter().map(|f| f.mu).collect();
                let sigma: Vec<f64> = m.forecasts.iter().map(|f| f.sigma).collect();
                let seed = harness::day_seed(cfg.seed, idx as u64);
                let sc = ScenarioModel::from_estimate(m, &grid)?.scenarios(&mu, &sigma, cfg.n_scenarios, seed, p.asset_ids.clone())?;
                let mut prob = OptimizationProblem::new(&sc, s.rho);
                prob.mu = mu;
                prob.lambda = s.lambda;
                prob.cost_aversion = s.cost_aversion;
                prob.long_only = s.long_only;
                prob.epsilon = s.epsilon;
                match optimize(&prob, &cfg.solver.options()) {
                    Ok(r) => println!("{:<28} w = {:?}  risk/return = {:.4}", s.id(), r.weights.iter().map(|w| (w * 1e4).round() / 1e4).collect::<Vec<_>>(), r.risk / r.expected_return),
                    Err(err) => println!("{:<28} {err}", s.id()),
                }
            }
        }
        Command::Run(c) => {
            let cfg = c.config()?;
            let p = panel(&cfg)?;
            let started = std::time::Instant::now();
            let out = run_experiment(&p, &cfg)?;
            eprintln!("strategies done in {:.1}s", started.elapsed().as_secs_f64());
            let suite = statistical_suite(&p, &out.estimates, &cfg)?;
            for path in write_reports(&out, Some(&suite), &cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
            print_performance(&out)?;
            if !out.manifest.defects.is_empty() {
                eprintln!("{} defects recorded in manifest.json", out.manifest.defects.len());
            }
        }
        Command::Report { run, out, suite } => {
            let saved = RunOutput::load(&run)?;
            let dir = out.unwrap_or_else(|| run.parent().map(Path::to_path_buf).unwrap_or_default());
            let s = if suite { Some(statistical_suite(&saved.panel, &saved.estimates, &saved.config)?) } else { None };
            for path in write_reports(&saved, s.as_ref(), &dir)? {
                println!("wrote {}", path.display());
            }
            print_performance(&saved)?;
        }
    }
    Ok(())
}

fn print_performance(out: &RunOutput) -> Result<()> {
    let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!("{:<30} {:>10} {:>9} {:>9} {:>9} {:>8}", "strategy", "cum.ret", "sd", "AVaR", "FH", "sharpe");
    for r in performance_table(&out.ledgers, out.config.accounting)? {
        println!(
            "{:<30} {:>10.4} {:>9.4} {:>9} {:>9} {:>8}",
            r.strategy,
            r.cumulative_return,
            r.sd,
            f(r.avar),
            f(r.fh),
            f(r.sharpe_ratio)
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
