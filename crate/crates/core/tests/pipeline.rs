//! End-to-end checks of the rolling harness on a small synthetic panel:
//! ledger accounting, paired scenarios, checkpoint reuse, reports and the CLI.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use mnts_risk::data::{load_prices, ReturnPanel};
use mnts_risk::harness::{
    cumulative_curve, estimate_windows, performance_table, run_experiment, simulate_panel, statistical_suite,
    write_reports, Model, RunConfig, RunOutput, SimulationConfig, StrategyGrid, WindowConfig,
};
use mnts_risk::optimizer::RiskMeasure;

struct Fixture {
    _dir: tempfile::TempDir,
    cfg: RunConfig,
    panel: ReturnPanel,
    out: RunOutput,
}

fn small_config(dir: &Path) -> RunConfig {
    RunConfig {
        output_dir: dir.to_path_buf(),
        simulate: SimulationConfig { assets: 3, length: 130, seed: 11, ..SimulationConfig::default() },
        window: WindowConfig { length: 100, step: 1 },
        refit_every: 10,
        n_scenarios: 2000,
        strategies: StrategyGrid {
            rho: RiskMeasure::ALL.to_vec(),
            lambda: vec![0.0, 1e-3],
            cost_aversion: vec![0.1, 1.0],
            long_only: vec![false],
        },
        checkpoint: true,
        ..RunConfig::default()
    }
}

fn fixture() -> &'static Fixture {
    static FIX: OnceLock<Fixture> = OnceLock::new();
    FIX.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let panel = simulate_panel(&cfg.simulate).unwrap();
        let out = run_experiment(&panel, &cfg).unwrap();
        Fixture { _dir: dir, cfg, panel, out }
    })
}

#[test]
fn ledgers_cover_every_strategy_and_trading_day() {
    let f = fixture();
    assert_eq!(f.out.ledgers.len(), 3 * 3 * 2 * 2);
    assert_eq!(f.out.estimates.len(), 31);
    assert_eq!(f.out.manifest.trading_days, 30);
    for l in &f.out.ledgers {
        assert_eq!(l.records.len(), 30, "{}", l.id);
    }
}

#[test]
fn accounting_identity_holds_exactly() {
    let f = fixture();
    for l in &f.out.ledgers {
        let mut prev = vec![0.0; f.panel.n_assets()];
        let mut total = 0.0;
        for r in &l.records {
            let t = f.out.estimates[r.window].window.target.unwrap();
            let gross: f64 = r.weights.iter().zip(f.panel.row(t)).map(|(w, x)| w * x).sum();
            let turnover: f64 = r.weights.iter().zip(&prev).map(|(a, b)| (a - b).abs()).sum();
            assert_eq!(r.gross_return, gross);
            assert_eq!(r.turnover, turnover);
            assert_eq!(r.net_return, gross - l.strategy.lambda * turnover);
            total += r.net_return;
            prev = r.weights.clone();
        }
        let curve = cumulative_curve(l, f.cfg.accounting);
        assert_eq!(curve.last().unwrap().1, total);
    }
    let perf = performance_table(&f.out.ledgers, f.cfg.accounting).unwrap();
    for (row, l) in perf.iter().zip(&f.out.ledgers) {
        assert_eq!(row.cumulative_return, *l.cumulative(f.cfg.accounting).last().unwrap());
    }
}

#[test]
fn costless_ledgers_ignore_cost_aversion() {
    let f = fixture();
    for l in f.out.ledgers.iter().filter(|l| l.strategy.lambda == 0.0) {
        for other in f.out.ledgers.iter().filter(|o| o.strategy.lambda == 0.0) {
            let same = other.strategy.model == l.strategy.model && other.strategy.rho == l.strategy.rho;
            if same {
                assert_eq!(other.records, l.records, "{} vs {}", l.id, other.id);
            }
        }
    }
}

#[test]
fn student_t_models_share_the_mean_sd_ledger() {
    let f = fixture();
    let sd = |m: Model| {
        f.out
            .ledgers
            .iter()
            .filter(move |l| l.strategy.model == m && l.strategy.rho == RiskMeasure::Sd)
            .map(|l| l.net_returns())
            .collect::<Vec<_>>()
    };
    assert_eq!(sd(Model::Agt), sd(Model::Agnts));
    assert_ne!(sd(Model::Agt), sd(Model::AgNormal));
}

#[test]
fn checkpoints_reproduce_the_estimates() {
    let f = fixture();
    let ckpt = f.cfg.output_dir.join("checkpoints");
    let files = std::fs::read_dir(&ckpt).unwrap().count();
    assert_eq!(files, f.out.estimates.len());
    let again = estimate_windows(&f.panel, &f.cfg, Some(&ckpt)).unwrap();
    assert_eq!(again, f.out.estimates);
}

#[test]
fn reports_and_saved_run_round_trip() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let suite = statistical_suite(&f.panel, &f.out.estimates, &f.cfg).unwrap();
    let written = write_reports(&f.out, Some(&suite), dir.path()).unwrap();
    for name in ["performance.csv", "cumulative.csv", "daily.csv", "gof_ad.csv", "backtests.csv", "manifest.json", "run.json"] {
        assert!(written.iter().any(|p| p.ends_with(name)), "{name} missing");
    }
    let loaded = RunOutput::load(dir.path().join("run.json")).unwrap();
    assert_eq!(loaded.ledgers, f.out.ledgers);
    assert_eq!(loaded.manifest, f.out.manifest);
    assert_eq!(loaded.config, f.cfg);

    let toml = f.cfg.to_toml().unwrap();
    assert_eq!(RunConfig::from_toml_str(&toml).unwrap(), f.cfg);

    let daily = std::fs::read_to_string(dir.path().join("daily.csv")).unwrap();
    assert_eq!(daily.lines().count(), 1 + f.out.ledgers.len() * 30);
}

#[test]
fn cli_describe_reads_a_wide_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("prices.csv");
    let mut text = String::from("date,AAA,BBB\n");
    let mut p = [100.0f64, 50.0];
    for d in 0..40i64 {
        p[0] *= 1.0 + 0.01 * ((d % 5) as f64 - 2.0);
        p[1] *= 1.0 + 0.02 * ((d % 3) as f64 - 1.0);
        let date = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(d);
        text.push_str(&format!("{date},{},{}\n", p[0], p[1]));
    }
    std::fs::write(&csv, text).unwrap();
    assert_eq!(load_prices(&csv).unwrap().len(), 2);

    let out_csv = dir.path().join("describe.csv");
    let output = Command::new(env!("CARGO_BIN_EXE_mnts-risk"))
        .args(["describe", csv.to_str().unwrap(), "--csv", out_csv.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("AAA") && stdout.contains("BBB"));
    assert_eq!(std::fs::read_to_string(out_csv).unwrap().lines().count(), 3);
}
