//! Performance, goodness-of-fit and backtest tables, and their CSV/JSON output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::estimate::forecast_series;
use super::run::{RunLedger, RunOutput};
use super::scenarios::day_seed;
use super::{Accounting, Model, RunConfig, WindowEstimate};
use crate::backtest::{as_test, blr_tail_test_pit, clr_test, BreachSeries, ForecastStream, Period, MIN_CLR_LENGTH};
use crate::data::{describe, DescriptiveStats, ReturnPanel};
use crate::error::{Error, Result};
use crate::gof::{rejection_table, GofResult, RejectionRow, DEFAULT_LEVELS};
use crate::nts::GridSettings;
use crate::risk::{avar, foster_hart, sd, tail_count};

/// Tail probability of the realized-return AVaR in the performance table.
pub const PERFORMANCE_EPSILON: f64 = 0.01;

/// Realized performance of one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub strategy: String,
    pub model: Model,
    pub rho: String,
    pub lambda: f64,
    pub cost_aversion: f64,
    pub days: usize,
    /// Cumulative net return under `accounting`.
    pub cumulative_return: f64,
    /// Sample SD (n-1) of daily net returns.
    pub sd: f64,
    /// Historical AVaR of daily net returns; absent when fewer than `1 / 0.01` days.
    pub avar: Option<f64>,
    /// Foster-Hart riskiness of daily net returns; absent when they are not a gamble.
    pub fh: Option<f64>,
    /// Cumulative return over SD.
    pub sharpe_ratio: Option<f64>,
    pub return_to_avar: Option<f64>,
    pub return_to_fh: Option<f64>,
    pub accounting: Accounting,
    /// Days with carried-forward weights.
    pub defect_days: usize,
}

fn ratio(a: f64, b: Option<f64>) -> Option<f64> {
    b.filter(|b| *b != 0.0 && b.is_finite()).map(|b| a / b)
}

/// One row per ledger.
pub fn performance_table(ledgers: &[RunLedger], accounting: Accounting) -> Result<Vec<PerformanceRow>> {
    ledgers
        .iter()
        .map(|l| {
            let net = l.net_returns();
            if net.len() < 2 {
                return Err(Error::InsufficientData { needed: 2, got: net.len() });
            }
            let cumulative_return = *l.cumulative(accounting).last().expect("non-empty");
            let sd = sd(&net)?;
            let avar = tail_count(net.len(), PERFORMANCE_EPSILON).ok().and_then(|_| avar(&net, PERFORMANCE_EPSILON).ok());
            let fh = foster_hart(&net, 1e-10).ok();
            Ok(PerformanceRow {
                strategy: l.id.clone(),
                model: l.strategy.model,
                rho: l.strategy.rho.label().to_string(),
                lambda: l.strategy.lambda,
                cost_aversion: l.strategy.cost_aversion,
                days: net.len(),
                cumulative_return,
                sd,
                avar,
                fh,
                sharpe_ratio: ratio(cumulative_return, Some(sd)),
                return_to_avar: ratio(cumulative_return, avar),
                return_to_fh: ratio(cumulative_return, fh),
                accounting,
                defect_days: l.records.iter().filter(|r| r.defect.is_some()).count(),
            })
        })
        .collect()
}

/// `(date, cumulative net return)` after each day.
pub fn cumulative_curve(ledger: &RunLedger, accounting: Accounting) -> Vec<(NaiveDate, f64)> {
    ledger.records.iter().map(|r| r.date).zip(ledger.cumulative(accounting)).collect()
}

/// KS and AD rejection counts of the in-sample residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofTables {
    pub ks: Vec<RejectionRow>,
    pub ad: Vec<RejectionRow>,
}

pub fn gof_tables(estimates: &[WindowEstimate], asset_ids: &[String], models: &[Model]) -> Result<GofTables> {
    let mut ks: BTreeMap<(String, String), Vec<GofResult>> = BTreeMap::new();
    let mut ad: BTreeMap<(String, String), Vec<GofResult>> = BTreeMap::new();
    for e in estimates {
        for (model, m) in &e.models {
            for (a, id) in asset_ids.iter().enumerate() {
                let key = (id.clone(), model.label().to_string());
                ks.entry(key.clone()).or_default().push(m.ks[a].clone());
                ad.entry(key).or_default().push(m.ad[a].clone());
            }
        }
    }
    let labels: Vec<String> = models.iter().map(|m| m.label().to_string()).collect();
    Ok(GofTables {
        ks: rejection_table(&ks, asset_ids, &labels, &DEFAULT_LEVELS)?,
        ad: rejection_table(&ad, asset_ids, &labels, &DEFAULT_LEVELS)?,
    })
}

/// Backtest outcome of one `(period, model, asset)` stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub period: String,
    pub model: Model,
    pub asset: String,
    pub days: usize,
    pub breaches: usize,
    pub clr_p: Option<f64>,
    pub blr_p: Option<f64>,
    pub as_z: Option<f64>,
    pub as_p: Option<f64>,
    /// Why a test is missing.
    pub note: Option<String>,
}

/// Number of streams with `p < level` per `(period, model, test)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestCount {
    pub period: String,
    pub model: Model,
    pub test: String,
    pub level: f64,
    pub rejections: usize,
    pub streams: usize,
}

/// Full sample plus the configured periods that hold at least
/// [`MIN_CLR_LENGTH`] forecast days.
fn report_periods(dates: &[NaiveDate], configured: &[Period]) -> Vec<Period> {
    let mut out = Vec::new();
    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        out.push(Period::new("Full sample", *first, *last));
    }
    out.extend(configured.iter().filter(|p| p.range(dates).len() >= MIN_CLR_LENGTH).cloned());
    out
}

pub fn backtest_table(
    estimates: &[WindowEstimate],
    asset_ids: &[String],
    models: &[Model],
    cfg: &RunConfig,
) -> Result<Vec<BacktestRow>> {
    let grid = GridSettings::default();
    let mut rows = Vec::new();
    for (mi, &model) in models.iter().enumerate() {
        for (a, id) in asset_ids.iter().enumerate() {
            let series = forecast_series(estimates, model, a);
            let dates: Vec<NaiveDate> = series.iter().map(|s| s.0).collect();
            for (pi, period) in report_periods(&dates, &cfg.backtest.periods).iter().enumerate() {
                let slice = &series[period.range(&dates)];
                let realized: Vec<f64> = slice.iter().map(|s| s.1.realized.expect("filtered")).collect();
                let var: Vec<f64> = slice.iter().map(|s| s.1.var).collect();
                let breaches = BreachSeries::from_parts(&realized, &var);
                let mut row = BacktestRow {
                    period: period.label.clone(),
                    model,
                    asset: id.clone(),
                    days: slice.len(),
                    breaches: breaches.count(),
                    clr_p: None,
                    blr_p: None,
                    as_z: None,
                    as_p: None,
                    note: None,
                };
                let mut notes = Vec::new();
                match clr_test(&breaches, cfg.epsilon) {
                    Ok(r) => row.clr_p = Some(r.p_value),
                    Err(e) => notes.push(format!("CLR: {e}")),
                }
                let pit: Vec<f64> = slice.iter().filter_map(|s| s.1.pit).collect();
                match blr_tail_test_pit(&pit, cfg.epsilon) {
                    Ok(r) => row.blr_p = Some(r.p_value),
                    Err(e) => notes.push(format!("BLR: {e}")),
                }
                let stream = slice
                    .iter()
                    .map(|s| s.1.marginal(&grid))
                    .collect::<Result<Vec<_>>>()
                    .and_then(|forecasts| {
                        let f = ForecastStream {
                            dates: slice.iter().map(|s| s.0).collect(),
                            var,
                            avar: slice.iter().map(|s| s.1.avar).collect(),
                            realized,
                            forecasts,
                        };
                        let seed = day_seed(cfg.seed ^ 0xA5A5_5A5A, ((pi * 16 + mi) * 4096 + a) as u64);
                        as_test(&f, cfg.epsilon, cfg.backtest.n_sim, seed)
                    });
                match stream {
                    Ok(r) => {
                        row.as_z = Some(r.z_stat);
                        row.as_p = Some(r.p_value);
                    }
                    Err(e) => notes.push(format!("AS: {e}")),
                }
                if !notes.is_empty() {
                    row.note = Some(notes.join("; "));
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Rejection counts of `rows` at `level`.
pub fn backtest_counts(rows: &[BacktestRow], level: f64) -> Vec<BacktestCount> {
    let mut map: BTreeMap<(String, Model, &'static str), (usize, usize)> = BTreeMap::new();
    for r in rows {
        for (test, p) in [("CLR", r.clr_p), ("BLR", r.blr_p), ("AS", r.as_p)] {
            if let Some(p) = p {
                let e = map.entry((r.period.clone(), r.model, test)).or_default();
                e.1 += 1;
                if p < level {
                    e.0 += 1;
                }
            }
        }
    }
    map.into_iter()
        .map(|((period, model, test), (rejections, streams))| BacktestCount {
            period,
            model,
            test: test.to_string(),
            level,
            rejections,
            streams,
        })
        .collect()
}

/// Descriptive statistics, goodness of fit and VaR/AVaR backtests of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticalSuite {
    pub describe: Vec<(String, DescriptiveStats)>,
    pub gof: GofTables,
    pub backtests: Vec<BacktestRow>,
    pub backtest_counts: Vec<BacktestCount>,
}

pub fn statistical_suite(panel: &ReturnPanel, estimates: &[WindowEstimate], cfg: &RunConfig) -> Result<StatisticalSuite> {
    let describe = panel
        .asset_ids
        .iter()
        .zip(&panel.returns)
        .map(|(id, r)| Ok((id.clone(), describe(r, false)?)))
        .collect::<Result<Vec<_>>>()?;
    let backtests = backtest_table(estimates, &panel.asset_ids, &cfg.models, cfg)?;
    Ok(StatisticalSuite {
        describe,
        gof: gof_tables(estimates, &panel.asset_ids, &cfg.models)?,
        backtest_counts: backtest_counts(&backtests, 0.05),
        backtests,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(s: &[&str]) -> Vec<String> {
    s.iter().map(|v| v.to_string()).collect()
}

/// Describe table as CSV.
pub fn write_describe(path: &Path, stats: &[(String, DescriptiveStats)]) -> Result<()> {
    write_csv(
        path,
        &strings(&["asset", "count", "mean", "max", "min", "sd", "kurtosis", "skewness"]),
        stats.iter().map(|(id, s)| {
            vec![
                id.clone(),
                s.count.to_string(),
                s.mean.to_string(),
                s.max.to_string(),
                s.min.to_string(),
                s.sd.to_string(),
                s.kurtosis.to_string(),
                s.skewness.to_string(),
            ]
        }),
    )
}

fn write_rejections(path: &Path, rows: &[RejectionRow]) -> Result<()> {
    let mut header = strings(&["asset", "model", "tests"]);
    header.extend(DEFAULT_LEVELS.iter().map(|l| format!("p<{l}")));
    write_csv(
        path,
        &header,
        rows.iter().map(|r| {
            let mut v = vec![r.asset.clone(), r.model.clone(), r.tests.to_string()];
            v.extend(r.counts.iter().map(|c| c.to_string()));
            v
        }),
    )
}

/// Writes every report of `out` (and `suite`, when given) into `dir` and
/// returns the written paths.
pub fn write_reports(out: &RunOutput, suite: Option<&StatisticalSuite>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let acc = out.config.accounting;

    let p = dir.join("performance.csv");
    let perf = performance_table(&out.ledgers, acc)?;
    write_csv(
        &p,
        &strings(&[
            "strategy",
            "model",
            "rho",
            "lambda",
            "cost_aversion",
            "days",
            "cumulative_return",
            "sd",
            "avar",
            "fh",
            "sharpe_ratio",
            "return_to_avar",
            "return_to_fh",
            "accounting",
            "defect_days",
        ]),
        perf.iter().map(|r| {
            vec![
                r.strategy.clone(),
                r.model.to_string(),
                r.rho.clone(),
                r.lambda.to_string(),
                r.cost_aversion.to_string(),
                r.days.to_string(),
                r.cumulative_return.to_string(),
                r.sd.to_string(),
                opt(r.avar),
                opt(r.fh),
                opt(r.sharpe_ratio),
                opt(r.return_to_avar),
                opt(r.return_to_fh),
                format!("{:?}", r.accounting).to_lowercase(),
                r.defect_days.to_string(),
            ]
        }),
    )?;
    written.push(p);

    let p = dir.join("cumulative.csv");
    write_csv(
        &p,
        &strings(&["strategy", "date", "cumulative_return"]),
        out.ledgers.iter().flat_map(|l| {
            cumulative_curve(l, acc).into_iter().map(|(d, c)| vec![l.id.clone(), d.to_string(), c.to_string()])
        }),
    )?;
    written.push(p);

    let p = dir.join("daily.csv");
    let mut header = strings(&["strategy", "date"]);
    header.extend(out.panel.asset_ids.iter().map(|a| format!("w_{a}")));
    header.extend(strings(&["turnover", "cost", "gross_return", "net_return", "var", "avar", "defect"]));
    write_csv(
        &p,
        &header,
        out.ledgers.iter().flat_map(|l| {
            l.records.iter().map(|r| {
                let mut v = vec![l.id.clone(), r.date.to_string()];
                v.extend(r.weights.iter().map(|w| w.to_string()));
                v.extend([
                    r.turnover.to_string(),
                    r.cost.to_string(),
                    r.gross_return.to_string(),
                    r.net_return.to_string(),
                    opt(r.var),
                    opt(r.avar),
                    r.defect.clone().unwrap_or_default(),
                ]);
                v
            })
        }),
    )?;
    written.push(p);

    if let Some(s) = suite {
        let p = dir.join("describe.csv");
        write_describe(&p, &s.describe)?;
        written.push(p);
        for (name, rows) in [("gof_ks.csv", &s.gof.ks), ("gof_ad.csv", &s.gof.ad)] {
            let p = dir.join(name);
            write_rejections(&p, rows)?;
            written.push(p);
        }
        let p = dir.join("backtests.csv");
        write_csv(
            &p,
            &strings(&["period", "model", "asset", "days", "breaches", "clr_p", "blr_p", "as_z", "as_p", "note"]),
            s.backtests.iter().map(|r| {
                vec![
                    r.period.clone(),
                    r.model.to_string(),
                    r.asset.clone(),
                    r.days.to_string(),
                    r.breaches.to_string(),
                    opt(r.clr_p),
                    opt(r.blr_p),
                    opt(r.as_z),
                    opt(r.as_p),
                    r.note.clone().unwrap_or_default(),
                ]
            }),
        )?;
        written.push(p);
        let p = dir.join("backtest_counts.csv");
        write_csv(
            &p,
            &strings(&["period", "model", "test", "level", "rejections", "streams"]),
            s.backtest_counts.iter().map(|c| {
                vec![
                    c.period.clone(),
                    c.model.to_string(),
                    c.test.clone(),
                    c.level.to_string(),
                    c.rejections.to_string(),
                    c.streams.to_string(),
                ]
            }),
        )?;
        written.push(p);
    }

    let p = dir.join("manifest.json");
    std::fs::File::create(&p)?.write_all(serde_json::to_string_pretty(&out.manifest)?.as_bytes())?;
    written.push(p);
    let p = dir.join("run.json");
    out.save(&p)?;
    written.push(p);
    let p = dir.join("config.toml");
    std::fs::write(&p, out.config.to_toml()?)?;
    written.push(p);
    Ok(written)
}
