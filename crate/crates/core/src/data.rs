//! Price ingestion, log returns, rolling windows and descriptive statistics.
//!
//! Two CSV layouts are accepted and detected from the header:
//! - long form `date,asset,close`, one row per (date, asset);
//! - wide form `date,<asset1>,<asset2>,...`, one row per date.
//!
//! Dates may be written `YYYY-MM-DD` or `YYYY/MM/DD`. Assets are aligned on the
//! intersection of their dates; nothing is interpolated.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Daily close prices of one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    pub asset_id: String,
    pub dates: Vec<NaiveDate>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(asset_id: impl Into<String>, dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        let asset_id = asset_id.into();
        if dates.len() != prices.len() {
            return Err(Error::Validation(format!(
                "{asset_id}: {} dates but {} prices",
                dates.len(),
                prices.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "{asset_id}: dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some((i, p)) = prices.iter().enumerate().find(|(_, p)| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::Validation(format!(
                "{asset_id}: non-positive price {p} on {}",
                dates[i]
            )));
        }
        Ok(Self { asset_id, dates, prices })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Daily log returns of one asset. `dates[t]` is the date of the later price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub asset_id: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// `return_t = ln(p_t) - ln(p_{t-1})`.
pub fn to_returns(p: &PriceSeries) -> Result<ReturnSeries> {
    if p.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: p.len() });
    }
    let returns = p.prices.windows(2).map(|w| w[1].ln() - w[0].ln()).collect();
    Ok(ReturnSeries {
        asset_id: p.asset_id.clone(),
        dates: p.dates[1..].to_vec(),
        returns,
    })
}

/// Column layout of a price file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    /// `date,asset,close`
    Long,
    /// `date,<asset1>,...`
    Wide,
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y/%m/%d"))
        .ok()
}

fn parse_price(s: &str, row: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse { row, msg: format!("unparseable price {s:?}") })?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Validation(format!("row {row}: non-positive price {v}")));
    }
    Ok(v)
}

pub fn detect_layout(header: &csv::StringRecord) -> CsvLayout {
    let cols: Vec<String> = header.iter().map(|c| c.trim().to_ascii_lowercase()).collect();
    if cols.len() == 3 && cols[0] == "date" && cols[1] == "asset" && cols[2] == "close" {
        CsvLayout::Long
    } else {
        CsvLayout::Wide
    }
}

/// Reads prices from any CSV reader, aligning assets on their common dates.
pub fn read_prices<R: std::io::Read>(reader: R) -> Result<Vec<PriceSeries>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse { row: 1, msg: "header needs a date column and at least one asset".into() });
    }
    let mut by_asset: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();

    match detect_layout(&header) {
        CsvLayout::Long => {
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 2;
                let rec = rec?;
                if rec.len() != 3 {
                    return Err(Error::Parse { row, msg: format!("expected 3 fields, got {}", rec.len()) });
                }
                let date = parse_date(&rec[0])
                    .ok_or_else(|| Error::Parse { row, msg: format!("unparseable date {:?}", &rec[0]) })?;
                let asset = rec[1].trim().to_string();
                let price = parse_price(&rec[2], row)?;
                if !by_asset.contains_key(&asset) {
                    order.push(asset.clone());
                }
                if by_asset.entry(asset.clone()).or_default().insert(date, price).is_some() {
                    return Err(Error::Parse { row, msg: format!("duplicate {asset} price on {date}") });
                }
            }
        }
        CsvLayout::Wide => {
            let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
            for n in &names {
                by_asset.insert(n.clone(), BTreeMap::new());
                order.push(n.clone());
            }
            for (i, rec) in rdr.records().enumerate() {
                let row = i + 2;
                let rec = rec?;
                if rec.len() != header.len() {
                    return Err(Error::Parse {
                        row,
                        msg: format!("expected {} fields, got {}", header.len(), rec.len()),
                    });
                }
                let date = parse_date(&rec[0])
                    .ok_or_else(|| Error::Parse { row, msg: format!("unparseable date {:?}", &rec[0]) })?;
                for (j, name) in names.iter().enumerate() {
                    let cell = rec[j + 1].trim();
                    if cell.is_empty() {
                        continue;
                    }
                    let price = parse_price(cell, row)?;
                    if by_asset.get_mut(name).unwrap().insert(date, price).is_some() {
                        return Err(Error::Parse { row, msg: format!("duplicate date {date}") });
                    }
                }
            }
        }
    }

    let mut common: Option<BTreeSet<NaiveDate>> = None;
    for m in by_asset.values() {
        let keys: BTreeSet<NaiveDate> = m.keys().copied().collect();
        common = Some(match common {
            None => keys,
            Some(c) => c.intersection(&keys).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.is_empty() {
        return Err(Error::Alignment("no date is shared by all assets".into()));
    }
    let dates: Vec<NaiveDate> = common.into_iter().collect();
    order
        .into_iter()
        .map(|a| {
            let m = &by_asset[&a];
            let prices = dates.iter().map(|d| m[d]).collect();
            PriceSeries::new(a, dates.clone(), prices)
        })
        .collect()
}

pub fn load_prices(path: impl AsRef<Path>) -> Result<Vec<PriceSeries>> {
    let f = std::fs::File::open(path)?;
    read_prices(std::io::BufReader::new(f))
}

/// Aligned multi-asset return panel. `returns[asset][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPanel {
    pub asset_ids: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<Vec<f64>>,
}

impl ReturnPanel {
    pub fn from_prices(prices: &[PriceSeries]) -> Result<Self> {
        let series = prices.iter().map(to_returns).collect::<Result<Vec<_>>>()?;
        Self::from_series(&series)
    }

    pub fn from_series(series: &[ReturnSeries]) -> Result<Self> {
        let first = series.first().ok_or_else(|| Error::Validation("no assets".into()))?;
        for s in series {
            if s.dates != first.dates {
                return Err(Error::Alignment(format!("{} is not on the common date grid", s.asset_id)));
            }
        }
        Ok(Self {
            asset_ids: series.iter().map(|s| s.asset_id.clone()).collect(),
            dates: first.dates.clone(),
            returns: series.iter().map(|s| s.returns.clone()).collect(),
        })
    }

    pub fn n_assets(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn series(&self, asset: usize) -> ReturnSeries {
        ReturnSeries {
            asset_id: self.asset_ids[asset].clone(),
            dates: self.dates.clone(),
            returns: self.returns[asset].clone(),
        }
    }

    /// Cross-section of all asset returns at row `t`.
    pub fn row(&self, t: usize) -> Vec<f64> {
        self.returns.iter().map(|r| r[t]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub length: usize,
    pub step: usize,
}

impl WindowSpec {
    pub fn new(length: usize, step: usize) -> Result<Self> {
        if length == 0 || step == 0 {
            return Err(Error::Validation("window length and step must be positive".into()));
        }
        Ok(Self { length, step })
    }

    /// `floor((T - length) / step) + 1`, or zero when the series is shorter than a window.
    pub fn count(&self, series_len: usize) -> usize {
        if series_len < self.length {
            0
        } else {
            (series_len - self.length) / self.step + 1
        }
    }
}

/// One estimation window over a panel: rows `start..end`, plus the next row as
/// the realization target when the panel extends past the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    pub target: Option<usize>,
}

impl Window {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    /// Returns of asset `a` inside the window.
    pub fn block<'a>(&self, panel: &'a ReturnPanel, a: usize) -> &'a [f64] {
        &panel.returns[a][self.start..self.end]
    }
}

/// Enumerates rolling windows. Every window has exactly `spec.length` rows.
pub fn windows(series_len: usize, spec: WindowSpec) -> Result<Vec<Window>> {
    if series_len < spec.length {
        return Err(Error::InsufficientData { needed: spec.length, got: series_len });
    }
    Ok((0..spec.count(series_len))
        .map(|index| {
            let start = index * spec.step;
            let end = start + spec.length;
            Window { index, start, end, target: (end < series_len).then_some(end) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub count: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Unbiased (n-1) standard deviation.
    pub sd: f64,
    /// Fourth standardized central moment; 3 for a normal sample unless `excess` is set.
    pub kurtosis: f64,
    pub skewness: f64,
    pub excess: bool,
}

/// Sample statistics. Skewness and kurtosis use population central moments
/// (`m3 / m2^1.5`, `m4 / m2^2`).
pub fn describe(r: &[f64], excess_kurtosis: bool) -> Result<DescriptiveStats> {
    let n = r.len();
    if n < 4 {
        return Err(Error::InsufficientData { needed: 4, got: n });
    }
    let nf = n as f64;
    let mean = r.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in r {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let scale = r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m2.sqrt() <= 1e-12 * scale || m2 == 0.0 {
        return Err(Error::Degenerate("constant series: kurtosis and skewness undefined".into()));
    }
    let kurt = m4 / (m2 * m2);
    Ok(DescriptiveStats {
        count: n,
        mean,
        max: r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: r.iter().copied().fold(f64::INFINITY, f64::min),
        sd: (m2 * nf / (nf - 1.0)).sqrt(),
        kurtosis: if excess_kurtosis { kurt - 3.0 } else { kurt },
        skewness: m3 / m2.powf(1.5),
        excess: excess_kurtosis,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn two_row_file() {
        let csv = "date,asset,close\n2020-01-01,BTC,100\n2020-01-02,BTC,110\n";
        let p = read_prices(csv.as_bytes()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].len(), 2);
        assert_eq!(p[0].prices, vec![100.0, 110.0]);
    }

    #[test]
    fn zero_price_rejected() {
        let csv = "date,asset,close\n2020-01-01,BTC,100\n2020-01-02,BTC,0\n";
        assert!(matches!(read_prices(csv.as_bytes()), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let csv = "date,A,B\n2020/01/01,1,2\n2020/01/02,x,2\n";
        match read_prices(csv.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wide_form_intersects_dates() {
        let csv = "date,A,B\n2020/01/01,1,2\n2020/01/02,,3\n2020/01/03,2,4\n";
        let p = read_prices(csv.as_bytes()).unwrap();
        assert_eq!(p[0].dates, vec![d("2020-01-01"), d("2020-01-03")]);
        assert_eq!(p[1].prices, vec![2.0, 4.0]);
    }

    #[test]
    fn empty_intersection() {
        let csv = "date,asset,close\n2020-01-01,A,1\n2020-01-02,B,1\n";
        assert!(matches!(read_prices(csv.as_bytes()), Err(Error::Alignment(_))));
    }

    #[test]
    fn returns_examples() {
        let mk = |p: Vec<f64>| {
            let dates = (0..p.len()).map(|i| d("2020-01-01") + chrono::Days::new(i as u64)).collect();
            PriceSeries::new("X", dates, p).unwrap()
        };
        assert_eq!(to_returns(&mk(vec![100.0, 100.0])).unwrap().returns, vec![0.0]);
        let r = to_returns(&mk(vec![100.0, 100.0 * std::f64::consts::E])).unwrap();
        assert!((r.returns[0] - 1.0).abs() < 1e-15);
        let r = to_returns(&mk(vec![100.0, 110.0, 99.0])).unwrap();
        assert!((r.returns[0] - 1.1f64.ln()).abs() < 1e-15);
        assert!((r.returns[1] - 0.9f64.ln()).abs() < 1e-15);
        assert!(matches!(to_returns(&mk(vec![100.0])), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn window_counts() {
        assert_eq!(windows(1674, WindowSpec::new(500, 1).unwrap()).unwrap().len(), 1175);
        assert_eq!(windows(500, WindowSpec::new(500, 1).unwrap()).unwrap().len(), 1);
        let w = windows(10, WindowSpec::new(3, 2).unwrap()).unwrap();
        assert_eq!(w.iter().map(|w| w.start).collect::<Vec<_>>(), vec![0, 2, 4, 6]);
        assert!(w.iter().all(|w| w.end - w.start == 3));
        assert_eq!(w[3].target, Some(9));
        assert!(windows(2, WindowSpec::new(3, 1).unwrap()).is_err());
    }

    #[test]
    fn describe_constant_is_degenerate() {
        assert!(matches!(describe(&[0.01; 10], false), Err(Error::Degenerate(_))));
        assert!(describe(&[1.0, 2.0, 3.0], false).is_err());
    }
}
