//! Loads a price CSV (long or wide layout) and prints descriptive statistics
//! of the daily log returns. Without an argument a small synthetic file is used.
//!
//! ```text
//! cargo run --example describe_returns -- prices.csv
//! ```

use mnts_risk::data::{describe, load_prices, ReturnPanel};

fn main() -> mnts_risk::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => std::path::PathBuf::from(p),
        None => {
            let dir = std::env::temp_dir().join("mnts_risk_describe_example");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("prices.csv");
            let mut text = String::from("date,asset,close\n");
            let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
            for (asset, drift, swing) in [("AAA", 0.001, 0.02), ("BBB", -0.0005, 0.04)] {
                let mut p = 100.0f64;
                for d in 0..250i64 {
                    p *= (drift + swing * ((d * 7919 % 101) as f64 / 50.0 - 1.0)).exp();
                    text.push_str(&format!("{},{asset},{p}\n", start + chrono::Duration::days(d)));
                }
            }
            std::fs::write(&path, text)?;
            path
        }
    };

    let panel = ReturnPanel::from_prices(&load_prices(&path)?)?;
    println!("{:<8} {:>6} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9}", "asset", "n", "mean", "max", "min", "sd", "kurt", "skew");
    for (id, r) in panel.asset_ids.iter().zip(&panel.returns) {
        let s = describe(r, false)?;
        println!(
            "{id:<8} {:>6} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>9.4} {:>9.4}",
            s.count, s.mean, s.max, s.min, s.sd, s.kurtosis, s.skewness
        );
    }
    Ok(())
}
