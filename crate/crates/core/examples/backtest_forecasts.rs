//! Backtests one year of 99% VaR/AVaR forecasts with the CLR, BLR and AS
//! tests, once for a correctly specified model and once for a thin-tailed one.

use chrono::{Duration, NaiveDate};
use mnts_risk::backtest::{run_all, ForecastStream};
use mnts_risk::forecast::{MarginalForecast, StdLaw};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mnts_risk::Result<()> {
    let eps = 0.01;
    let t = 750;
    let d0 = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
    let dates: Vec<NaiveDate> = (0..t).map(|i| d0 + Duration::days(i as i64)).collect();
    let truth = StdLaw::StudentT { nu: 3.5 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sigma: Vec<f64> = (0..t).map(|i| 0.02 + 0.01 * ((i as f64) / 40.0).sin().abs()).collect();
    let realized: Vec<f64> = sigma.iter().map(|s| s * truth.sample(&mut rng)).collect();

    for (name, law) in [("Student-t (true)", truth.clone()), ("normal", StdLaw::Normal)] {
        let forecasts = sigma.iter().map(|&s| MarginalForecast::new(0.0, s, law.clone())).collect::<Result<Vec<_>, _>>()?;
        let stream = ForecastStream::from_forecasts(dates.clone(), forecasts, realized.clone(), eps)?;
        let s = run_all(&stream, eps, 2000, 99)?;
        println!(
            "{name:<17} breaches {:>3}/{t}  CLR p {:.4}  BLR p {:.4}  AS Z {:+.3} p {:.4}",
            s.clr.breaches, s.clr.p_value, s.blr.p_value, s.as_test.z_stat, s.as_test.p_value
        );
    }
    Ok(())
}
