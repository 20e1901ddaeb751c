//! Multivariate normal tempered stable risk engine.
//!
//! ARMA(1,1)-GARCH(1,1) filtering with normal, Student-t and MNTS residuals,
//! scenario generation, risk measures (SD, VaR, AVaR, Foster-Hart),
//! goodness-of-fit tests, forecast backtests and rolling mean-risk
//! portfolio optimization.

pub mod backtest;
pub mod data;
pub mod error;
pub mod forecast;
pub mod gof;
pub mod harness;
pub mod nts;
pub mod optim;
pub mod optimizer;
pub mod risk;
pub mod timeseries;

pub use error::{Error, Result};
