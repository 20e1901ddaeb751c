//! Kolmogorov-Smirnov and Anderson-Darling tests against fully specified nulls.
//!
//! Parameters of the null distribution are treated as known, so p-values use
//! the case-0 limit laws. For fitted nulls this leans toward under-rejection.
//!
//! The Anderson-Darling p-value follows Marsaglia and Marsaglia (2004),
//! "Evaluating the Anderson-Darling distribution", J. Stat. Software 9(2):
//! a series approximation of the limit law plus a finite-`n` correction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of a one-sample test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Label of the null distribution.
    pub distribution: String,
}

/// Minimum sample size accepted by [`ks_test`] and [`ad_test`].
pub const MIN_SAMPLE: usize = 20;

/// Clip applied to null CDF values before taking logarithms.
pub const CDF_CLIP: f64 = 1e-12;

/// Sorted null-CDF values `F(x_(i))`, rejecting values outside `[0, 1]`.
fn sorted_pit<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> Result<Vec<f64>> {
    let mut u = Vec::with_capacity(sample.len());
    for &x in sample {
        let v = cdf(x);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Contract(format!("cdf({x}) = {v} lies outside [0, 1]")));
        }
        u.push(v);
    }
    u.sort_by(f64::total_cmp);
    Ok(u)
}

fn check_len(n: usize) -> Result<()> {
    if n < MIN_SAMPLE {
        return Err(Error::InsufficientData { needed: MIN_SAMPLE, got: n });
    }
    Ok(())
}

/// `sup |F_n - F|` from sorted probability integral transforms.
pub fn ks_statistic(sorted_u: &[f64]) -> f64 {
    let n = sorted_u.len() as f64;
    sorted_u.iter().enumerate().fold(0.0f64, |d, (i, &u)| {
        let above = (i + 1) as f64 / n - u;
        let below = u - i as f64 / n;
        d.max(above).max(below)
    })
}

/// `P(K > lambda)` for the Kolmogorov limit law.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // theta-function form converges fast for small lambda
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for k in 1..=20 {
            let m = (2 * k - 1) as f64;
            cdf += (-m * m * c).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov test with p-value from the limit law at `sqrt(N) D`.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F, label: &str) -> Result<GofResult> {
    check_len(sample.len())?;
    let u = sorted_pit(sample, cdf)?;
    let d = ks_statistic(&u);
    let n = u.len();
    Ok(GofResult { statistic: d, p_value: kolmogorov_survival((n as f64).sqrt() * d), n, distribution: label.into() })
}

/// `A^2 = -N - (1/N) sum (2i - 1) [ln u_(i) + ln(1 - u_(N+1-i))]` with `u` clipped to
/// `[1e-12, 1 - 1e-12]`.
pub fn ad_statistic(sorted_u: &[f64]) -> f64 {
    let n = sorted_u.len();
    let clip = |u: f64| u.clamp(CDF_CLIP, 1.0 - CDF_CLIP);
    let s: f64 = (0..n)
        .map(|i| {
            let lo = clip(sorted_u[i]).ln();
            let hi = (1.0 - clip(sorted_u[n - 1 - i])).ln();
            (2 * i + 1) as f64 * (lo + hi)
        })
        .sum();
    -(n as f64) - s / n as f64
}

/// Limit distribution function of `A^2` under a fully specified null.
pub fn ad_limit_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.2337141 / z).exp() / z.sqrt()
            * (2.00012
                + (0.247105 - (0.0649821 - (0.0347962 - (0.011672 - 0.00168691 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.0003146 * z) * z) * z) * z) * z).exp()).exp()
    }
}

fn ad_errfix(n: f64, x: f64) -> f64 {
    if x > 0.8 {
        return (-130.2137 + (745.2337 - (1705.091 - (1950.646 - (1116.360 - 255.7844 * x) * x) * x) * x) * x) / n;
    }
    let c = 0.01265 + 0.1757 / n;
    if x < c {
        let t = x / c;
        let t = t.sqrt() * (1.0 - t) * (49.0 * t - 102.0);
        return t * (0.0037 / (n * n) + 0.00078 / n + 0.00006) / n;
    }
    let t = (x - c) / (0.8 - c);
    let t = -0.00022633 + (6.54034 - (14.6538 - (14.458 - (8.259 - 1.91864 * t) * t) * t) * t) * t;
    t * (0.04213 + 0.01365 / n) / n
}

/// `P(A^2 > z)` for sample size `n`.
pub fn ad_p_value(n: usize, z: f64) -> f64 {
    let x = ad_limit_cdf(z);
    (1.0 - (x + ad_errfix(n as f64, x))).clamp(0.0, 1.0)
}

/// Anderson-Darling test.
pub fn ad_test<F: Fn(f64) -> f64>(sample: &[f64], cdf: F, label: &str) -> Result<GofResult> {
    check_len(sample.len())?;
    let u = sorted_pit(sample, cdf)?;
    let a2 = ad_statistic(&u).max(0.0);
    let n = u.len();
    Ok(GofResult { statistic: a2, p_value: ad_p_value(n, a2), n, distribution: label.into() })
}

/// Significance levels of the rejection tables.
pub const DEFAULT_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Rejection counts of one `(asset, model)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub asset: String,
    pub model: String,
    pub tests: usize,
    pub levels: Vec<f64>,
    /// `counts[k]` = number of p-values below `levels[k]`.
    pub counts: Vec<usize>,
}

/// Counts `p < level` per `(asset, model)` group, in the order of `assets` x `models`.
pub fn rejection_table(
    results: &BTreeMap<(String, String), Vec<GofResult>>,
    assets: &[String],
    models: &[String],
    levels: &[f64],
) -> Result<Vec<RejectionRow>> {
    let mut rows = Vec::with_capacity(assets.len() * models.len());
    for a in assets {
        for m in models {
            let group = results
                .get(&(a.clone(), m.clone()))
                .filter(|g| !g.is_empty())
                .ok_or_else(|| Error::Incomplete(format!("no results for asset {a}, model {m}")))?;
            let counts = levels.iter().map(|l| group.iter().filter(|r| r.p_value < *l).count()).collect();
            rows.push(RejectionRow {
                asset: a.clone(),
                model: m.clone(),
                tests: group.len(),
                levels: levels.to_vec(),
                counts,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn std_normal_cdf(x: f64) -> f64 {
        Normal::new(0.0, 1.0).unwrap().cdf(x)
    }

    #[test]
    fn ks_on_exact_quantiles() {
        let n = 400;
        let nd = Normal::new(0.0, 1.0).unwrap();
        let x: Vec<f64> = (0..n).map(|i| nd.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let r = ks_test(&x, std_normal_cdf, "normal").unwrap();
        // limited by the accuracy of the normal quantile/cdf round trip
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-8);
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_test(&u, |v| v.clamp(0.0, 1.0), "uniform").unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_critical_values() {
        // tabulated upper quantiles of the Kolmogorov distribution
        for (lambda, p) in [(1.2238, 0.10), (1.3581, 0.05), (1.6276, 0.01)] {
            assert!((kolmogorov_survival(lambda) - p).abs() < 2e-4, "{lambda}");
        }
        // both series agree where they meet
        let a = kolmogorov_survival(1.0 - 1e-12);
        let b = kolmogorov_survival(1.0);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ad_single_point_at_median() {
        let a2 = ad_statistic(&[0.5]);
        assert!((a2 - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn ad_critical_values() {
        // tabulated case-0 upper quantiles of the limit law
        for (z, p) in [(1.933, 0.10), (2.492, 0.05), (3.857, 0.01)] {
            assert!((1.0 - ad_limit_cdf(z) - p).abs() < 1e-3, "{z}");
        }
        // the finite-n correction vanishes as n grows
        assert!((ad_p_value(1_000_000, 2.492) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn out_of_range_cdf_is_contract_error() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert!(matches!(ks_test(&x, |v| v, "bad"), Err(Error::Contract(_))));
        assert!(matches!(ad_test(&x, |_| f64::NAN, "bad"), Err(Error::Contract(_))));
    }

    #[test]
    fn short_sample_rejected() {
        assert!(ks_test(&[0.0; 10], std_normal_cdf, "n").is_err());
    }

    fn results(p: &[f64]) -> Vec<GofResult> {
        p.iter().map(|&p| GofResult { statistic: 0.0, p_value: p, n: 100, distribution: "x".into() }).collect()
    }

    #[test]
    fn rejection_counts() {
        let mut map = BTreeMap::new();
        map.insert(("A".to_string(), "m".to_string()), results(&[0.005, 0.03, 0.2]));
        map.insert(("B".to_string(), "m".to_string()), results(&[1.0, 1.0]));
        map.insert(("C".to_string(), "m".to_string()), results(&[0.0, 0.0]));
        let ids: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let rows = rejection_table(&map, &ids, &["m".to_string()], &DEFAULT_LEVELS).unwrap();
        assert_eq!(rows[0].counts, vec![1, 2, 2]);
        assert_eq!(rows[1].counts, vec![0, 0, 0]);
        assert_eq!(rows[2].counts, vec![2, 2, 2]);
        let missing = rejection_table(&map, &ids, &["other".to_string()], &DEFAULT_LEVELS);
        assert!(matches!(missing, Err(Error::Incomplete(_))));
    }
}
