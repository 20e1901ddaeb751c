//! Property tests for the invariants of the data, filtering, distribution,
//! risk, goodness-of-fit, backtesting and optimization layers.

use chrono::NaiveDate;
use mnts_risk::backtest::{as_statistic, blr_tail_test, clr_test, BreachSeries, ForecastStream};
use mnts_risk::data::{describe, to_returns, windows, PriceSeries, WindowSpec};
use mnts_risk::forecast::{MarginalForecast, StdLaw};
use mnts_risk::gof::{ad_test, ks_test};
use mnts_risk::nts::{beta_bound, StdNtsParams};
use mnts_risk::optimizer::{evaluate_objective, optimize, OptimizationProblem, OptimizerOptions, RiskMeasure};
use mnts_risk::risk::{avar, foster_hart, foster_hart_objective, gamble_max_loss, sd, var, ScenarioMatrix};
use mnts_risk::timeseries::{filter, simulate_with_innovations, ArmaGarchParams, Innovation, Presample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

fn dates(n: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
    (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Outcome sample with positive mean and at least one loss.
fn gamble() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..2.0, 2..120).prop_filter("gamble", |g| gamble_max_loss(g).is_ok())
}

fn normal_sample(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prices_round_trip_through_log_returns(
        p0 in 0.01f64..1e4,
        steps in prop::collection::vec(-0.3f64..0.3, 1..200),
    ) {
        let mut prices = vec![p0];
        for s in &steps {
            prices.push(prices.last().unwrap() * s.exp());
        }
        let ps = PriceSeries::new("X", dates(prices.len()), prices.clone()).unwrap();
        let r = to_returns(&ps).unwrap();
        prop_assert_eq!(r.len(), prices.len() - 1);
        let mut level = p0;
        for (k, x) in r.returns.iter().enumerate() {
            level *= x.exp();
            prop_assert!(close(level, prices[k + 1], 1e-9));
        }
    }

    #[test]
    fn window_count_matches_formula(t in 1usize..400, len in 1usize..150, step in 1usize..10) {
        let spec = WindowSpec::new(len, step).unwrap();
        match windows(t, spec) {
            Ok(w) => {
                prop_assert_eq!(w.len(), (t - len) / step + 1);
                for win in &w {
                    prop_assert_eq!(win.end - win.start, len);
                    prop_assert_eq!(win.target, (win.end < t).then_some(win.end));
                }
            }
            Err(_) => prop_assert!(t < len),
        }
    }

    #[test]
    fn describe_is_affine_equivariant(
        r in prop::collection::vec(-0.2f64..0.2, 5..200),
        a in -1.0f64..1.0,
        b in prop_oneof![0.1f64..10.0, -10.0f64..-0.1],
    ) {
        let s = describe(&r, false).unwrap();
        prop_assume!(s.sd > 1e-6);
        let y: Vec<f64> = r.iter().map(|x| a + b * x).collect();
        let t = describe(&y, false).unwrap();
        prop_assert!(close(t.mean, a + b * s.mean, 1e-9));
        prop_assert!(close(t.sd, b.abs() * s.sd, 1e-9));
        prop_assert!(close(t.skewness, b.signum() * s.skewness, 1e-6));
        prop_assert!(close(t.kurtosis, s.kurtosis, 1e-6));
        prop_assert!(close(describe(&r, true).unwrap().kurtosis, s.kurtosis - 3.0, 1e-12));
    }

    #[test]
    fn avar_dominates_var(x in prop::collection::vec(-5.0f64..5.0, 2..300), eps in 0.001f64..0.5) {
        let eps = eps.max(1.0 / x.len() as f64);
        prop_assert!(avar(&x, eps).unwrap() >= var(&x, eps).unwrap());
    }

    #[test]
    fn risk_measures_are_positively_homogeneous(g in gamble(), c in 0.01f64..100.0, eps in 0.01f64..0.3) {
        let eps = eps.max(1.0 / g.len() as f64);
        let cg: Vec<f64> = g.iter().map(|x| c * x).collect();
        prop_assert!(close(var(&cg, eps).unwrap(), c * var(&g, eps).unwrap(), 1e-12));
        prop_assert!(close(avar(&cg, eps).unwrap(), c * avar(&g, eps).unwrap(), 1e-12));
        prop_assert!(close(sd(&cg).unwrap(), c * sd(&g).unwrap(), 1e-12));
        prop_assert!(close(foster_hart(&cg, 1e-12).unwrap(), c * foster_hart(&g, 1e-12).unwrap(), 1e-8));
    }

    #[test]
    fn foster_hart_exceeds_max_loss_and_solves_its_equation(g in gamble()) {
        let r = foster_hart(&g, 1e-12).unwrap();
        let l = gamble_max_loss(&g).unwrap();
        prop_assert!(r > l);
        prop_assert!(foster_hart_objective(&g, r * (1.0 + 1e-6)) >= 0.0);
        prop_assert!(foster_hart_objective(&g, r * (1.0 - 1e-6)) <= 0.0 || r * (1.0 - 1e-6) <= l);
    }

    #[test]
    fn foster_hart_increases_with_a_larger_loss(g in gamble(), extra in 0.01f64..1.0) {
        let k = g.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let mut worse = g.clone();
        worse[k] -= extra;
        prop_assume!(gamble_max_loss(&worse).is_ok());
        prop_assert!(foster_hart(&worse, 1e-12).unwrap() > foster_hart(&g, 1e-12).unwrap());
    }

    #[test]
    fn avar_is_subadditive(
        pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 10..300),
        eps in 0.01f64..0.3,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let s: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        // exact subadditivity needs n * eps to be an integer
        let k = ((x.len() as f64 * eps).round() as usize).max(1);
        let eps = k as f64 / x.len() as f64;
        prop_assert!(avar(&s, eps).unwrap() <= avar(&x, eps).unwrap() + avar(&y, eps).unwrap() + 1e-9);
    }

    #[test]
    fn gof_tests_are_invariant_under_monotone_transforms(seed in any::<u64>(), n in 20usize..300) {
        let phi = Normal::new(0.0, 1.0).unwrap();
        let x = normal_sample(seed, n);
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let base_ks = ks_test(&x, |v| phi.cdf(v), "N").unwrap();
        let base_ad = ad_test(&x, |v| phi.cdf(v), "N").unwrap();
        let ks = ks_test(&y, |v| phi.cdf(v.ln()), "LN").unwrap();
        let ad = ad_test(&y, |v| phi.cdf(v.ln()), "LN").unwrap();
        prop_assert!((ks.statistic - base_ks.statistic).abs() <= 1e-12);
        prop_assert!((ad.statistic - base_ad.statistic).abs() <= 1e-12);
        for p in [base_ks.p_value, base_ad.p_value] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn backtests_are_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 120;
        let eps = 0.05;
        let f: Vec<MarginalForecast> = (0..t)
            .map(|_| MarginalForecast::new(0.001, rng.random_range(0.01..0.05), StdLaw::StudentT { nu: 5.0 }).unwrap())
            .collect();
        let realized: Vec<f64> = (0..t).map(|_| 0.03 * rng.sample::<f64, _>(StandardNormal)).collect();
        let scaled_f: Vec<MarginalForecast> =
            f.iter().map(|m| MarginalForecast::new(c * m.mu, c * m.sigma, m.law.clone()).unwrap()).collect();
        let scaled_r: Vec<f64> = realized.iter().map(|x| c * x).collect();
        let a = ForecastStream::from_forecasts(dates(t), f, realized, eps).unwrap();
        let b = ForecastStream::from_forecasts(dates(t), scaled_f, scaled_r, eps).unwrap();
        let (ba, bb) = (BreachSeries::from_stream(&a), BreachSeries::from_stream(&b));
        prop_assert_eq!(&ba.indicators, &bb.indicators);
        prop_assert!(close(clr_test(&ba, eps).unwrap().lr_cc, clr_test(&bb, eps).unwrap().lr_cc, 1e-12));
        prop_assert!(close(blr_tail_test(&a, eps).unwrap().lr, blr_tail_test(&b, eps).unwrap().lr, 1e-6));
        let za = as_statistic(&a.realized, &a.var, &a.avar, eps).unwrap();
        let zb = as_statistic(&b.realized, &b.var, &b.avar, eps).unwrap();
        prop_assert!(close(za, zb, 1e-12));
    }

    #[test]
    fn garch_filter_inverts_simulation(
        seed in any::<u64>(),
        c in -0.002f64..0.002,
        ar in -0.8f64..0.8,
        ma in -0.8f64..0.8,
        a in 0.01f64..0.3,
        b_share in 0.0f64..0.95,
    ) {
        let b = b_share * (1.0 - a);
        let p = ArmaGarchParams { c, ar, ma, omega: 1e-5, a, b, dist: Innovation::Normal };
        let eta = normal_sample(seed, 300);
        let pre = Presample { r: 0.0, eps: 0.0, sigma2: p.omega / (1.0 - a - b) };
        let r = simulate_with_innovations(&p, &eta, pre);
        let back = filter(&p, &r, pre).eta();
        for (x, y) in eta.iter().zip(&back) {
            prop_assert!((x - y).abs() <= 1e-7 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn nts_char_fn_is_normalized_and_bounded(
        alpha in 0.1f64..1.99,
        theta in 0.1f64..10.0,
        beta_share in -0.99f64..0.99,
        u in -50.0f64..50.0,
    ) {
        let p = StdNtsParams::new(alpha, theta, beta_share * beta_bound(alpha, theta)).unwrap();
        let at0 = p.char_fn(0.0);
        prop_assert!((at0.re - 1.0).abs() <= 1e-12 && at0.im.abs() <= 1e-12);
        prop_assert!(p.char_fn(u).norm() <= 1.0 + 1e-12);
    }
}

fn scenario_block(seed: u64, n_assets: usize) -> ScenarioMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<f64> = (0..n_assets).map(|_| rng.random_range(0.01..0.04)).collect();
    let drift: Vec<f64> = (0..n_assets).map(|_| rng.random_range(0.0005..0.003)).collect();
    let n = 2000;
    let values = (0..n * n_assets)
        .map(|k| drift[k % n_assets] + scale[k % n_assets] * rng.sample::<f64, _>(StandardNormal))
        .collect();
    ScenarioMatrix::new(values, n, (0..n_assets).map(|i| format!("A{i}")).collect(), Some(seed)).unwrap()
}

fn risk_measure() -> impl Strategy<Value = RiskMeasure> {
    prop_oneof![Just(RiskMeasure::Sd), Just(RiskMeasure::Avar), Just(RiskMeasure::Fh)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn objective_is_scale_free_without_costs(
        seed in any::<u64>(),
        rho in risk_measure(),
        c in 0.1f64..2.0,
        w in prop::collection::vec(0.05f64..0.5, 3),
    ) {
        let sc = scenario_block(seed, 3);
        let mut p = OptimizationProblem::new(&sc, rho);
        p.lambda = 0.0;
        p.cost_aversion = 1.0;
        let f = evaluate_objective(&p, &w);
        prop_assume!(f.is_finite());
        let wc: Vec<f64> = w.iter().map(|v| v * c).collect();
        prop_assert!(close(evaluate_objective(&p, &wc), f, 1e-8));
    }

    #[test]
    fn optimizer_respects_box_and_normalization(seed in any::<u64>(), rho in risk_measure(), long_only in any::<bool>()) {
        let sc = scenario_block(seed, 3);
        let mut p = OptimizationProblem::new(&sc, rho);
        p.long_only = long_only;
        let res = optimize(&p, &OptimizerOptions::default()).unwrap();
        let gross: f64 = res.weights.iter().map(|v| v.abs()).sum();
        prop_assert!((gross - 1.0).abs() <= 1e-12);
        prop_assert!(res.expected_return > 0.0);
        if long_only {
            prop_assert!(res.weights.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn optimizer_beats_random_feasible_points(seed in any::<u64>(), rho in risk_measure()) {
        let sc = scenario_block(seed, 3);
        let mut p = OptimizationProblem::new(&sc, rho);
        p.lambda = 0.0;
        let res = optimize(&p, &OptimizerOptions::default()).unwrap();
        let best = evaluate_objective(&p, &res.weights);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..20 {
            let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = evaluate_objective(&p, &w);
            prop_assert!(best <= f * (1.0 + 1e-6), "random point {w:?} gives {f} < {best}");
        }
    }
}
