//! SD, VaR, AVaR and Foster-Hart riskiness of an equally weighted portfolio
//! on simulated heavy-tailed scenarios.

use mnts_risk::risk::{foster_hart, portfolio_outcomes, sd, var_avar, ScenarioMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StudentT};

fn main() -> mnts_risk::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = StudentT::new(4.0).expect("valid");
    let (n, d) = (10_000, 3);
    let values = (0..n * d).map(|k| 0.0008 * (1 + k % d) as f64 + 0.01 * t.sample(&mut rng)).collect();
    let sc = ScenarioMatrix::new(values, n, vec!["A".into(), "B".into(), "C".into()], Some(3))?;
    let w = vec![1.0 / 3.0; 3];
    let g = portfolio_outcomes(&sc, &w)?;

    println!("portfolio SD          {:.5}", sd(&g)?);
    for eps in [0.05, 0.01] {
        let (v, a) = var_avar(&g, eps)?;
        println!("VaR / AVaR at {eps:<5}  {v:.5} / {a:.5}");
    }
    println!("Foster-Hart riskiness {:.4}", foster_hart(&g, 1e-10)?);
    println!("FH of (+120, -100)    {:.4}", foster_hart(&[120.0, -100.0], 1e-12)?);
    Ok(())
}
