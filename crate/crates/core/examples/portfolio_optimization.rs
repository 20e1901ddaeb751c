//! Mean-risk portfolios on one scenario set for each risk measure, with and
//! without transaction costs and short sales.

use mnts_risk::nts::{GridSettings, MntsParams, MntsSampler};
use mnts_risk::optimizer::{optimize, OptimizationProblem, OptimizerOptions, RiskMeasure};
use mnts_risk::risk::ScenarioMatrix;

fn main() -> mnts_risk::Result<()> {
    let corr = vec![vec![1.0, 0.5, 0.3], vec![0.5, 1.0, 0.4], vec![0.3, 0.4, 1.0]];
    let std = MntsSampler::new(MntsParams::standardized(1.3, 1.0, vec![-0.3, 0.0, 0.2], corr)?, &GridSettings::default())?
        .sample(10_000, 1);
    let mu = [0.0010, 0.0006, 0.0014];
    let sigma = [0.02, 0.01, 0.04];
    let values: Vec<f64> = std.values().iter().enumerate().map(|(k, z)| mu[k % 3] + sigma[k % 3] * z).collect();
    let sc = ScenarioMatrix::new(values, std.n_scenarios(), vec!["LOW".into(), "MID".into(), "HIGH".into()], Some(1))?;

    let opts = OptimizerOptions::default();
    for rho in RiskMeasure::ALL {
        for (lambda, long_only) in [(0.0, false), (1e-3, false), (0.0, true)] {
            let mut p = OptimizationProblem::new(&sc, rho);
            p.mu = mu.to_vec();
            p.lambda = lambda;
            p.cost_aversion = 1.0;
            p.long_only = long_only;
            let r = optimize(&p, &opts)?;
            println!(
                "{:<5} lambda {lambda:<6} long-only {long_only:<5} w = [{}]  risk/return {:.3}",
                rho.label(),
                r.weights.iter().map(|w| format!("{w:+.3}")).collect::<Vec<_>>().join(", "),
                r.risk / r.expected_return
            );
        }
    }
    Ok(())
}
