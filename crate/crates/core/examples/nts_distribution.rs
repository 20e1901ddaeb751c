//! Standard NTS margins by FFT inversion and correlated MNTS scenarios from
//! the subordinated Gaussian representation.

use mnts_risk::nts::{beta_bound, GridSettings, MntsParams, MntsSampler, NtsDist, StdNtsParams};
use mnts_risk::risk::ScenarioMatrix;

fn main() -> mnts_risk::Result<()> {
    let grid = GridSettings::default();
    let (alpha, theta) = (1.2, 1.0);
    let bound = beta_bound(alpha, theta);
    println!("alpha {alpha}, theta {theta}: admissible |beta| < {bound:.4}");

    for beta in [-0.5 * bound, 0.0, 0.5 * bound] {
        let p = StdNtsParams::new(alpha, theta, beta)?;
        let d = NtsDist::standard(p, &grid)?;
        println!(
            "beta {beta:+.3} gamma {:.4}: F(-2) {:.5}  q(0.01) {:.4}  AVaR(0.01) {:.4}",
            p.gamma(),
            d.cdf(-2.0),
            d.quantile(0.01)?,
            d.tail_mean(0.01)?
        );
    }

    let corr = vec![vec![1.0, 0.6, 0.2], vec![0.6, 1.0, 0.4], vec![0.2, 0.4, 1.0]];
    let params = MntsParams::standardized(alpha, theta, vec![-0.2, 0.0, 0.2], corr)?;
    let sampler = MntsSampler::new(params, &grid)?;
    let sc: ScenarioMatrix = sampler.sample(100_000, 7);
    let cov = sc.covariance();
    println!("scenario means {:?}", sc.column_means().iter().map(|m| format!("{m:+.4}")).collect::<Vec<_>>());
    for row in cov {
        println!("cov  {}", row.iter().map(|v| format!("{v:7.4}")).collect::<Vec<_>>().join(" "));
    }
    Ok(())
}
