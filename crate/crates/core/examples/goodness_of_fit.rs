//! Kolmogorov-Smirnov and Anderson-Darling tests of heavy-tailed residuals
//! against a normal null and against the law that generated them.

use mnts_risk::forecast::StdLaw;
use mnts_risk::gof::{ad_test, ks_test};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mnts_risk::Result<()> {
    let truth = StdLaw::StudentT { nu: 4.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eta: Vec<f64> = (0..1000).map(|_| truth.sample(&mut rng)).collect();

    for (name, law) in [("normal", StdLaw::Normal), ("t(4)", truth.clone())] {
        let ks = ks_test(&eta, |x| law.cdf(x), name)?;
        let ad = ad_test(&eta, |x| law.cdf(x), name)?;
        println!(
            "{name:<7} KS D = {:.4} (p = {:.4})   AD A2 = {:.3} (p = {:.4})",
            ks.statistic, ks.p_value, ad.statistic, ad.p_value
        );
    }
    Ok(())
}
