//! Simulates an ARMA(1,1)-GARCH(1,1) path with Student-t innovations, fits
//! normal and Student-t models by maximum likelihood and prints the one-step
//! forecasts.

use mnts_risk::timeseries::{
    fit_arma_garch, forecast_one_step, simulate, ArmaGarchParams, FitError, FitOptions, Innovation, InnovationFamily,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mnts_risk::Result<()> {
    let truth = ArmaGarchParams {
        c: 0.0005,
        ar: 0.3,
        ma: -0.1,
        omega: 1e-5,
        a: 0.1,
        b: 0.85,
        dist: Innovation::StudentT { nu: 5.0 },
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let r = simulate(&truth, 2000, 500, &mut rng);
    println!("true     {truth:?}");

    for family in [InnovationFamily::Normal, InnovationFamily::StudentT] {
        let fit = match fit_arma_garch(&r, family, &FitOptions::default()) {
            Ok(f) => f,
            Err(FitError::NotConverged(f)) => {
                println!("({family:?} fit stopped before convergence)");
                *f
            }
            Err(FitError::Failed(e)) => return Err(e),
        };
        let p = fit.params;
        let next = forecast_one_step(&fit);
        println!(
            "{family:?}: c {:.5} ar {:.3} ma {:.3} omega {:.2e} a {:.3} b {:.3} {:?} | loglik {:.1} | next mu {:.5} sigma {:.5}",
            p.c, p.ar, p.ma, p.omega, p.a, p.b, p.dist, fit.loglik, next.mu_next, next.sigma_next
        );
    }
    Ok(())
}
