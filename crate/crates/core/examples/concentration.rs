//! Monte Carlo views of two concentration results: the sup-norm of the loss
//! gradient at the truth, and the fraction of truncated t(3) errors.

use huber_rrr::diagnostics::{self, NoiseSpec, SupnormConfig, TauRule};
use huber_rrr::simulate::NoiseKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SupnormConfig {
        n_grid: vec![100, 200, 400, 800, 1600],
        p: 20,
        q: 5,
        noise: NoiseKind::NORMAL,
        tau_rule: TauRule::Scaled(1.0),
        replicates: 100,
        seed: 1,
    };
    let table = diagnostics::gradient_supnorm_experiment(&cfg)?;
    for row in &table.rows {
        println!("n = {:>4}: tau {:>6.3}, quantile {:.4}", row.n, row.tau, row.quantile);
    }
    println!("log-log slope {:.3}", table.slope.unwrap_or(f64::NAN));

    let (noise, kind) = NoiseSpec::student_t3();
    for t in [0.5, 1.0, 2.0] {
        let r = diagnostics::truncation_bound_experiment(noise, |rng| kind.sample(rng), 100, 4.0, t, 10_000, 2)?;
        println!(
            "t = {t}: bound {:.3}, violation frequency {:.4} (nominal {:.4})",
            r.bound, r.frequency, r.nominal
        );
    }
    Ok(())
}
