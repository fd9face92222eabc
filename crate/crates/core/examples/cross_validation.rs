//! Five-fold cross-validation over a small joint grid, then the refit.

use huber_rrr::simulate::{self, NoiseKind, ScenarioSpec};
use huber_rrr::tuning::{self, CvPlan, LambdaGrid, TauGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ScenarioSpec {
        noise: NoiseKind::STUDENT_T,
        seed: 11,
        ..ScenarioSpec::named("table2-rank1")?
    };
    let data = simulate::generate(&spec)?;
    let plan = CvPlan {
        lambda_grid: LambdaGrid::Path { count: 15, min_ratio: 1e-2 },
        tau_grid: TauGrid::Scaled(vec![0.4, 1.0]),
        gamma_grid: vec![2.5, 4.0],
        seed: 3,
        ..CvPlan::default()
    };
    let cv = tuning::cross_validate(&data.problem, &plan)?;

    let mut rows: Vec<_> = cv.cv_table.iter().filter_map(|r| r.score.map(|s| (r, s))).collect();
    rows.sort_by(|a, b| a.1.mean.total_cmp(&b.1.mean));
    println!("{:>10} {:>5} {:>8} {:>10}", "lambda", "gamma", "tau", "cv loss");
    for (r, s) in rows.iter().take(5) {
        println!("{:>10.5} {:>5} {:>8.3} {:>10.5}", r.lambda, r.gamma, r.tau.value(), s.mean);
    }
    println!("selected lambda {:.5}, gamma {}, tau {}", cv.best.lambda, cv.best.gamma, cv.best.tau);
    let m = simulate::evaluate(&cv.refit.a_hat, &cv.refit.support, &data)?;
    println!("refit: rank {}, frobenius error {:.3}", cv.refit.rank_estimate, m.frob_error);
    Ok(())
}
