//! A short Monte Carlo comparison of the Huber and squared-loss estimators
//! under Gaussian and heavy-tailed noise.
//!
//! `cargo run --release --example simulate_table -- 10` sets the replicate
//! count.

use huber_rrr::simulate::{self, Method, NoiseKind, ScenarioSpec, SimulationOptions};
use huber_rrr::tuning::{CvPlan, LambdaGrid, TauGrid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let replicates = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let opts = SimulationOptions {
        cv: CvPlan {
            lambda_grid: LambdaGrid::Path { count: 12, min_ratio: 1e-2 },
            tau_grid: TauGrid::Scaled(vec![0.4]),
            gamma_grid: vec![3.0],
            ..CvPlan::default()
        },
    };
    println!("{:<8} {:<8} {:>14}", "noise", "method", "frobenius");
    for noise in [NoiseKind::NORMAL, NoiseKind::STUDENT_T] {
        let spec = ScenarioSpec { noise, ..ScenarioSpec::named("table2-rank1")? };
        for method in [Method::Huber, Method::Squared] {
            let run = simulate::run_scenario(&spec, method, replicates, 1, &opts)?;
            let f = run.summary.frob;
            println!("{:<8} {:<8} {:>7.3} ({:.3})", noise.label(), method.label(), f.mean, f.se.unwrap_or(0.0));
        }
    }
    Ok(())
}
