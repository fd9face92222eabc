//! Screens response columns for a single gross outlier.

use huber_rrr::diagnostics;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut y = DMatrix::from_fn(118, 20, |_, _| rng.sample::<f64, _>(StandardNormal));
    y[(17, 6)] = 10.0;

    let report = diagnostics::grubbs_screen(&y, 0.05)?;
    println!("alpha {} split over {} columns", report.alpha, report.correction);
    for c in report.columns.iter().filter(|c| c.statistic.is_some_and(|g| g > 0.8 * c.critical)) {
        println!("column {:>2}: G = {:.3}, critical {:.3}, flagged {}", c.column, c.statistic.unwrap(), c.critical, c.flagged);
    }
    println!("flagged columns: {:?}", report.flagged());
    Ok(())
}
