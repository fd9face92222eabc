//! The three proximal maps used inside the solver.

use huber_rrr::prox::{self, HuberParam};
use nalgebra::dmatrix;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for a in [-2.0, -0.5, 0.0, 0.7, 3.0] {
        println!("soft_threshold({a:>4}, 1) = {}", prox::soft_threshold(a, 1.0));
    }

    let m = dmatrix![3.0, 0.0; 0.0, 1.0; 0.0, 0.0];
    let shrunk = prox::svd_soft_threshold(&m, 1.5)?;
    println!("singular-value shrinkage by 1.5:{shrunk}");

    let tau = HuberParam::new(1.0)?;
    for (y, c) in [(0.2, 0.0), (5.0, 0.0), (-5.0, 1.0)] {
        let d = prox::prox_d_entry(y, c, tau, 10, 0.5);
        let ls = prox::prox_d_entry(y, c, HuberParam::Infinite, 10, 0.5);
        println!("prox_d(y={y}, c={c}): huber {d:.4}, squared {ls:.4}");
    }
    Ok(())
}
