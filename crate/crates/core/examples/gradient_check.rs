//! Finite-difference checks of the loss gradient and Hessian.

use huber_rrr::diagnostics::{self, CheckConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CheckConfig { instances: 20, n: 30, p: 4, q: 3, tau: 1.0, seed: 9, tol: 1e-6 };
    let grad = diagnostics::gradient_check(&cfg)?;
    let worst = grad.iter().map(|r| r.error).fold(0.0, f64::max);
    println!("gradient: {} instances, worst relative error {worst:.2e}", grad.len());

    let cfg = CheckConfig { p: 3, q: 2, tol: 1e-5, ..cfg };
    let hess = diagnostics::hessian_check(&cfg)?;
    let worst = hess.iter().map(|r| r.error).fold(0.0, f64::max);
    let min_eig = hess.iter().map(|r| r.min_eigenvalue).fold(f64::INFINITY, f64::min);
    println!("hessian: worst entry error {worst:.2e}, smallest eigenvalue {min_eig:.3e}");
    println!("all passed: {}", grad.iter().chain(&hess).all(|r| r.passed));
    Ok(())
}
