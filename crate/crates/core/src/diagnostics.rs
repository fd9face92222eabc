//! Numerical checks around the Huber loss: its gradient and Hessian,
//! Monte-Carlo studies of the gradient sup-norm and of the fraction of large
//! noise draws, and Grubbs' maximum normalised residual test.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::statistics::{Data, OrderStatistics};

use crate::admm::Problem;
use crate::error::{Error, Result};
use crate::prox::{clamp_residual, HuberParam};
use crate::simulate::{gen_design, gen_noise, replicate_seed, NoiseKind};
use crate::tuning::tau_scale;

/// Largest `p·q` for which [`loss_hessian`] materialises the matrix.
pub const MAX_HESSIAN_DIM: usize = 2000;

fn residuals(problem: &Problem, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    problem.check_coef(a)?;
    Ok(problem.y() - problem.x() * a)
}

/// Gradient in `A` of `(1/n) Σ huber(Y - XA)`: `-(1/n) Xᵀ psi(Y - XA)`.
pub fn loss_gradient(problem: &Problem, a: &DMatrix<f64>, tau: HuberParam) -> Result<DMatrix<f64>> {
    let mut r = residuals(problem, a)?;
    if let HuberParam::Finite(t) = tau {
        r.apply(|v| *v = clamp_residual(*v, t));
    }
    Ok(-(problem.x().transpose() * r) / problem.n() as f64)
}

/// Hessian of the loss in `vec(A)` (column-major) coordinates,
/// `(1/n) Σ_i T_i ⊗ X_i X_iᵀ` with `T_i` the diagonal of indicators
/// `|Y_ik - X_iᵀ A_k| <= tau`.
pub fn loss_hessian(problem: &Problem, a: &DMatrix<f64>, tau: HuberParam) -> Result<DMatrix<f64>> {
    let (p, q) = (problem.p(), problem.q());
    if p * q > MAX_HESSIAN_DIM {
        return Err(Error::InvalidParam(format!(
            "Hessian of dimension {} exceeds the limit {MAX_HESSIAN_DIM}",
            p * q
        )));
    }
    let r = residuals(problem, a)?;
    let x = problem.x();
    let n = problem.n() as f64;
    let mut h = DMatrix::zeros(p * q, p * q);
    for k in 0..q {
        let active: Vec<usize> = (0..problem.n())
            .filter(|&i| match tau {
                HuberParam::Finite(t) => r[(i, k)].abs() <= t,
                HuberParam::Infinite => true,
            })
            .collect();
        let xs = x.select_rows(&active);
        let block = xs.transpose() * xs / n;
        h.view_mut((k * p, k * p), (p, p)).copy_from(&block);
    }
    Ok(h)
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn hessian_spectrum(h: &DMatrix<f64>) -> DVector<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    DVector::from_vec(ev)
}

/// Random instances for the derivative checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub instances: usize,
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub tau: f64,
    pub seed: u64,
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub instance: usize,
    pub seed: u64,
    /// Relative error for the gradient, largest absolute entry error for the
    /// Hessian.
    pub error: f64,
    /// Smallest Hessian eigenvalue; `NaN` for the gradient check.
    pub min_eigenvalue: f64,
    pub passed: bool,
}

/// Residuals closer than this to `±tau` make finite differences unreliable.
pub const KINK_MARGIN: f64 = 1e-3;

const MAX_DRAWS_PER_INSTANCE: usize = 1000;

/// Random `(problem, A)` with every residual at least [`KINK_MARGIN`] away
/// from `±tau`.
fn smooth_instance(cfg: &CheckConfig, seed: u64) -> Result<(Problem, DMatrix<f64>)> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS_PER_INSTANCE {
        let x = DMatrix::from_fn(cfg.n, cfg.p, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(cfg.n, cfg.q, |_, _| cfg.tau * rng.sample::<f64, _>(StandardNormal));
        let a = DMatrix::from_fn(cfg.p, cfg.q, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = &y - &x * &a;
        if r.iter().all(|v| (v.abs() - cfg.tau).abs() >= KINK_MARGIN) {
            return Ok((Problem::new(x, y)?, a));
        }
    }
    Err(Error::InvalidParam("could not draw an instance away from the Huber kinks".into()))
}

fn fd_step(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

fn validate_check(cfg: &CheckConfig) -> Result<HuberParam> {
    if cfg.instances == 0 || cfg.n == 0 || cfg.p == 0 || cfg.q == 0 || !(cfg.tol > 0.0) {
        return Err(Error::InvalidParam(format!("invalid check configuration {cfg:?}")));
    }
    match HuberParam::new(cfg.tau)? {
        HuberParam::Infinite => Err(Error::InvalidParam("derivative checks need a finite tau".into())),
        t => Ok(t),
    }
}

/// Compares [`loss_gradient`] with central differences of the loss,
/// `||g - g_fd||_F <= tol * ||g||_F` per instance.
pub fn gradient_check(cfg: &CheckConfig) -> Result<Vec<CheckRow>> {
    let tau = validate_check(cfg)?;
    (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(cfg.seed, i as u64);
            let (problem, a) = smooth_instance(cfg, seed)?;
            let loss = |m: &DMatrix<f64>| crate::prox::huber_matrix(&(problem.y() - problem.x() * m), tau) / problem.n() as f64;
            let g = loss_gradient(&problem, &a, tau)?;
            let fd = DMatrix::from_fn(cfg.p, cfg.q, |j, k| {
                let h = fd_step(a[(j, k)]);
                let mut up = a.clone();
                up[(j, k)] += h;
                let mut down = a.clone();
                down[(j, k)] -= h;
                (loss(&up) - loss(&down)) / (2.0 * h)
            });
            let error = (&g - &fd).norm() / g.norm().max(f64::MIN_POSITIVE);
            Ok(CheckRow { instance: i, seed, error, min_eigenvalue: f64::NAN, passed: error <= cfg.tol })
        })
        .collect()
}

/// Compares [`loss_hessian`] with central differences of [`loss_gradient`]
/// entrywise, and checks positive semidefiniteness.
pub fn hessian_check(cfg: &CheckConfig) -> Result<Vec<CheckRow>> {
    let tau = validate_check(cfg)?;
    let (p, q) = (cfg.p, cfg.q);
    (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let seed = replicate_seed(cfg.seed, i as u64);
            let (problem, a) = smooth_instance(cfg, seed)?;
            let h = loss_hessian(&problem, &a, tau)?;
            let mut error = 0.0f64;
            for col in 0..p * q {
                let (j, k) = (col % p, col / p);
                let step = fd_step(a[(j, k)]);
                let mut up = a.clone();
                up[(j, k)] += step;
                let mut down = a.clone();
                down[(j, k)] -= step;
                let d = (loss_gradient(&problem, &up, tau)? - loss_gradient(&problem, &down, tau)?) / (2.0 * step);
                for row in 0..p * q {
                    error = error.max((h[(row, col)] - d[(row % p, row / p)]).abs());
                }
            }
            let min_eigenvalue = hessian_spectrum(&h)[0];
            let passed = error <= cfg.tol && min_eigenvalue >= -1e-10;
            Ok(CheckRow { instance: i, seed, error, min_eigenvalue, passed })
        })
        .collect()
}

/// How the Huber threshold depends on the sample size in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauRule {
    Fixed(f64),
    /// `c · sqrt(n / log(pq))`.
    Scaled(f64),
}

impl TauRule {
    pub fn resolve(&self, n: usize, p: usize, q: usize) -> f64 {
        match *self {
            TauRule::Fixed(t) => t,
            TauRule::Scaled(c) => c * tau_scale(n, p, q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupnormConfig {
    pub n_grid: Vec<usize>,
    pub p: usize,
    pub q: usize,
    pub noise: NoiseKind,
    pub tau_rule: TauRule,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupnormRow {
    pub n: usize,
    pub tau: f64,
    /// Empirical `1 - 1/(pq)` quantile of `max |∇L(A*)|` over replicates.
    pub quantile: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupnormTable {
    pub rows: Vec<SupnormRow>,
    /// Least-squares slope of `log quantile` on `log n`; absent with fewer
    /// than two positive quantiles.
    pub slope: Option<f64>,
}

/// Sup-norm of the loss gradient at the true coefficients.
///
/// The gradient at `A*` only involves `X` and the noise, so no coefficient
/// matrix is drawn.
pub fn gradient_supnorm_experiment(cfg: &SupnormConfig) -> Result<SupnormTable> {
    if cfg.n_grid.is_empty() || cfg.replicates == 0 || cfg.p == 0 || cfg.q == 0 {
        return Err(Error::InvalidParam("empty sup-norm experiment".into()));
    }
    let level = 1.0 - 1.0 / (cfg.p * cfg.q) as f64;
    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for (ni, &n) in cfg.n_grid.iter().enumerate() {
        if n == 0 {
            return Err(Error::InvalidParam("sample size must be positive".into()));
        }
        let tau = cfg.tau_rule.resolve(n, cfg.p, cfg.q);
        let tau_param = HuberParam::new(tau)?;
        let stream = replicate_seed(cfg.seed, ni as u64);
        let norms: Vec<f64> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let s = replicate_seed(stream, r as u64);
                let x = gen_design(n, cfg.p, s);
                let e = gen_noise(cfg.noise, n, cfg.q, s.wrapping_add(1));
                let psi = match tau_param {
                    HuberParam::Finite(t) => e.map(|v| clamp_residual(v, t)),
                    HuberParam::Infinite => e,
                };
                (x.transpose() * psi / n as f64).amax()
            })
            .collect();
        let mean = norms.iter().sum::<f64>() / norms.len() as f64;
        let quantile = Data::new(norms).quantile(level);
        rows.push(SupnormRow { n, tau, quantile, mean });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.quantile > 0.0)
        .map(|r| ((r.n as f64).ln(), r.quantile.ln()))
        .collect();
    Ok(SupnormTable { slope: ols_slope(&pts), rows })
}

fn ols_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// A noise law with a bounded `(1+δ)`th absolute moment `v_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub delta: f64,
    pub v_delta: f64,
}

impl NoiseSpec {
    pub fn new(delta: f64, v_delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite() && v_delta > 0.0 && v_delta.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "need delta > 0 and finite v_delta > 0, got ({delta}, {v_delta})"
            )));
        }
        Ok(NoiseSpec { delta, v_delta })
    }

    /// Student t with 3 degrees of freedom: `δ = 1`, `E X² = 3`.
    pub fn student_t3() -> (Self, NoiseKind) {
        (NoiseSpec { delta: 1.0, v_delta: 3.0 }, NoiseKind::StudentT { df: 3.0 })
    }

    /// Student t with `df` degrees of freedom and its exact `(1+δ)`th
    /// absolute moment; requires `1 + δ < df`.
    pub fn student_t(df: f64, delta: f64) -> Result<(Self, NoiseKind)> {
        let v = student_t_abs_moment(df, 1.0 + delta)?;
        Ok((NoiseSpec::new(delta, v)?, NoiseKind::StudentT { df }))
    }

    /// Right-hand side `(2/τ)^{1+δ} v_δ + sqrt(t/n)`.
    pub fn truncation_bound(&self, n: usize, tau: f64, t: f64) -> f64 {
        (2.0 / tau).powf(1.0 + self.delta) * self.v_delta + (t / n as f64).sqrt()
    }
}

/// `E|T|^s` for `T ~ t(df)`:
/// `df^{s/2} Γ((s+1)/2) Γ((df-s)/2) / (sqrt(π) Γ(df/2))`, finite for `s < df`.
pub fn student_t_abs_moment(df: f64, s: f64) -> Result<f64> {
    if !(df > 0.0 && s >= 0.0 && s < df) {
        return Err(Error::InvalidParam(format!("moment {s} of t({df}) is not finite")));
    }
    let lg = statrs::function::gamma::ln_gamma;
    let log_m = 0.5 * s * df.ln() + lg((s + 1.0) / 2.0) + lg((df - s) / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - lg(df / 2.0);
    Ok(log_m.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationResult {
    pub bound: f64,
    pub violations: usize,
    pub replicates: usize,
    pub frequency: f64,
    /// `exp(-2t)`.
    pub nominal: f64,
}

/// Frequency over replicates of `(1/n) Σ 1(|ε_i| > τ/2) >= bound`, for `n`
/// i.i.d. draws of `sampler` per replicate.
pub fn truncation_bound_experiment<F>(
    noise: NoiseSpec,
    sampler: F,
    n: usize,
    tau: f64,
    t: f64,
    replicates: usize,
    seed: u64,
) -> Result<TruncationResult>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    if n == 0 || replicates == 0 || !(tau > 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParam(format!(
            "invalid truncation experiment: n={n}, replicates={replicates}, tau={tau}, t={t}"
        )));
    }
    let bound = noise.truncation_bound(n, tau, t);
    let half = tau / 2.0;
    let violations = (0..replicates)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(seed, r as u64));
            let large = (0..n).filter(|_| sampler(&mut rng).abs() > half).count();
            large as f64 / n as f64 >= bound
        })
        .count();
    Ok(TruncationResult {
        bound,
        violations,
        replicates,
        frequency: violations as f64 / replicates as f64,
        nominal: (-2.0 * t).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrubbsColumn {
    pub column: usize,
    /// `None` when the column has zero variance.
    pub statistic: Option<f64>,
    pub critical: f64,
    pub flagged: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrubbsReport {
    pub alpha: f64,
    /// Bonferroni divisor applied to `alpha`.
    pub correction: usize,
    pub columns: Vec<GrubbsColumn>,
}

impl GrubbsReport {
    pub fn flagged(&self) -> Vec<usize> {
        self.columns.iter().filter(|c| c.flagged).map(|c| c.column).collect()
    }
}

/// Two-sided Grubbs critical value for `n` observations at level `alpha`.
pub fn grubbs_critical(n: usize, alpha: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidParam(format!("Grubbs test needs at least 3 rows, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParam(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let nf = n as f64;
    let dist = StudentsT::new(0.0, 1.0, nf - 2.0).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let t = dist.inverse_cdf(1.0 - alpha / (2.0 * nf));
    let t2 = t * t;
    Ok((nf - 1.0) / nf.sqrt() * (t2 / (nf - 2.0 + t2)).sqrt())
}

/// Grubbs' test on every column of `y`, Bonferroni-corrected over columns.
pub fn grubbs_screen(y: &DMatrix<f64>, alpha: f64) -> Result<GrubbsReport> {
    crate::prox::ensure_finite(y, "Y")?;
    let q = y.ncols();
    if q == 0 {
        return Err(Error::InvalidParam("no columns to screen".into()));
    }
    let critical = grubbs_critical(y.nrows(), alpha / q as f64)?;
    let n = y.nrows() as f64;
    let columns = y
        .column_iter()
        .enumerate()
        .map(|(j, col)| {
            let mean = col.sum() / n;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let spread = col.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
            if sd == 0.0 || spread <= 1e-14 * mean.abs() {
                return GrubbsColumn {
                    column: j,
                    statistic: None,
                    critical,
                    flagged: false,
                    note: Some("zero variance; skipped".into()),
                };
            }
            let g = spread / sd;
            GrubbsColumn { column: j, statistic: Some(g), critical, flagged: g > critical, note: None }
        })
        .collect();
    Ok(GrubbsReport { alpha, correction: q, columns })
}
