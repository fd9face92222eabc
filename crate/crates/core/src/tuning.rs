//! K-fold cross-validation over `(lambda, gamma, tau)`.
//!
//! Held-out error is scored with the candidate's own loss: Huber at the
//! candidate `tau`, or half the squared error when `tau` is infinite, each
//! divided by the number of held-out rows. Outlying responses therefore do
//! not dominate model selection for the robust fit.
//!
//! The sweep visits `tau` in the outer loop, `gamma` in the middle and a
//! descending `lambda` path inside. Every fit is cold-started; the normal
//! equations of each training fold are factorised once and shared by the
//! whole grid.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{self, fit_with_solver, FitResult, Hyperparams, NormalSolver, Problem};
use crate::error::{Error, Result};
use crate::prox::{clamp_residual, huber_matrix, HuberParam};
use crate::stats::mean_and_se;

/// Robustification constants `c` from 0.4 to 1.5 in steps of 0.05.
pub fn default_tau_constants() -> Vec<f64> {
    (0..=22).map(|k| (40 + 5 * k) as f64 / 100.0).collect()
}

pub fn default_gamma_grid() -> Vec<f64> {
    vec![2.5, 3.0, 3.5, 4.0]
}

/// `sqrt(n / log(pq))`, the scale that turns a constant `c` into `tau`.
pub fn tau_scale(n: usize, p: usize, q: usize) -> f64 {
    let log_pq = ((p * q).max(2) as f64).ln();
    (n as f64 / log_pq).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "kebab-case")]
pub enum LambdaGrid {
    /// Explicit values, swept in descending order.
    Values(Vec<f64>),
    /// `count` log-spaced values from `lambda_max` down to
    /// `lambda_max * min_ratio`, with `lambda_max` searched per `(tau, gamma)`.
    Path { count: usize, min_ratio: f64 },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Path {
            count: 50,
            min_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "kebab-case")]
pub enum TauGrid {
    /// Squared-error loss only.
    Squared,
    /// Constants `c`, mapped to `tau = c * sqrt(n / log(pq))`.
    Scaled(Vec<f64>),
    /// Absolute values of `tau`.
    Fixed(Vec<f64>),
}

impl Default for TauGrid {
    fn default() -> Self {
        TauGrid::Scaled(default_tau_constants())
    }
}

impl TauGrid {
    pub fn resolve(&self, n: usize, p: usize, q: usize) -> Result<Vec<HuberParam>> {
        match self {
            TauGrid::Squared => Ok(vec![HuberParam::Infinite]),
            TauGrid::Scaled(cs) => {
                let s = tau_scale(n, p, q);
                cs.iter().map(|c| HuberParam::new(c * s)).collect()
            }
            TauGrid::Fixed(ts) => ts.iter().map(|&t| HuberParam::new(t)).collect(),
        }
    }

    fn len(&self) -> usize {
        match self {
            TauGrid::Squared => 1,
            TauGrid::Scaled(v) | TauGrid::Fixed(v) => v.len(),
        }
    }
}

/// Folds, grids and solver constants of one cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: usize,
    pub lambda_grid: LambdaGrid,
    pub gamma_grid: Vec<f64>,
    pub tau_grid: TauGrid,
    pub seed: u64,
    pub rho: f64,
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for CvPlan {
    fn default() -> Self {
        let hp = Hyperparams::default();
        CvPlan {
            folds: 5,
            lambda_grid: LambdaGrid::default(),
            gamma_grid: default_gamma_grid(),
            tau_grid: TauGrid::default(),
            seed: 0,
            rho: hp.rho,
            eps: hp.eps,
            max_iter: hp.max_iter,
        }
    }
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.folds < 2 {
            return bad("folds must be >= 2");
        }
        if self.gamma_grid.is_empty() || self.tau_grid.len() == 0 {
            return bad("every grid must be nonempty");
        }
        if self.gamma_grid.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return bad("gamma values must be finite and >= 0");
        }
        match &self.lambda_grid {
            LambdaGrid::Values(v) if v.is_empty() => return bad("lambda grid is empty"),
            LambdaGrid::Values(v) if v.iter().any(|l| !(*l > 0.0) || !l.is_finite()) => {
                return bad("lambda values must be finite and > 0")
            }
            LambdaGrid::Path { count, min_ratio } if *count == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) => {
                return bad("lambda path needs count >= 1 and 0 < min_ratio < 1")
            }
            _ => {}
        }
        self.hyperparams(0.0, 0.0, HuberParam::Infinite).validate()
    }

    fn hyperparams(&self, lambda: f64, gamma: f64, tau: HuberParam) -> Hyperparams {
        Hyperparams {
            lambda,
            gamma,
            tau,
            rho: self.rho,
            eps: self.eps,
            max_iter: self.max_iter,
        }
    }
}

/// Row labels in `0..k`, balanced to within one, shuffled by `seed`.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParam(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidParam(format!("{n} rows cannot fill {k} folds")));
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(labels)
}

/// Training and held-out rows of one fold.
#[derive(Debug, Clone)]
struct FoldData {
    train: Problem,
    held: Problem,
    solver: NormalSolver,
}

fn split_folds(problem: &Problem, folds: &[usize]) -> Result<Vec<FoldData>> {
    if folds.len() != problem.n() {
        return Err(Error::dim("fold assignment", problem.n(), folds.len()));
    }
    let k = folds.iter().copied().max().map_or(0, |m| m + 1);
    (0..k)
        .map(|f| {
            let held_rows: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] == f).collect();
            let train_rows: Vec<usize> = (0..folds.len()).filter(|&i| folds[i] != f).collect();
            if held_rows.is_empty() || train_rows.is_empty() {
                return Err(Error::InvalidParam(format!("fold {f} is empty or covers every row")));
            }
            let train = problem.select_rows(&train_rows);
            let solver = admm::precompute_normal_solver(train.x())?;
            Ok(FoldData {
                train,
                held: problem.select_rows(&held_rows),
                solver,
            })
        })
        .collect()
}

/// Held-out loss of `a` on `held`: `(1/n_held) * huber(Y - XA)`.
pub fn held_out_loss(held: &Problem, a: &DMatrix<f64>, tau: HuberParam) -> f64 {
    huber_matrix(&(held.y() - held.x() * a), tau) / held.n() as f64
}

/// Cross-validated error of one hyperparameter setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub mean: f64,
    pub se: Option<f64>,
    /// Folds whose fit hit `max_iter` before converging.
    pub nonconverged_folds: usize,
}

pub fn cv_score(problem: &Problem, hp: &Hyperparams, folds: &[usize]) -> Result<CvScore> {
    let data = split_folds(problem, folds)?;
    score_on(&data, hp)
}

fn score_on(data: &[FoldData], hp: &Hyperparams) -> Result<CvScore> {
    let mut losses = Vec::with_capacity(data.len());
    let mut nonconverged = 0;
    for fold in data {
        let res = fit_with_solver(&fold.train, hp, &fold.solver)?;
        if !res.converged {
            nonconverged += 1;
        }
        losses.push(held_out_loss(&fold.held, &res.a_hat, hp.tau));
    }
    let s = mean_and_se(&losses);
    Ok(CvScore {
        mean: s.mean,
        se: s.se,
        nonconverged_folds: nonconverged,
    })
}

/// One grid point of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub gamma: f64,
    pub tau: HuberParam,
    pub score: Option<CvScore>,
    /// Error message when a fold fit failed outright.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub best: Hyperparams,
    pub cv_table: Vec<CvRow>,
    pub refit: FitResult,
}

/// Gradient of the unpenalised loss at zero, `-(1/n) Xᵀ psi(Y)`.
fn gradient_at_zero(problem: &Problem, tau: HuberParam) -> DMatrix<f64> {
    let psi_y = match tau {
        HuberParam::Finite(t) => problem.y().map(|v| clamp_residual(v, t)),
        HuberParam::Infinite => problem.y().clone(),
    };
    -(problem.x().transpose() * psi_y) / problem.n() as f64
}

/// A `lambda` at which zero is provably optimal: the gradient at zero lies
/// in the subdifferential when `||G||_op <= lambda` or `||G||_max <= lambda*gamma`.
pub fn lambda_upper_bound(problem: &Problem, gamma: f64, tau: HuberParam) -> Result<f64> {
    let g = gradient_at_zero(problem, tau);
    let op = g
        .clone()
        .try_svd(false, false, f64::EPSILON, 100_000)
        .ok_or(Error::Svd { rows: g.nrows(), cols: g.ncols() })?
        .singular_values
        .max();
    let mut bound = op;
    if gamma > 0.0 {
        bound = bound.min(g.amax() / gamma);
    }
    Ok(bound)
}

fn fits_zero(res: &FitResult, gamma: f64) -> bool {
    res.rank_estimate == 0 && (gamma == 0.0 || res.support.is_empty())
}

const MAX_HALVINGS: usize = 12;

/// Smallest `lambda`, to within a factor of two, whose fit is exactly zero.
///
/// Starts at [`lambda_upper_bound`] and halves while the fit stays zero.
pub fn lambda_max(problem: &Problem, solver: &NormalSolver, gamma: f64, tau: HuberParam, plan: &CvPlan) -> Result<f64> {
    let mut lambda = lambda_upper_bound(problem, gamma, tau)?;
    if lambda <= 0.0 {
        return Err(Error::InvalidParam("gradient at zero vanishes; no lambda path".into()));
    }
    for _ in 0..MAX_HALVINGS {
        let trial = 0.5 * lambda;
        let res = fit_with_solver(problem, &plan.hyperparams(trial, gamma, tau), solver)?;
        if !fits_zero(&res, gamma) {
            break;
        }
        lambda = trial;
    }
    Ok(lambda)
}

/// `count` log-spaced values from `top` down to `top * min_ratio`.
pub fn log_path(top: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    let step = min_ratio.ln() / (count - 1) as f64;
    (0..count).map(|k| top * (step * k as f64).exp()).collect()
}

fn better(row: &CvRow, mean: f64, incumbent: Option<(&CvRow, f64)>) -> bool {
    let Some((best, best_mean)) = incumbent else {
        return true;
    };
    if mean != best_mean {
        return mean < best_mean;
    }
    if row.lambda != best.lambda {
        return row.lambda > best.lambda;
    }
    row.tau.value() > best.tau.value()
}

/// Scores every grid point and refits the winner on all rows.
pub fn cross_validate(problem: &Problem, plan: &CvPlan) -> Result<CvResult> {
    plan.validate()?;
    let folds = make_folds(problem.n(), plan.folds, plan.seed)?;
    let data = split_folds(problem, &folds)?;
    let full_solver = admm::precompute_normal_solver(problem.x())?;
    let taus = plan.tau_grid.resolve(problem.n(), problem.p(), problem.q())?;

    let mut grid = Vec::new();
    for &tau in &taus {
        for &gamma in &plan.gamma_grid {
            let mut lambdas = match &plan.lambda_grid {
                LambdaGrid::Values(v) => v.clone(),
                LambdaGrid::Path { count, min_ratio } => {
                    let top = lambda_max(problem, &full_solver, gamma, tau, plan)?;
                    log_path(top, *count, *min_ratio)
                }
            };
            lambdas.sort_by(|a, b| b.total_cmp(a));
            grid.extend(lambdas.into_iter().map(|lambda| (lambda, gamma, tau)));
        }
    }

    let cv_table: Vec<CvRow> = grid
        .par_iter()
        .map(|&(lambda, gamma, tau)| {
            let hp = plan.hyperparams(lambda, gamma, tau);
            let (score, error) = match score_on(&data, &hp) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CvRow {
                lambda,
                gamma,
                tau,
                score,
                error,
            }
        })
        .collect();

    let mut best: Option<(&CvRow, f64)> = None;
    for row in &cv_table {
        if let Some(s) = &row.score {
            if s.mean.is_finite() && better(row, s.mean, best) {
                best = Some((row, s.mean));
            }
        }
    }
    let (row, _) = best.ok_or(Error::AllCombinationsFailed)?;
    let best = plan.hyperparams(row.lambda, row.gamma, row.tau);
    let refit = fit_with_solver(problem, &best, &full_solver)?;
    Ok(CvResult {
        best,
        cv_table,
        refit,
    })
}
