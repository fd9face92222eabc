//! ADMM solver for Huber-loss regression with a nuclear-norm plus entrywise
//! ℓ₁ penalty:
//!
//! ```text
//! minimise (1/n) huber_tau(Y - XA) + lambda * (||A||_* + gamma * ||A||_{1,1})
//! ```
//!
//! The problem is split into a consensus form with blocks `D = XA`, `Z = A`
//! and `W = A`, each carrying a scaled dual. One iteration updates `A`, `Z`,
//! `W`, `D` and then the three duals, in that order, starting from all-zero
//! blocks. The estimate returned is the consensus block `A`; sparsity is read
//! off `Z` and rank off `W`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::{self, ensure_finite, huber_matrix, HuberParam};

/// Relative-change denominators below this switch the stopping rule to its
/// absolute form.
const ZERO_NORM_GUARD: f64 = 1e-12;
/// Singular values of `W` below this fraction of the largest count as zero.
const RANK_RTOL: f64 = 1e-8;

/// Observed design `X` (n×p) and response `Y` (n×q).
#[derive(Debug, Clone)]
pub struct Problem {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Problem {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::dim("design rows", ">= 1", 0));
        }
        if x.nrows() != y.nrows() {
            return Err(Error::dim("response rows", x.nrows(), y.nrows()));
        }
        ensure_finite(&x, "X")?;
        ensure_finite(&y, "Y")?;
        let max_abs = x.amax();
        if (max_abs - 1.0).abs() > 1e-12 {
            log::warn!("design is not standardised: max|X_ij| = {max_abs}");
        }
        Ok(Problem { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }

    /// Sub-problem made of the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Problem {
        Problem {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
        }
    }

    pub(crate) fn check_coef(&self, a: &DMatrix<f64>) -> Result<()> {
        if a.shape() != (self.p(), self.q()) {
            return Err(Error::dim(
                "coefficient matrix",
                format!("{}x{}", self.p(), self.q()),
                format!("{}x{}", a.nrows(), a.ncols()),
            ));
        }
        Ok(())
    }
}

/// Tuning and solver constants for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub gamma: f64,
    pub tau: HuberParam,
    /// ADMM penalty.
    pub rho: f64,
    /// Stopping tolerance on the squared relative change of `A`.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda: 0.0,
            gamma: 0.0,
            tau: HuberParam::Infinite,
            rho: 0.03,
            eps: 1e-6,
            max_iter: 10_000,
        }
    }
}

impl Hyperparams {
    pub fn new(lambda: f64, gamma: f64, tau: HuberParam) -> Self {
        Hyperparams {
            lambda,
            gamma,
            tau,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return bad(format!("rho must be > 0, got {}", self.rho));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be >= 1".into());
        }
        if let HuberParam::Finite(t) = self.tau {
            if !(t > 0.0) {
                return bad(format!("tau must be > 0, got {t}"));
            }
        }
        Ok(())
    }
}

/// Penalised Huber objective at `a`.
pub fn objective(problem: &Problem, a: &DMatrix<f64>, hp: &Hyperparams) -> Result<f64> {
    problem.check_coef(a)?;
    let resid = problem.y() - problem.x() * a;
    let loss = huber_matrix(&resid, hp.tau) / problem.n() as f64;
    if hp.lambda == 0.0 {
        return Ok(loss);
    }
    let nuclear = nuclear_norm(a)?;
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    Ok(loss + hp.lambda * (nuclear + hp.gamma * l1))
}

pub(crate) fn nuclear_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let (rows, cols) = a.shape();
    let svd = a
        .clone()
        .try_svd(false, false, f64::EPSILON, 100_000)
        .ok_or(Error::Svd { rows, cols })?;
    Ok(svd.singular_values.sum())
}

/// Cholesky factor of `XᵀX + 2I`, the normal matrix of the stacked design
/// `(X; I; I)`. Its eigenvalues are at least 2, so it always exists.
#[derive(Debug, Clone)]
pub struct NormalSolver {
    xt: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl NormalSolver {
    /// Solves `(XᵀX + 2I) v = rhs` column by column.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn dim(&self) -> usize {
        self.xt.nrows()
    }
}

pub fn precompute_normal_solver(x: &DMatrix<f64>) -> Result<NormalSolver> {
    ensure_finite(x, "X")?;
    let xt = x.transpose();
    let mut gram = &xt * x;
    for i in 0..gram.nrows() {
        gram[(i, i)] += 2.0;
    }
    // Unreachable for finite X: the matrix is positive definite.
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::InvalidParam("XᵀX + 2I is not positive definite".into())
    })?;
    Ok(NormalSolver { xt, chol })
}

/// Primal blocks and scaled duals of the splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub a: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub b_z: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    pub iter: usize,
}

impl AdmmState {
    /// All-zero initialisation.
    pub fn zeros(problem: &Problem) -> Self {
        let (n, p, q) = (problem.n(), problem.p(), problem.q());
        AdmmState {
            a: DMatrix::zeros(p, q),
            z: DMatrix::zeros(p, q),
            w: DMatrix::zeros(p, q),
            d: DMatrix::zeros(n, q),
            b_d: DMatrix::zeros(n, q),
            b_z: DMatrix::zeros(p, q),
            b_w: DMatrix::zeros(p, q),
            iter: 0,
        }
    }

    fn check(&self, problem: &Problem) -> Result<()> {
        let pq = (problem.p(), problem.q());
        let nq = (problem.n(), problem.q());
        for (name, m, want) in [
            ("A", &self.a, pq),
            ("Z", &self.z, pq),
            ("W", &self.w, pq),
            ("B_Z", &self.b_z, pq),
            ("B_W", &self.b_w, pq),
            ("D", &self.d, nq),
            ("B_D", &self.b_d, nq),
        ] {
            if m.shape() != want {
                return Err(Error::dim(
                    format!("state block {name}"),
                    format!("{}x{}", want.0, want.1),
                    format!("{}x{}", m.nrows(), m.ncols()),
                ));
            }
        }
        Ok(())
    }

    fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("A", &self.a),
            ("Z", &self.z),
            ("W", &self.w),
            ("D", &self.d),
            ("B_D", &self.b_d),
            ("B_Z", &self.b_z),
            ("B_W", &self.b_w),
        ]
        .into_iter()
        .find(|(_, m)| m.iter().any(|v| !v.is_finite()))
        .map(|(name, _)| name)
    }
}

/// Least-squares update of the consensus block.
pub fn update_a(state: &AdmmState, problem: &Problem, solver: &NormalSolver) -> Result<DMatrix<f64>> {
    state.check(problem)?;
    if solver.dim() != problem.p() || solver.xt.ncols() != problem.n() {
        return Err(Error::dim(
            "normal solver",
            format!("{}x{}", problem.p(), problem.n()),
            format!("{}x{}", solver.dim(), solver.xt.ncols()),
        ));
    }
    Ok(update_a_unchecked(state, solver))
}

fn update_a_unchecked(state: &AdmmState, solver: &NormalSolver) -> DMatrix<f64> {
    let mut rhs = &solver.xt * (&state.d + &state.b_d);
    rhs += &state.z;
    rhs += &state.b_z;
    rhs += &state.w;
    rhs += &state.b_w;
    solver.solve(&rhs)
}

/// Entrywise soft-thresholding of `A - B_Z` at `lambda * gamma / rho`.
pub fn update_z(state: &AdmmState, hp: &Hyperparams) -> DMatrix<f64> {
    let b = hp.lambda * hp.gamma / hp.rho;
    state
        .a
        .zip_map(&state.b_z, |a, bz| prox::soft_threshold(a - bz, b))
}

/// Singular-value soft-thresholding of `A - B_W` at `lambda / rho`.
pub fn update_w(state: &AdmmState, hp: &Hyperparams) -> Result<DMatrix<f64>> {
    Ok(update_w_spectrum(state, hp)?.matrix)
}

fn update_w_spectrum(state: &AdmmState, hp: &Hyperparams) -> Result<prox::Svt> {
    prox::svt(&(&state.a - &state.b_w), hp.lambda / hp.rho)
}

/// Entrywise Huber proximal step towards `C = XA - B_D`.
pub fn update_d(state: &AdmmState, problem: &Problem, hp: &Hyperparams) -> Result<DMatrix<f64>> {
    state.check(problem)?;
    let xa = problem.x() * &state.a;
    Ok(update_d_with(&xa, state, problem, hp))
}

fn update_d_with(xa: &DMatrix<f64>, state: &AdmmState, problem: &Problem, hp: &Hyperparams) -> DMatrix<f64> {
    let n = problem.n();
    let mut d = xa - &state.b_d;
    d.zip_apply(problem.y(), |c, y| *c = prox::prox_d_entry(y, *c, hp.tau, n, hp.rho));
    d
}

/// Dual ascent on the three consensus constraints.
pub fn update_duals(state: &AdmmState, problem: &Problem) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    state.check(problem)?;
    let xa = problem.x() * &state.a;
    Ok(duals_with(&xa, state))
}

fn duals_with(xa: &DMatrix<f64>, state: &AdmmState) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let b_d = &state.b_d + &state.d - xa;
    let b_z = &state.b_z + &state.z - &state.a;
    let b_w = &state.b_w + &state.w - &state.a;
    (b_d, b_z, b_w)
}

/// The block touched by one stage of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    A,
    Z,
    W,
    D,
    Duals,
}

/// One full ADMM iteration, reporting the state after each stage.
///
/// Returns the singular values of the new `W`.
pub fn step_observed(
    state: &mut AdmmState,
    problem: &Problem,
    solver: &NormalSolver,
    hp: &Hyperparams,
    mut observe: impl FnMut(Block, &AdmmState),
) -> Result<DVector<f64>> {
    state.a = update_a_unchecked(state, solver);
    observe(Block::A, state);
    state.z = update_z(state, hp);
    observe(Block::Z, state);
    let svt = update_w_spectrum(state, hp)?;
    state.w = svt.matrix;
    observe(Block::W, state);
    let xa = problem.x() * &state.a;
    state.d = update_d_with(&xa, state, problem, hp);
    observe(Block::D, state);
    let (b_d, b_z, b_w) = duals_with(&xa, state);
    state.b_d = b_d;
    state.b_z = b_z;
    state.b_w = b_w;
    state.iter += 1;
    observe(Block::Duals, state);
    Ok(svt.singular_values)
}

/// Outcome of a single fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Consensus block `A` at termination.
    #[serde(skip)]
    pub a_hat: DMatrix<f64>,
    /// `(row, col)` positions where `Z` is exactly nonzero, column-major order.
    pub support: Vec<(usize, usize)>,
    pub rank_estimate: usize,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `||D - XA||_F`, `||Z - A||_F`, `||W - A||_F` at termination.
    pub primal_residuals: [f64; 3],
}

impl FitResult {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }
}

/// Runs the solver from the all-zero start.
pub fn fit(problem: &Problem, hp: &Hyperparams) -> Result<FitResult> {
    let solver = precompute_normal_solver(problem.x())?;
    fit_with_solver(problem, hp, &solver)
}

/// As [`fit`], reusing a factorisation built from the same design.
pub fn fit_with_solver(problem: &Problem, hp: &Hyperparams, solver: &NormalSolver) -> Result<FitResult> {
    hp.validate()?;
    if solver.dim() != problem.p() || solver.xt.ncols() != problem.n() {
        return Err(Error::dim(
            "normal solver",
            format!("{}x{}", problem.p(), problem.n()),
            format!("{}x{}", solver.dim(), solver.xt.ncols()),
        ));
    }
    let mut state = AdmmState::zeros(problem);
    let mut w_spectrum = DVector::zeros(problem.p().min(problem.q()));
    let mut converged = false;

    while state.iter < hp.max_iter {
        let prev = state.a.clone();
        w_spectrum = step_observed(&mut state, problem, solver, hp, |_, _| {})?;
        if let Some(block) = state.first_non_finite() {
            return Err(Error::Diverged {
                iteration: state.iter,
                block,
            });
        }
        // A is identically zero after the first sweep from the zero start,
        // so the rule is only checked from the second iteration on.
        if state.iter >= 2 && relative_change_met(&prev, &state.a, hp.eps) {
            converged = true;
            break;
        }
    }

    let xa = problem.x() * &state.a;
    let primal_residuals = [
        (&state.d - &xa).norm(),
        (&state.z - &state.a).norm(),
        (&state.w - &state.a).norm(),
    ];
    let support = exact_support(&state.z);
    let rank_estimate = spectrum_rank(&w_spectrum);
    let objective = objective(problem, &state.a, hp)?;
    Ok(FitResult {
        a_hat: state.a,
        support,
        rank_estimate,
        objective,
        iterations: state.iter,
        converged,
        primal_residuals,
    })
}

fn relative_change_met(prev: &DMatrix<f64>, cur: &DMatrix<f64>, eps: f64) -> bool {
    let diff = (cur - prev).norm_squared();
    let denom = prev.norm_squared();
    if denom.sqrt() < ZERO_NORM_GUARD {
        diff <= eps
    } else {
        diff / denom <= eps
    }
}

pub(crate) fn exact_support(z: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for c in 0..z.ncols() {
        for r in 0..z.nrows() {
            if z[(r, c)] != 0.0 {
                out.push((r, c));
            }
        }
    }
    out
}

fn spectrum_rank(s: &DVector<f64>) -> usize {
    let top = s.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v >= RANK_RTOL * top).count()
}
