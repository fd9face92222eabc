//! Synthetic data generators and evaluation metrics for the low- and
//! high-dimensional experiments: AR(1) Gaussian designs, sparse or dense
//! low-rank coefficient matrices, heavy-tailed noise and cell-wise
//! contamination of the response.
//!
//! Every generator is a deterministic function of its seed. Replicates of a
//! scenario draw their seeds from a ChaCha stream indexed by the replicate
//! number, so replicate `r` sees the same data whatever the replicate count
//! or the thread count.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::Problem;
use crate::error::{Error, Result};
use crate::stats::{mean_and_se, MeanSe};
use crate::tuning::{self, CvPlan};

/// Lag-one correlation of the AR(1) design covariance `0.5^{|i-j|}`.
pub const DESIGN_CORRELATION: f64 = 0.5;

/// Length of the unit blocks in the sparse coefficient patterns.
pub const SPARSE_BLOCK: usize = 4;

/// Support of the two-sided uniform used for dense coefficient vectors.
const DENSE_MAGNITUDE: (f64, f64) = (0.5, 1.0);

pub type Index = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefPattern {
    DenseRank1,
    DenseRank2,
    SparseRank1,
    SparseRank2,
}

impl CoefPattern {
    pub fn is_sparse(&self) -> bool {
        matches!(self, CoefPattern::SparseRank1 | CoefPattern::SparseRank2)
    }

    pub fn rank(&self) -> usize {
        match self {
            CoefPattern::DenseRank1 | CoefPattern::SparseRank1 => 1,
            CoefPattern::DenseRank2 | CoefPattern::SparseRank2 => 2,
        }
    }
}

impl std::str::FromStr for CoefPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::InvalidParam(format!("unknown coefficient pattern '{s}'")))
    }
}

/// Law of the i.i.d. error entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    Normal { sd: f64 },
    StudentT { df: f64 },
    /// `exp(N(0, sigma²))`, recentred by its mean `exp(sigma²/2)`.
    LogNormal { sigma: f64 },
}

impl NoiseKind {
    pub const NORMAL: NoiseKind = NoiseKind::Normal { sd: 2.0 };
    pub const STUDENT_T: NoiseKind = NoiseKind::StudentT { df: 1.5 };
    pub const LOG_NORMAL: NoiseKind = NoiseKind::LogNormal { sigma: 1.2 };

    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::Normal { .. } => "normal",
            NoiseKind::StudentT { .. } => "t",
            NoiseKind::LogNormal { .. } => "lognormal",
        }
    }

    /// One centred draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseKind::Normal { sd } => sd * rng.sample::<f64, _>(StandardNormal),
            NoiseKind::StudentT { df } => {
                let z: f64 = rng.sample(StandardNormal);
                let chi = ChiSquared::new(df).expect("df > 0").sample(rng);
                z / (chi / df).sqrt()
            }
            NoiseKind::LogNormal { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                (sigma * z).exp() - (0.5 * sigma * sigma).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let v = match *self {
            NoiseKind::Normal { sd } => sd,
            NoiseKind::StudentT { df } => df,
            NoiseKind::LogNormal { sigma } => sigma,
        };
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("bad noise parameter in {self:?}")))
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    /// Accepts `normal`, `t` and `lognormal` with their default parameters.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(NoiseKind::NORMAL),
            "t" | "student-t" | "student_t" => Ok(NoiseKind::STUDENT_T),
            "lognormal" | "log-normal" => Ok(NoiseKind::LOG_NORMAL),
            _ => Err(Error::InvalidParam(format!("unknown noise kind '{s}'"))),
        }
    }
}

/// Generative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub coef_pattern: CoefPattern,
    pub noise: NoiseKind,
    pub contamination_frac: f64,
    pub contamination_range: (f64, f64),
    pub seed: u64,
    /// Block length `b` of the sparse patterns: `u₁ = (1_b, 0)` and
    /// `u₂ = (0₂, 1_b, 0)`, likewise for `v`.
    #[serde(default = "default_block")]
    pub block: usize,
}

fn default_block() -> usize {
    SPARSE_BLOCK
}

impl ScenarioSpec {
    pub fn new(n: usize, p: usize, q: usize, coef_pattern: CoefPattern, noise: NoiseKind) -> Self {
        ScenarioSpec {
            n,
            p,
            q,
            coef_pattern,
            noise,
            contamination_frac: 0.0,
            contamination_range: (10.0, 20.0),
            seed: 0,
            block: SPARSE_BLOCK,
        }
    }

    pub fn with_contamination(mut self, frac: f64) -> Self {
        self.contamination_frac = frac;
        self
    }

    /// Named layouts of the published experiments: `table{1,2,3,4}-rank{1,2}`.
    ///
    /// Tables 1 and 2 are the low-dimensional dense and sparse settings
    /// (n=200, p=50, q=10); tables 3 and 4 the high-dimensional sparse
    /// setting (n=150, p=200, q=10). Table 4 carries 10% contamination of
    /// Gaussian-noise responses unless overridden.
    pub fn named(name: &str) -> Result<Self> {
        let (table, rank) = name
            .strip_prefix("table")
            .and_then(|rest| rest.split_once("-rank"))
            .ok_or_else(|| Error::InvalidParam(format!("unknown scenario '{name}'")))?;
        let two = match rank {
            "1" => false,
            "2" => true,
            _ => return Err(Error::InvalidParam(format!("unknown scenario '{name}'"))),
        };
        let sparse = if two { CoefPattern::SparseRank2 } else { CoefPattern::SparseRank1 };
        let dense = if two { CoefPattern::DenseRank2 } else { CoefPattern::DenseRank1 };
        let spec = match table {
            "1" => ScenarioSpec::new(200, 50, 10, dense, NoiseKind::NORMAL),
            "2" => ScenarioSpec::new(200, 50, 10, sparse, NoiseKind::NORMAL),
            "3" => ScenarioSpec::new(150, 200, 10, sparse, NoiseKind::NORMAL),
            "4" => ScenarioSpec::new(150, 200, 10, sparse, NoiseKind::NORMAL).with_contamination(0.10),
            _ => return Err(Error::InvalidParam(format!("unknown scenario '{name}'"))),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.q == 0 {
            return Err(Error::InvalidParam("scenario dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.contamination_frac) {
            return Err(Error::InvalidParam(format!(
                "contamination fraction must lie in [0, 1), got {}",
                self.contamination_frac
            )));
        }
        let (lo, hi) = self.contamination_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParam(format!("bad contamination range ({lo}, {hi})")));
        }
        check_pattern(self.coef_pattern, self.block, self.p, self.q)?;
        self.noise.validate()
    }
}

fn check_pattern(pattern: CoefPattern, block: usize, p: usize, q: usize) -> Result<()> {
    if block == 0 && pattern.is_sparse() {
        return Err(Error::InvalidParam("sparse block length must be positive".into()));
    }
    let need = match pattern {
        CoefPattern::SparseRank1 => block,
        CoefPattern::SparseRank2 => block + 2,
        CoefPattern::DenseRank1 => 1,
        CoefPattern::DenseRank2 => 2,
    };
    if p < need || q < need {
        return Err(Error::InvalidParam(format!(
            "{pattern:?} needs p, q >= {need}, got p={p}, q={q}"
        )));
    }
    Ok(())
}

/// One synthetic data set with its ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub problem: Problem,
    pub a_star: DMatrix<f64>,
    pub support_star: Vec<Index>,
    /// Noise before contamination.
    pub e: DMatrix<f64>,
    pub contaminated_mask: Vec<Index>,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rows drawn i.i.d. from `N(0, Σ)` with `Σ_ij = 0.5^{|i-j|}`, then the whole
/// matrix divided by its largest absolute entry.
pub fn gen_design(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut x = gen_design_unscaled(n, p, seed);
    let m = x.amax();
    if m > 0.0 {
        x /= m;
    }
    x
}

/// AR(1) recursion `x_j = ρ x_{j-1} + sqrt(1-ρ²) z_j`, whose covariance is
/// exactly the Toeplitz matrix `ρ^{|i-j|}`.
pub fn gen_design_unscaled(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let r = DESIGN_CORRELATION;
    let innov = (1.0 - r * r).sqrt();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..p {
            let z: f64 = rng.sample(StandardNormal);
            let v = if j == 0 { z } else { r * prev + innov * z };
            x[(i, j)] = v;
            prev = v;
        }
    }
    x
}

fn indicator(len: usize, range: std::ops::Range<usize>) -> DMatrix<f64> {
    DMatrix::from_fn(len, 1, |i, _| if range.contains(&i) { 1.0 } else { 0.0 })
}

fn dense_vector(rng: &mut ChaCha8Rng, len: usize) -> DMatrix<f64> {
    let mag = Uniform::new_inclusive(DENSE_MAGNITUDE.0, DENSE_MAGNITUDE.1).expect("valid range");
    DMatrix::from_fn(len, 1, |_, _| {
        let m = mag.sample(rng);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// True coefficient matrix and its exact nonzero set (column-major order).
pub fn gen_coef(
    pattern: CoefPattern,
    block: usize,
    p: usize,
    q: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, Vec<Index>)> {
    check_pattern(pattern, block, p, q)?;
    let (first, second) = (0..block, 2..block + 2);
    let a = match pattern {
        CoefPattern::SparseRank1 => indicator(p, first.clone()) * indicator(q, first).transpose(),
        CoefPattern::SparseRank2 => {
            indicator(p, first.clone()) * indicator(q, first).transpose()
                + indicator(p, second.clone()) * indicator(q, second).transpose()
        }
        CoefPattern::DenseRank1 | CoefPattern::DenseRank2 => {
            let mut rng = rng(seed);
            let mut a = DMatrix::zeros(p, q);
            for _ in 0..pattern.rank() {
                let u = dense_vector(&mut rng, p);
                let v = dense_vector(&mut rng, q);
                a += u * v.transpose();
            }
            a
        }
    };
    let support = crate::admm::exact_support(&a);
    Ok((a, support))
}

/// `n×q` i.i.d. draws from `kind`.
pub fn gen_noise(kind: NoiseKind, n: usize, q: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let mut e = DMatrix::zeros(n, q);
    for i in 0..n {
        for k in 0..q {
            e[(i, k)] = kind.sample(&mut rng);
        }
    }
    e
}

/// Number of cells overwritten for a given fraction, rounding half up.
pub fn contamination_count(frac: f64, cells: usize) -> usize {
    (frac * cells as f64 + 0.5).floor() as usize
}

/// Overwrites exactly `round(frac·n·q)` uniformly chosen cells of `y` with
/// `Uniform(range)` draws. The mask lists the cells in column-major order.
pub fn contaminate(y: &DMatrix<f64>, frac: f64, range: (f64, f64), seed: u64) -> Result<(DMatrix<f64>, Vec<Index>)> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::InvalidParam(format!("contamination fraction {frac} outside [0, 1)")));
    }
    let (rows, cols) = y.shape();
    let cells = rows * cols;
    let count = contamination_count(frac, cells);
    let mut out = y.clone();
    if count == 0 {
        return Ok((out, Vec::new()));
    }
    let dist = Uniform::new_inclusive(range.0, range.1)
        .map_err(|e| Error::InvalidParam(format!("bad contamination range: {e}")))?;
    let mut rng = rng(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, cells, count).into_vec();
    picked.sort_unstable();
    let mut mask = Vec::with_capacity(count);
    for lin in picked {
        let (r, c) = (lin % rows, lin / rows);
        out[(r, c)] = dist.sample(&mut rng);
        mask.push((r, c));
    }
    Ok((out, mask))
}

/// Component seeds for one data set, drawn from a single master seed.
struct DataSeeds {
    design: u64,
    coef: u64,
    noise: u64,
    contamination: u64,
}

impl DataSeeds {
    fn from_master(seed: u64) -> Self {
        let mut r = rng(seed);
        DataSeeds {
            design: r.next_u64(),
            coef: r.next_u64(),
            noise: r.next_u64(),
            contamination: r.next_u64(),
        }
    }
}

/// Builds `Y = X A* + E` and applies contamination.
pub fn generate(spec: &ScenarioSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let seeds = DataSeeds::from_master(spec.seed);
    let x = gen_design(spec.n, spec.p, seeds.design);
    let (a_star, support_star) = gen_coef(spec.coef_pattern, spec.block, spec.p, spec.q, seeds.coef)?;
    let e = gen_noise(spec.noise, spec.n, spec.q, seeds.noise);
    let clean = &x * &a_star + &e;
    let (y, contaminated_mask) = contaminate(
        &clean,
        spec.contamination_frac,
        spec.contamination_range,
        seeds.contamination,
    )?;
    Ok(GeneratedData {
        problem: Problem::new(x, y)?,
        a_star,
        support_star,
        e,
        contaminated_mask,
    })
}

/// Estimation error and support recovery rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub frob_error: f64,
    /// Absent when the true support is empty.
    pub tpr: Option<f64>,
    /// Absent when the true support covers every entry.
    pub fpr: Option<f64>,
}

pub fn evaluate(a_hat: &DMatrix<f64>, support_hat: &[Index], truth: &GeneratedData) -> Result<Metrics> {
    if a_hat.shape() != truth.a_star.shape() {
        return Err(Error::dim(
            "estimate",
            format!("{}x{}", truth.a_star.nrows(), truth.a_star.ncols()),
            format!("{}x{}", a_hat.nrows(), a_hat.ncols()),
        ));
    }
    let total = a_hat.len();
    let star: BTreeSet<Index> = truth.support_star.iter().copied().collect();
    let hat: BTreeSet<Index> = support_hat.iter().copied().collect();
    let hits = hat.intersection(&star).count();
    let false_pos = hat.len() - hits;
    let tpr = (!star.is_empty()).then(|| hits as f64 / star.len() as f64);
    let negatives = total - star.len();
    let fpr = (negatives > 0).then(|| false_pos as f64 / negatives as f64);
    Ok(Metrics {
        frob_error: (a_hat - &truth.a_star).norm(),
        tpr,
        fpr,
    })
}

/// Loss used by the fitted method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Huber,
    Squared,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Huber => "huber",
            Method::Squared => "squared",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "huber" => Ok(Method::Huber),
            "squared" | "ls" => Ok(Method::Squared),
            _ => Err(Error::InvalidParam(format!("unknown method '{s}'"))),
        }
    }
}

/// Seed of replicate `index`: word zero of stream `index` of a ChaCha
/// generator keyed by `base_seed`.
pub fn replicate_seed(base_seed: u64, index: u64) -> u64 {
    let mut r = rng(base_seed);
    r.set_stream(index);
    r.next_u64()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub data_seed: u64,
    pub fold_seed: u64,
    pub metrics: Metrics,
    pub lambda: f64,
    pub gamma: f64,
    pub tau: crate::prox::HuberParam,
    pub rank_estimate: usize,
    pub support_size: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub frob: MeanSe,
    pub tpr: Option<MeanSe>,
    pub fpr: Option<MeanSe>,
    pub completed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioRun {
    pub method: Method,
    pub rows: Vec<ReplicateRow>,
    /// `(replicate, message)` for replicates that errored.
    pub failures: Vec<(usize, String)>,
    pub summary: ScenarioSummary,
}

/// Tuning grids and solver constants applied to every replicate. The plan's
/// fold seed is replaced per replicate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub cv: CvPlan,
}

/// Plan for one replicate: dense patterns drop to `gamma = 0`, the squared
/// method to `tau = ∞`.
fn replicate_plan(spec: &ScenarioSpec, method: Method, opts: &SimulationOptions, fold_seed: u64) -> CvPlan {
    let mut plan = opts.cv.clone();
    plan.seed = fold_seed;
    if !spec.coef_pattern.is_sparse() {
        plan.gamma_grid = vec![0.0];
    }
    if method == Method::Squared {
        plan.tau_grid = tuning::TauGrid::Squared;
    }
    plan
}

fn run_replicate(
    spec: &ScenarioSpec,
    method: Method,
    opts: &SimulationOptions,
    replicate: usize,
    base_seed: u64,
) -> Result<ReplicateRow> {
    let mut seeds = rng(replicate_seed(base_seed, replicate as u64));
    let data_seed = seeds.next_u64();
    let fold_seed = seeds.next_u64();
    let data = generate(&ScenarioSpec {
        seed: data_seed,
        ..spec.clone()
    })?;
    let plan = replicate_plan(spec, method, opts, fold_seed);
    let cv = tuning::cross_validate(&data.problem, &plan)?;
    let metrics = evaluate(&cv.refit.a_hat, &cv.refit.support, &data)?;
    Ok(ReplicateRow {
        replicate,
        data_seed,
        fold_seed,
        metrics,
        lambda: cv.best.lambda,
        gamma: cv.best.gamma,
        tau: cv.best.tau,
        rank_estimate: cv.refit.rank_estimate,
        support_size: cv.refit.support.len(),
        iterations: cv.refit.iterations,
        converged: cv.refit.converged,
    })
}

/// Generates, tunes, fits and scores `replicates` independent data sets.
///
/// Replicates run in parallel on the current rayon pool; results are reduced
/// in replicate order so the output does not depend on the thread count.
pub fn run_scenario(
    spec: &ScenarioSpec,
    method: Method,
    replicates: usize,
    base_seed: u64,
    opts: &SimulationOptions,
) -> Result<ScenarioRun> {
    spec.validate()?;
    if replicates == 0 {
        return Err(Error::InvalidParam("replicates must be >= 1".into()));
    }
    let outcomes: Vec<Result<ReplicateRow>> = (0..replicates)
        .into_par_iter()
        .map(|r| run_replicate(spec, method, opts, r, base_seed))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((r, e.to_string())),
        }
    }
    let summary = summarise(&rows, failures.len());
    Ok(ScenarioRun {
        method,
        rows,
        failures,
        summary,
    })
}

pub fn summarise(rows: &[ReplicateRow], failed: usize) -> ScenarioSummary {
    let frob: Vec<f64> = rows.iter().map(|r| r.metrics.frob_error).collect();
    let tpr: Vec<f64> = rows.iter().filter_map(|r| r.metrics.tpr).collect();
    let fpr: Vec<f64> = rows.iter().filter_map(|r| r.metrics.fpr).collect();
    ScenarioSummary {
        frob: mean_and_se(&frob),
        tpr: (!tpr.is_empty()).then(|| mean_and_se(&tpr)),
        fpr: (!fpr.is_empty()).then(|| mean_and_se(&fpr)),
        completed: rows.len(),
        failed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_is_scaled_and_deterministic() {
        let x = gen_design(40, 7, 3);
        assert_eq!(x.amax(), 1.0);
        assert_eq!(x, gen_design(40, 7, 3));
        assert_ne!(x, gen_design(40, 7, 4));
    }

    #[test]
    fn ar1_recursion_is_the_cholesky_factor() {
        let p = 6;
        let r = DESIGN_CORRELATION;
        let sigma = DMatrix::from_fn(p, p, |i, j| r.powi((i as i32 - j as i32).abs()));
        let l = sigma.cholesky().unwrap().l();
        // the recursion applied to unit innovations
        let innov = (1.0 - r * r).sqrt();
        let mut rec = DMatrix::zeros(p, p);
        for k in 0..p {
            for j in 0..p {
                let z = if j == k { 1.0 } else { 0.0 };
                rec[(j, k)] = if j == 0 { z } else { r * rec[(j - 1, k)] + innov * z };
            }
        }
        approx::assert_abs_diff_eq!(rec, l, epsilon = 1e-12);
    }

    #[test]
    fn design_column_correlation() {
        let x = gen_design_unscaled(100_000, 2, 21);
        let (a, b) = (x.column(0), x.column(1));
        let (ma, mb) = (a.mean(), b.mean());
        let cov = a.iter().zip(b.iter()).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>();
        let va = a.iter().map(|u| (u - ma).powi(2)).sum::<f64>();
        let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>();
        let corr = cov / (va * vb).sqrt();
        assert!((0.49..=0.51).contains(&corr), "corr {corr}");
    }

    #[test]
    fn sparse_rank1_coef() {
        let (a, s) = gen_coef(CoefPattern::SparseRank1, SPARSE_BLOCK, 50, 10, 0).unwrap();
        assert_eq!(s.len(), 16);
        assert_eq!(a.sum(), 16.0);
        assert!(s.iter().all(|&(i, j)| i < 4 && j < 4));
        assert_eq!(a.rank(1e-10), 1);
    }

    #[test]
    fn block_length_sets_norm() {
        let (a1, _) = gen_coef(CoefPattern::SparseRank1, 5, 50, 10, 0).unwrap();
        assert_eq!(a1.norm(), 5.0);
        // 32 ones and a 3x3 overlap of twos
        let (a2, s2) = gen_coef(CoefPattern::SparseRank2, 5, 50, 10, 0).unwrap();
        assert_eq!((a2.norm_squared(), s2.len()), (68.0, 41));
        assert!(gen_coef(CoefPattern::SparseRank2, 9, 50, 10, 0).is_err());
        assert!(gen_coef(CoefPattern::SparseRank1, 0, 50, 10, 0).is_err());
    }

    #[test]
    fn sparse_rank2_coef() {
        let (a, s) = gen_coef(CoefPattern::SparseRank2, SPARSE_BLOCK, 50, 10, 0).unwrap();
        assert_eq!(a.rank(1e-10), 2);
        // union of rows/cols {0..4}² and {2..6}², overlapping on {2,3}²
        let mut want = 0;
        for i in 0..50 {
            for j in 0..10 {
                if (i < 4 && j < 4) || ((2..6).contains(&i) && (2..6).contains(&j)) {
                    want += 1;
                }
            }
        }
        assert_eq!(want, 28);
        assert_eq!(s.len(), want);
        assert_eq!(a[(2, 3)], 2.0);
    }

    #[test]
    fn dense_coef_magnitudes() {
        let (a, s) = gen_coef(CoefPattern::DenseRank1, SPARSE_BLOCK, 30, 8, 5).unwrap();
        assert_eq!(s.len(), 240);
        assert_eq!(a.rank(1e-10), 1);
        // recover the generating vectors up to scale: every |u_i v_j| in [0.25, 1]
        assert!(a.iter().all(|v| (0.25..=1.0).contains(&v.abs())));
        let (a2, _) = gen_coef(CoefPattern::DenseRank2, SPARSE_BLOCK, 30, 8, 5).unwrap();
        assert_eq!(a2.rank(1e-10), 2);
        assert_eq!(a2, gen_coef(CoefPattern::DenseRank2, SPARSE_BLOCK, 30, 8, 5).unwrap().0);
    }

    #[test]
    fn pattern_dimension_checks() {
        assert!(gen_coef(CoefPattern::SparseRank2, SPARSE_BLOCK, 5, 10, 0).is_err());
        assert!(gen_coef(CoefPattern::SparseRank1, SPARSE_BLOCK, 50, 3, 0).is_err());
    }

    #[test]
    fn normal_noise_variance() {
        let e = gen_noise(NoiseKind::NORMAL, 20_000, 10, 9);
        let m = e.mean();
        let var = e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        assert!((var / 4.0 - 1.0).abs() < 0.05, "var {var}");
        assert_eq!(e, gen_noise(NoiseKind::NORMAL, 20_000, 10, 9));
    }

    fn median(v: &mut [f64]) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }

    fn kurtosis(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
        m4 / (m2 * m2)
    }

    #[test]
    fn student_t_noise_is_heavy_tailed() {
        let small = gen_noise(NoiseKind::STUDENT_T, 1_000, 10, 1);
        let large = gen_noise(NoiseKind::STUDENT_T, 100_000, 10, 1);
        let mut v: Vec<f64> = large.iter().copied().collect();
        assert!(median(&mut v).abs() < 0.05);
        let (ks, kl) = (kurtosis(small.as_slice()), kurtosis(large.as_slice()));
        assert!(kl > ks && kl > 100.0, "kurtosis {ks} -> {kl}");
    }

    #[test]
    fn noise_is_centred() {
        for kind in [NoiseKind::NORMAL, NoiseKind::STUDENT_T, NoiseKind::LOG_NORMAL] {
            let e = gen_noise(kind, 100_000, 10, 77);
            let mean = crate::stats::compensated_sum(e.as_slice()) / e.len() as f64;
            assert!(mean.abs() < 0.02, "{kind:?}: mean {mean}");
        }
    }

    #[test]
    fn contamination_cases() {
        let y = DMatrix::from_fn(200, 10, |i, j| (i + j) as f64 * 0.01);
        let (same, mask) = contaminate(&y, 0.0, (10.0, 20.0), 1).unwrap();
        assert_eq!(same, y);
        assert!(mask.is_empty());

        let (out, mask) = contaminate(&y, 0.05, (10.0, 20.0), 1).unwrap();
        assert_eq!(mask.len(), 100);
        let set: BTreeSet<_> = mask.iter().copied().collect();
        assert_eq!(set.len(), 100);
        for i in 0..200 {
            for j in 0..10 {
                if set.contains(&(i, j)) {
                    assert!((10.0..=20.0).contains(&out[(i, j)]));
                } else {
                    assert_eq!(out[(i, j)], y[(i, j)]);
                }
            }
        }
        assert_eq!(contaminate(&y, 0.05, (10.0, 20.0), 1).unwrap(), (out, mask));
        assert!(contaminate(&y, 1.0, (10.0, 20.0), 1).is_err());
        assert_eq!(contamination_count(0.5, 3), 2);
        assert_eq!(contamination_count(0.1, 2000), 200);
    }

    #[test]
    fn evaluate_cases() {
        let spec = ScenarioSpec::new(30, 8, 6, CoefPattern::SparseRank1, NoiseKind::NORMAL);
        let data = generate(&spec).unwrap();
        let m = evaluate(&data.a_star, &data.support_star, &data).unwrap();
        assert_eq!(m, Metrics { frob_error: 0.0, tpr: Some(1.0), fpr: Some(0.0) });

        let zero = DMatrix::zeros(8, 6);
        let m = evaluate(&zero, &[], &data).unwrap();
        assert_eq!(m, Metrics { frob_error: data.a_star.norm(), tpr: Some(0.0), fpr: Some(0.0) });

        let all: Vec<Index> = (0..6).flat_map(|j| (0..8).map(move |i| (i, j))).collect();
        let m = evaluate(&zero, &all, &data).unwrap();
        assert_eq!((m.tpr, m.fpr), (Some(1.0), Some(1.0)));

        let mut empty_truth = data.clone();
        empty_truth.support_star.clear();
        assert_eq!(evaluate(&zero, &[], &empty_truth).unwrap().tpr, None);
        assert!(evaluate(&DMatrix::zeros(2, 2), &[], &data).is_err());
    }

    #[test]
    fn generated_data_consistency() {
        let spec = ScenarioSpec { seed: 42, ..ScenarioSpec::named("table2-rank1").unwrap().with_contamination(0.05) };
        let d = generate(&spec).unwrap();
        assert_eq!(d.problem.x().amax(), 1.0);
        assert_eq!(d.contaminated_mask.len(), 100);
        let clean = d.problem.x() * &d.a_star + &d.e;
        let masked: BTreeSet<_> = d.contaminated_mask.iter().copied().collect();
        for j in 0..10 {
            for i in 0..200 {
                if !masked.contains(&(i, j)) {
                    assert_eq!(d.problem.y()[(i, j)], clean[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn named_scenarios() {
        let t3 = ScenarioSpec::named("table3-rank1").unwrap();
        assert_eq!((t3.n, t3.p, t3.q), (150, 200, 10));
        assert_eq!(ScenarioSpec::named("table1-rank2").unwrap().coef_pattern, CoefPattern::DenseRank2);
        assert_eq!(ScenarioSpec::named("table4-rank1").unwrap().contamination_frac, 0.10);
        assert!(ScenarioSpec::named("table9-rank1").is_err());
        assert!(ScenarioSpec::named("bogus").is_err());
    }

    #[test]
    fn replicate_seeds_are_positional() {
        let a: Vec<u64> = (0..5).map(|r| replicate_seed(7, r)).collect();
        let b: Vec<u64> = (0..3).map(|r| replicate_seed(7, r)).collect();
        assert_eq!(&a[..3], &b[..]);
        let distinct: BTreeSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 5);
    }
}
