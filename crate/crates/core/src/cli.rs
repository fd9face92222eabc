//! Command-line surface: argument parsing, run configurations and the
//! commands that read inputs and write result files.
//!
//! Every command writes `manifest.json` next to its outputs. The manifest
//! holds the full [`RunConfig`], and `rerun` replays it to reproduce the same
//! files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::admm::{self, FitResult, Hyperparams, Problem};
use crate::diagnostics::{self, CheckConfig, CheckRow, NoiseSpec, SupnormConfig, TauRule};
use crate::error::{Error, Result};
use crate::io;
use crate::prox::HuberParam;
use crate::simulate::{self, Method, NoiseKind, ScenarioRun, ScenarioSpec, SimulationOptions};
use crate::tuning::{self, tau_scale, CvPlan, LambdaGrid, TauGrid};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A diagnostic check ran but breached its tolerance.
    CheckFailed,
}

/// 0 on success, 1 on a failed check, 2 on usage, input or I/O errors.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::CheckFailed) => 1,
        Err(_) => 2,
    }
}

/// Threshold given either directly or as a multiple of `sqrt(n / log(pq))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauChoice {
    Value(HuberParam),
    Scaled(f64),
}

impl TauChoice {
    pub fn resolve(&self, n: usize, p: usize, q: usize) -> Result<HuberParam> {
        match *self {
            TauChoice::Value(t) => Ok(t),
            TauChoice::Scaled(c) => HuberParam::new(c * tau_scale(n, p, q)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub x: PathBuf,
    pub y: PathBuf,
    pub lambda: f64,
    pub gamma: f64,
    pub tau: TauChoice,
    pub rho: f64,
    pub eps: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub x: PathBuf,
    pub y: PathBuf,
    pub plan: CvPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub scenario: Option<String>,
    pub spec: ScenarioSpec,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub options: SimulationOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub df: f64,
    pub delta: f64,
    pub n: usize,
    pub tau: f64,
    pub t_values: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum DiagnoseConfig {
    GradCheck(CheckConfig),
    HessianCheck(CheckConfig),
    Supnorm(SupnormConfig),
    Truncation(TruncationConfig),
    Grubbs { y: PathBuf, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Fit(FitConfig),
    Cv(CvConfig),
    Simulate(SimulateConfig),
    Diagnose(DiagnoseConfig),
}

/// Everything needed to repeat a run. The output directory is where the
/// manifest lives, so it is not part of the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
}

pub fn read_manifest(path: &Path) -> Result<RunConfig> {
    let m: Manifest = io::read_json(path)?;
    Ok(m.config)
}

/// Runs `config` on a pool of `config.threads` workers (all cores if unset).
pub fn run(config: &RunConfig) -> Result<Outcome> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    pool.install(|| {
        let out = config.out_dir.as_path();
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let outcome = match &config.command {
            Command::Fit(c) => cmd_fit(c, out),
            Command::Cv(c) => cmd_cv(c, out),
            Command::Simulate(c) => cmd_simulate(c, out),
            Command::Diagnose(c) => cmd_diagnose(c, out),
        }?;
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
        };
        io::write_json(&out.join(MANIFEST), &manifest)?;
        Ok(outcome)
    })
}

fn load_problem(x: &Path, y: &Path) -> Result<Problem> {
    let xm = io::read_matrix(x)?;
    let ym = io::read_matrix(y)?;
    if xm.nrows() != ym.nrows() {
        return Err(Error::dim(
            format!("rows of {}", y.display()),
            format!("{} (rows of {})", xm.nrows(), x.display()),
            ym.nrows(),
        ));
    }
    Problem::new(xm, ym)
}

#[derive(Serialize)]
struct SupportRow {
    row: usize,
    col: usize,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    lambda: f64,
    gamma: f64,
    tau: HuberParam,
    #[serde(flatten)]
    fit: &'a FitResult,
}

fn write_fit(out: &Path, hp: &Hyperparams, fit: &FitResult) -> Result<()> {
    io::write_matrix(&out.join("coef.csv"), &fit.a_hat)?;
    let support: Vec<SupportRow> = fit.support.iter().map(|&(row, col)| SupportRow { row, col }).collect();
    write_support(&out.join("support.csv"), &support)?;
    let summary = FitSummary {
        lambda: hp.lambda,
        gamma: hp.gamma,
        tau: hp.tau,
        fit,
    };
    io::write_json(&out.join("fit.json"), &summary)
}

fn write_support(path: &Path, rows: &[SupportRow]) -> Result<()> {
    if rows.is_empty() {
        // a header-only file still tells readers the column names
        std::fs::write(path, "row,col\n").map_err(|e| Error::io(path, e))
    } else {
        io::write_records(path, rows)
    }
}

pub fn cmd_fit(cfg: &FitConfig, out: &Path) -> Result<Outcome> {
    let problem = load_problem(&cfg.x, &cfg.y)?;
    let tau = cfg.tau.resolve(problem.n(), problem.p(), problem.q())?;
    let hp = Hyperparams {
        lambda: cfg.lambda,
        gamma: cfg.gamma,
        tau,
        rho: cfg.rho,
        eps: cfg.eps,
        max_iter: cfg.max_iter,
    };
    let fit = admm::fit(&problem, &hp)?;
    if !fit.converged {
        eprintln!("warning: no convergence within {} iterations", hp.max_iter);
    }
    write_fit(out, &hp, &fit)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct CvTableRow {
    lambda: f64,
    gamma: f64,
    tau: String,
    mean: Option<f64>,
    se: Option<f64>,
    nonconverged_folds: Option<usize>,
    error: Option<String>,
}

pub fn cmd_cv(cfg: &CvConfig, out: &Path) -> Result<Outcome> {
    let problem = load_problem(&cfg.x, &cfg.y)?;
    let res = tuning::cross_validate(&problem, &cfg.plan)?;
    let table: Vec<CvTableRow> = res
        .cv_table
        .iter()
        .map(|r| CvTableRow {
            lambda: r.lambda,
            gamma: r.gamma,
            tau: r.tau.to_string(),
            mean: r.score.map(|s| s.mean),
            se: r.score.and_then(|s| s.se),
            nonconverged_folds: r.score.map(|s| s.nonconverged_folds),
            error: r.error.clone(),
        })
        .collect();
    io::write_records(&out.join("cv_table.csv"), &table)?;
    io::write_json(&out.join("selected.json"), &res.best)?;
    write_fit(out, &res.best, &res.refit)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct ReplicateCsvRow {
    method: &'static str,
    replicate: usize,
    data_seed: u64,
    fold_seed: u64,
    frob_error: f64,
    tpr: Option<f64>,
    fpr: Option<f64>,
    lambda: f64,
    gamma: f64,
    tau: String,
    rank_estimate: usize,
    support_size: usize,
    iterations: usize,
    converged: bool,
}

#[derive(Serialize)]
struct SummaryCsvRow {
    method: &'static str,
    noise: &'static str,
    contamination: f64,
    mean_frob: f64,
    se_frob: Option<f64>,
    mean_tpr: Option<f64>,
    se_tpr: Option<f64>,
    mean_fpr: Option<f64>,
    se_fpr: Option<f64>,
}

pub fn cmd_simulate(cfg: &SimulateConfig, out: &Path) -> Result<Outcome> {
    if cfg.methods.is_empty() {
        return Err(Error::InvalidParam("no methods to simulate".into()));
    }
    let runs: Vec<ScenarioRun> = cfg
        .methods
        .iter()
        .map(|&m| simulate::run_scenario(&cfg.spec, m, cfg.replicates, cfg.seed, &cfg.options))
        .collect::<Result<_>>()?;
    let mut reps = Vec::new();
    let mut summary = Vec::new();
    for run in &runs {
        let method = run.method.label();
        for (r, msg) in &run.failures {
            eprintln!("warning: {method} replicate {r} failed: {msg}");
        }
        reps.extend(run.rows.iter().map(|row| ReplicateCsvRow {
            method,
            replicate: row.replicate,
            data_seed: row.data_seed,
            fold_seed: row.fold_seed,
            frob_error: row.metrics.frob_error,
            tpr: row.metrics.tpr,
            fpr: row.metrics.fpr,
            lambda: row.lambda,
            gamma: row.gamma,
            tau: row.tau.to_string(),
            rank_estimate: row.rank_estimate,
            support_size: row.support_size,
            iterations: row.iterations,
            converged: row.converged,
        }));
        let s = &run.summary;
        summary.push(SummaryCsvRow {
            method,
            noise: cfg.spec.noise.label(),
            contamination: cfg.spec.contamination_frac,
            mean_frob: s.frob.mean,
            se_frob: s.frob.se,
            mean_tpr: s.tpr.map(|m| m.mean),
            se_tpr: s.tpr.and_then(|m| m.se),
            mean_fpr: s.fpr.map(|m| m.mean),
            se_fpr: s.fpr.and_then(|m| m.se),
        });
    }
    io::write_records(&out.join("replicates.csv"), &reps)?;
    io::write_records(&out.join("summary.csv"), &summary)?;
    let detail: Vec<_> = runs
        .iter()
        .map(|r| serde_json::json!({ "method": r.method, "summary": r.summary, "failures": r.failures }))
        .collect();
    io::write_json(&out.join("summary.json"), &detail)?;
    Ok(Outcome::Success)
}

fn check_outcome(rows: &[CheckRow]) -> Outcome {
    if rows.iter().all(|r| r.passed) {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    }
}

#[derive(Serialize)]
struct TruncationRow {
    t: f64,
    bound: f64,
    violations: usize,
    replicates: usize,
    frequency: f64,
    nominal: f64,
    limit: f64,
    passed: bool,
}

#[derive(Serialize)]
struct GrubbsRow {
    column: usize,
    statistic: Option<f64>,
    critical: f64,
    flagged: bool,
    note: Option<String>,
}

pub fn cmd_diagnose(cfg: &DiagnoseConfig, out: &Path) -> Result<Outcome> {
    match cfg {
        DiagnoseConfig::GradCheck(c) => {
            let rows = diagnostics::gradient_check(c)?;
            io::write_records(&out.join("grad_check.csv"), &rows)?;
            Ok(check_outcome(&rows))
        }
        DiagnoseConfig::HessianCheck(c) => {
            let rows = diagnostics::hessian_check(c)?;
            io::write_records(&out.join("hessian_check.csv"), &rows)?;
            Ok(check_outcome(&rows))
        }
        DiagnoseConfig::Supnorm(c) => {
            let table = diagnostics::gradient_supnorm_experiment(c)?;
            io::write_records(&out.join("supnorm.csv"), &table.rows)?;
            io::write_json(&out.join("supnorm.json"), &table)?;
            Ok(Outcome::Success)
        }
        DiagnoseConfig::Truncation(c) => {
            let (spec, kind) = NoiseSpec::student_t(c.df, c.delta)?;
            let mut rows = Vec::new();
            for &t in &c.t_values {
                let r = diagnostics::truncation_bound_experiment(
                    spec,
                    |rng| kind.sample(rng),
                    c.n,
                    c.tau,
                    t,
                    c.replicates,
                    c.seed,
                )?;
                let limit = r.nominal + 3.0 * (r.nominal / r.replicates as f64).sqrt();
                rows.push(TruncationRow {
                    t,
                    bound: r.bound,
                    violations: r.violations,
                    replicates: r.replicates,
                    frequency: r.frequency,
                    nominal: r.nominal,
                    limit,
                    passed: r.frequency <= limit,
                });
            }
            io::write_records(&out.join("truncation.csv"), &rows)?;
            Ok(if rows.iter().all(|r| r.passed) { Outcome::Success } else { Outcome::CheckFailed })
        }
        DiagnoseConfig::Grubbs { y, alpha } => {
            let report = diagnostics::grubbs_screen(&io::read_matrix(y)?, *alpha)?;
            let rows: Vec<GrubbsRow> = report
                .columns
                .iter()
                .map(|c| GrubbsRow {
                    column: c.column,
                    statistic: c.statistic,
                    critical: c.critical,
                    flagged: c.flagged,
                    note: c.note.clone(),
                })
                .collect();
            io::write_records(&out.join("grubbs.csv"), &rows)?;
            io::write_json(&out.join("grubbs.json"), &report)?;
            eprintln!("{} of {} columns flagged", report.flagged().len(), rows.len());
            Ok(Outcome::Success)
        }
    }
}

/// Comma-separated numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidParam(format!("bad number '{}' in list '{s}'", t.trim())))
        })
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(Error::InvalidParam("empty list".into()));
    }
    Ok(vals)
}

#[derive(Debug, Parser)]
#[command(name = "huber-rrr", version, about = "Robust sparse reduced-rank regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Fit at fixed hyperparameters.
    Fit(FitArgs),
    /// Choose hyperparameters by k-fold cross-validation and refit.
    Cv(CvArgs),
    /// Monte-Carlo replicates of a synthetic scenario.
    Simulate(SimulateArgs),
    /// Numerical checks and experiments.
    Diagnose(DiagnoseArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl SolverArgs {
    fn resolve(&self) -> (f64, f64, usize) {
        let d = Hyperparams::default();
        (self.rho.unwrap_or(d.rho), self.eps.unwrap_or(d.eps), self.max_iter.unwrap_or(d.max_iter))
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Huber threshold, or `inf` for squared error.
    #[arg(long, conflicts_with = "tau_c")]
    pub tau: Option<String>,
    /// Threshold as a multiple of sqrt(n / log(pq)); 1.0 if neither is given.
    #[arg(long)]
    pub tau_c: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub folds: Option<usize>,
    /// Explicit lambda values; a log-spaced path from lambda_max otherwise.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub gamma_grid: Option<String>,
    #[arg(long, conflicts_with = "tau")]
    pub tau_c_grid: Option<String>,
    /// Absolute tau values, or `inf` for squared error.
    #[arg(long)]
    pub tau: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

impl GridArgs {
    fn plan(&self, seed: u64) -> Result<CvPlan> {
        let mut plan = CvPlan { seed, ..CvPlan::default() };
        if let Some(k) = self.folds {
            plan.folds = k;
        }
        if let Some(s) = &self.lambda_grid {
            plan.lambda_grid = LambdaGrid::Values(parse_list(s)?);
        }
        if let Some(s) = &self.gamma_grid {
            plan.gamma_grid = parse_list(s)?;
        }
        if let Some(s) = &self.tau_c_grid {
            plan.tau_grid = TauGrid::Scaled(parse_list(s)?);
        }
        if let Some(s) = &self.tau {
            let taus: Vec<HuberParam> = s.split(',').map(str::parse).collect::<Result<_>>()?;
            plan.tau_grid = if taus.iter().all(HuberParam::is_infinite) {
                TauGrid::Squared
            } else if taus.iter().any(HuberParam::is_infinite) {
                return Err(Error::InvalidParam("cannot mix inf with finite tau values".into()));
            } else {
                TauGrid::Fixed(taus.iter().map(HuberParam::value).collect())
            };
        }
        (plan.rho, plan.eps, plan.max_iter) = self.solver.resolve();
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `table{1,2,3,4}-rank{1,2}`.
    #[arg(long, default_value = "table2-rank1", conflicts_with = "spec")]
    pub scenario: String,
    /// JSON file holding an explicit scenario.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// normal, t or lognormal.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub contamination: Option<f64>,
    /// huber, squared or both.
    #[arg(long, default_value = "both")]
    pub method: String,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(subcommand)]
    pub check: DiagnoseCommand,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub tol: Option<f64>,
}

impl CheckArgs {
    fn config(&self, n: usize, p: usize, q: usize, tol: f64) -> CheckConfig {
        CheckConfig {
            instances: self.instances,
            n: self.n.unwrap_or(n),
            p: self.p.unwrap_or(p),
            q: self.q.unwrap_or(q),
            tau: self.tau,
            seed: self.seed,
            tol: self.tol.unwrap_or(tol),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Loss gradient against finite differences.
    GradCheck(CheckArgs),
    /// Loss Hessian against finite differences, plus semidefiniteness.
    HessianCheck(CheckArgs),
    /// Decay of the gradient sup-norm at the truth with n.
    Supnorm {
        #[arg(long, default_value = "100,200,400,800,1600")]
        n_grid: String,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 5)]
        q: usize,
        #[arg(long, default_value = "normal")]
        noise: String,
        #[arg(long, default_value_t = 1.0, conflicts_with = "tau")]
        tau_c: f64,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Frequency of many large draws from a Student t law.
    Truncation {
        #[arg(long, default_value_t = 3.0)]
        df: f64,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 4.0)]
        tau: f64,
        #[arg(long, default_value = "0.5,1,2")]
        t_values: String,
        #[arg(long, default_value_t = 10_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Grubbs' outlier test on each column of a response file.
    Grubbs {
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Defaults to the manifest's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn methods(s: &str) -> Result<Vec<Method>> {
    match s.to_ascii_lowercase().as_str() {
        "both" => Ok(vec![Method::Huber, Method::Squared]),
        other => other.split(',').map(str::parse).collect(),
    }
}

impl Cli {
    pub fn into_config(self) -> Result<RunConfig> {
        let (output, command) = match self.command {
            CliCommand::Fit(a) => {
                let tau = match (&a.tau, a.tau_c) {
                    (Some(t), _) => TauChoice::Value(t.parse()?),
                    (None, c) => TauChoice::Scaled(c.unwrap_or(1.0)),
                };
                let (rho, eps, max_iter) = a.solver.resolve();
                let cfg = FitConfig {
                    x: a.data.x,
                    y: a.data.y,
                    lambda: a.lambda,
                    gamma: a.gamma,
                    tau,
                    rho,
                    eps,
                    max_iter,
                };
                (a.output, Command::Fit(cfg))
            }
            CliCommand::Cv(a) => {
                let plan = a.grid.plan(a.seed)?;
                (a.output, Command::Cv(CvConfig { x: a.data.x, y: a.data.y, plan }))
            }
            CliCommand::Simulate(a) => {
                let (scenario, mut spec) = match &a.spec {
                    Some(path) => (None, io::read_json::<ScenarioSpec>(path)?),
                    None => (Some(a.scenario.clone()), ScenarioSpec::named(&a.scenario)?),
                };
                if let Some(n) = &a.noise {
                    spec.noise = n.parse::<NoiseKind>()?;
                }
                if let Some(c) = a.contamination {
                    spec.contamination_frac = c;
                }
                spec.validate()?;
                let cfg = SimulateConfig {
                    scenario,
                    spec,
                    methods: methods(&a.method)?,
                    replicates: a.replicates,
                    seed: a.seed,
                    options: SimulationOptions { cv: a.grid.plan(0)? },
                };
                (a.output, Command::Simulate(cfg))
            }
            CliCommand::Diagnose(a) => {
                let cfg = match a.check {
                    DiagnoseCommand::GradCheck(c) => DiagnoseConfig::GradCheck(c.config(30, 4, 3, 1e-6)),
                    DiagnoseCommand::HessianCheck(c) => DiagnoseConfig::HessianCheck(c.config(40, 3, 2, 1e-5)),
                    DiagnoseCommand::Supnorm { n_grid, p, q, noise, tau_c, tau, replicates, seed } => {
                        let n_grid = parse_list(&n_grid)?
                            .into_iter()
                            .map(|v| {
                                (v >= 1.0 && v.fract() == 0.0)
                                    .then_some(v as usize)
                                    .ok_or_else(|| Error::InvalidParam(format!("bad sample size {v}")))
                            })
                            .collect::<Result<_>>()?;
                        DiagnoseConfig::Supnorm(SupnormConfig {
                            n_grid,
                            p,
                            q,
                            noise: noise.parse()?,
                            tau_rule: tau.map_or(TauRule::Scaled(tau_c), TauRule::Fixed),
                            replicates,
                            seed,
                        })
                    }
                    DiagnoseCommand::Truncation { df, delta, n, tau, t_values, replicates, seed } => {
                        DiagnoseConfig::Truncation(TruncationConfig {
                            df,
                            delta,
                            n,
                            tau,
                            t_values: parse_list(&t_values)?,
                            replicates,
                            seed,
                        })
                    }
                    DiagnoseCommand::Grubbs { y, alpha } => DiagnoseConfig::Grubbs { y, alpha },
                };
                (a.output, Command::Diagnose(cfg))
            }
            CliCommand::Rerun(a) => {
                let mut cfg = read_manifest(&a.manifest)?;
                cfg.out_dir = match a.out_dir {
                    Some(d) => d,
                    None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
                };
                return Ok(cfg);
            }
        };
        Ok(RunConfig {
            out_dir: output.out_dir,
            threads: output.threads,
            command,
        })
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = cli.into_config().and_then(|cfg| run(&cfg));
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}
