//! End-to-end acceptance checks. Every criterion writes one `PASS`/`FAIL`
//! line to stderr (outside the test harness capture) before asserting.
//!
//! The Monte Carlo criteria run cross-validation on every replicate and take
//! tens of minutes in total on a single core.

use std::io::Write;
use std::sync::OnceLock;

use huber_rrr::admm::{self, Hyperparams, Problem};
use huber_rrr::diagnostics::{self, NoiseSpec};
use huber_rrr::prox::{self, HuberParam};
use huber_rrr::simulate::{self, Method, NoiseKind, ScenarioRun, ScenarioSpec, SimulationOptions};
use huber_rrr::tuning::{CvPlan, LambdaGrid, TauGrid};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEED: u64 = 2024;

fn report(id: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id:>2}: {verdict}  {detail}");
}

/// Two robustification constants, the four ℓ1 weights and a 20-point λ path.
fn options() -> SimulationOptions {
    SimulationOptions {
        cv: CvPlan {
            lambda_grid: LambdaGrid::Path { count: 20, min_ratio: 1e-2 },
            tau_grid: TauGrid::Scaled(vec![0.4, 1.0]),
            ..CvPlan::default()
        },
    }
}

fn run(spec: &ScenarioSpec, method: Method, replicates: usize) -> ScenarioRun {
    let run = simulate::run_scenario(spec, method, replicates, SEED, &options()).unwrap();
    assert!(run.failures.is_empty(), "failed replicates: {:?}", run.failures);
    run
}

struct Pair {
    huber: ScenarioRun,
    squared: ScenarioRun,
}

fn table2(noise: NoiseKind) -> Pair {
    let mut spec = ScenarioSpec::named("table2-rank1").unwrap();
    spec.noise = noise;
    Pair {
        huber: run(&spec, Method::Huber, 100),
        squared: run(&spec, Method::Squared, 100),
    }
}

fn table2_normal() -> &'static Pair {
    static CELL: OnceLock<Pair> = OnceLock::new();
    CELL.get_or_init(|| table2(NoiseKind::NORMAL))
}

fn table2_t() -> &'static Pair {
    static CELL: OnceLock<Pair> = OnceLock::new();
    CELL.get_or_init(|| table2(NoiseKind::STUDENT_T))
}

fn mean_frob(run: &ScenarioRun) -> f64 {
    run.summary.frob.mean
}

fn mean_tpr(run: &ScenarioRun) -> f64 {
    run.summary.tpr.unwrap().mean
}

#[test]
fn criterion_01_gaussian_frobenius_error() {
    let h = mean_frob(&table2_normal().huber);
    let pass = (2.0..=3.3).contains(&h);
    report(1, pass, format!("huber mean frob {h:.3} in [2.0, 3.3]"));
    assert!(pass);
}

#[test]
fn criterion_02_heavy_tail_ordering() {
    let pair = table2_t();
    let (h, s) = (mean_frob(&pair.huber), mean_frob(&pair.squared));
    let pass = h < 4.0 && s > 4.3;
    report(2, pass, format!("t(1.5) huber {h:.3} < 4.0, squared {s:.3} > 4.3"));
    assert!(pass);
}

#[test]
fn criterion_03_gaussian_efficiency() {
    let pair = table2_normal();
    let (h, s) = (mean_frob(&pair.huber), mean_frob(&pair.squared));
    let gap = (h - s).abs() / s;
    let pass = gap <= 0.10;
    report(3, pass, format!("huber {h:.3} vs squared {s:.3}, relative gap {gap:.3} <= 0.10"));
    assert!(pass);
}

fn support_recovery(spec: &ScenarioSpec) -> (f64, f64) {
    (mean_tpr(&run(spec, Method::Huber, 30)), mean_tpr(&run(spec, Method::Squared, 30)))
}

#[test]
fn criterion_04_high_dimensional_support() {
    let mut spec = ScenarioSpec::named("table3-rank1").unwrap();
    spec.noise = NoiseKind::STUDENT_T;
    let (h, s) = support_recovery(&spec);
    let pass = h >= 0.85 && s <= 0.20;
    report(4, pass, format!("t(1.5) huber tpr {h:.3} >= 0.85, squared tpr {s:.3} <= 0.20"));
    assert!(pass);
}

#[test]
fn criterion_05_contamination_support() {
    let spec = ScenarioSpec::named("table4-rank1").unwrap();
    let (h, s) = support_recovery(&spec);
    let pass = h >= 0.60 && s <= 0.25;
    report(5, pass, format!("10% contamination huber tpr {h:.3} >= 0.60, squared tpr {s:.3} <= 0.25"));
    assert!(pass);
}

fn huber(z: f64, tau: f64) -> f64 {
    if z.abs() <= tau {
        0.5 * z * z
    } else {
        tau * z.abs() - 0.5 * tau * tau
    }
}

fn svd_shrink(m: &DMatrix<f64>, b: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let s = svd.singular_values.map(|v| (v - b).max(0.0));
    svd.u.unwrap() * DMatrix::from_diagonal(&s) * svd.v_t.unwrap()
}

struct Instance {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    lambda: f64,
    gamma: f64,
    tau: f64,
}

impl Instance {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let (n, p, q) = (12, 5, 3);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = DMatrix::from_fn(p, q, |_, _| if rng.random_bool(0.4) { rng.random_range(-2.0..2.0) } else { 0.0 });
        let y = &x * a + DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        Instance {
            x,
            y,
            lambda: rng.random_range(0.01..0.3),
            gamma: rng.random_range(0.0..1.0),
            tau: if rng.random_bool(0.25) { f64::INFINITY } else { rng.random_range(0.3..3.0) },
        }
    }

    fn objective(&self, a: &DMatrix<f64>) -> f64 {
        let n = self.x.nrows() as f64;
        let loss: f64 = (&self.y - &self.x * a).iter().map(|&r| huber(r, self.tau)).sum::<f64>() / n;
        let nuclear = a.clone().svd(false, false).singular_values.sum();
        let l1: f64 = a.iter().map(|v| v.abs()).sum();
        loss + self.lambda * (nuclear + self.gamma * l1)
    }

    /// Three-operator splitting with the smooth loss, the nuclear norm and the
    /// entrywise ℓ1 norm as separate terms.
    fn reference(&self, iters: usize) -> DMatrix<f64> {
        let n = self.x.nrows() as f64;
        let lipschitz = self.x.clone().svd(false, false).singular_values.max().powi(2) / n;
        let step = 1.0 / lipschitz;
        let grad = |a: &DMatrix<f64>| {
            let r = (&self.y - &self.x * a).map(|v| v.clamp(-self.tau, self.tau));
            -(self.x.transpose() * r) / n
        };
        let mut z = DMatrix::zeros(self.x.ncols(), self.y.ncols());
        let mut best = z.clone();
        for _ in 0..iters {
            let xg = svd_shrink(&z, step * self.lambda);
            let v = 2.0 * &xg - &z - step * grad(&xg);
            let xh = v.map(|e| e.signum() * (e.abs() - step * self.lambda * self.gamma).max(0.0));
            z += &xh - &xg;
            best = xh;
        }
        best
    }
}

#[test]
fn criterion_06_solver_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let inst = Instance::draw(&mut rng);
        let problem = Problem::new(inst.x.clone(), inst.y.clone()).unwrap();
        let tau = if inst.tau.is_finite() { HuberParam::new(inst.tau).unwrap() } else { HuberParam::Infinite };
        let hp = Hyperparams { eps: 1e-14, max_iter: 200_000, ..Hyperparams::new(inst.lambda, inst.gamma, tau) };
        let fit = admm::fit(&problem, &hp).unwrap();
        let ours = inst.objective(&fit.a_hat);
        let reference = inst.objective(&inst.reference(20_000));
        worst = worst.max((ours - reference).abs() / reference.abs());
    }
    let pass = worst <= 1e-4;
    report(6, pass, format!("50 instances, worst relative objective gap {worst:.2e} <= 1e-4"));
    assert!(pass);
}

/// Minimises a convex scalar function by repeatedly refining a uniform grid
/// around its best point.
fn grid_minimise(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut best = lo;
    for _ in 0..40 {
        let h = (hi - lo) / 100.0;
        best = (0..=100).map(|k| lo + k as f64 * h).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        lo = best - h;
        hi = best + h;
    }
    best
}

#[test]
fn criterion_07_proximal_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut prox_gap = 0.0f64;
    for _ in 0..1000 {
        let y: f64 = 5.0 * rng.sample::<f64, _>(StandardNormal);
        let c: f64 = 5.0 * rng.sample::<f64, _>(StandardNormal);
        let n = rng.random_range(1..200usize);
        let rho = 10f64.powf(rng.random_range(-3.0..1.0));
        let tau = if rng.random_bool(0.2) { f64::INFINITY } else { rng.random_range(0.05..5.0) };
        let param = if tau.is_finite() { HuberParam::new(tau).unwrap() } else { HuberParam::Infinite };
        let g = |d: f64| huber(y - d, tau) / n as f64 + 0.5 * rho * (d - c).powi(2);
        let d = prox::prox_d_entry(y, c, param, n, rho);
        let grid = grid_minimise(g, y.min(c) - 1.0, y.max(c) + 1.0);
        prox_gap = prox_gap.max(g(d) - g(grid));
    }

    let mut sv_gap = 0.0f64;
    for _ in 0..200 {
        let (r, c) = (rng.random_range(1..8usize), rng.random_range(1..8usize));
        let m = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = rng.random_range(0.0..2.0);
        let mut expected: Vec<f64> = m.clone().svd(false, false).singular_values.iter().map(|s| (s - b).max(0.0)).collect();
        let mut got: Vec<f64> = prox::svd_soft_threshold(&m, b).unwrap().svd(false, false).singular_values.iter().copied().collect();
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (e, g) in expected.iter().zip(&got) {
            sv_gap = sv_gap.max((e - g).abs());
        }
    }
    let pass = prox_gap <= 1e-8 && sv_gap <= 1e-8;
    report(7, pass, format!("prox objective excess {prox_gap:.2e}, singular value error {sv_gap:.2e}, both <= 1e-8"));
    assert!(pass);
}

fn smooth_instance(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, tau: f64) -> (Problem, DMatrix<f64>) {
    loop {
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, q, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        let a = DMatrix::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        if (&y - &x * &a).iter().all(|r| (r.abs() - tau).abs() >= 1e-3) {
            return (Problem::new(x, y).unwrap(), a);
        }
    }
}

fn perturbed(a: &DMatrix<f64>, j: usize, k: usize, h: f64) -> DMatrix<f64> {
    let mut b = a.clone();
    b[(j, k)] += h;
    b
}

#[test]
fn criterion_08_derivative_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let tau = 1.5;
    let param = HuberParam::new(tau).unwrap();

    let mut grad_err = 0.0f64;
    for _ in 0..100 {
        let (problem, a) = smooth_instance(&mut rng, 30, 4, 3, tau);
        let loss = |m: &DMatrix<f64>| {
            (problem.y() - problem.x() * m).iter().map(|&r| huber(r, tau)).sum::<f64>() / problem.n() as f64
        };
        let g = diagnostics::loss_gradient(&problem, &a, param).unwrap();
        let fd = DMatrix::from_fn(a.nrows(), a.ncols(), |j, k| {
            let h = 1e-6 * (1.0 + a[(j, k)].abs());
            (loss(&perturbed(&a, j, k, h)) - loss(&perturbed(&a, j, k, -h))) / (2.0 * h)
        });
        grad_err = grad_err.max((&g - &fd).norm() / g.norm());
    }

    let (p, q) = (3, 2);
    let mut hess_err = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for _ in 0..100 {
        let (problem, a) = smooth_instance(&mut rng, 20, p, q, tau);
        let h = diagnostics::loss_hessian(&problem, &a, param).unwrap();
        for col in 0..p * q {
            let (j, k) = (col % p, col / p);
            let step = 1e-6 * (1.0 + a[(j, k)].abs());
            let up = diagnostics::loss_gradient(&problem, &perturbed(&a, j, k, step), param).unwrap();
            let down = diagnostics::loss_gradient(&problem, &perturbed(&a, j, k, -step), param).unwrap();
            let d = (up - down) / (2.0 * step);
            for row in 0..p * q {
                hess_err = hess_err.max((h[(row, col)] - d[(row % p, row / p)]).abs());
            }
        }
        min_eig = min_eig.min(h.symmetric_eigenvalues().min());
    }
    let pass = grad_err <= 1e-6 && hess_err <= 1e-5 && min_eig >= -1e-10;
    report(
        8,
        pass,
        format!("gradient rel err {grad_err:.2e} <= 1e-6, hessian err {hess_err:.2e} <= 1e-5, min eigenvalue {min_eig:.2e} >= 0"),
    );
    assert!(pass);
}

#[test]
fn criterion_09_sample_size_rate() {
    let small: Vec<f64> = table2_normal().huber.rows[..30].iter().map(|r| r.metrics.frob_error).collect();
    let small = small.iter().sum::<f64>() / small.len() as f64;
    let mut spec = ScenarioSpec::named("table2-rank1").unwrap();
    spec.n = 800;
    let large = mean_frob(&run(&spec, Method::Huber, 30));
    let ratio = small / large;
    let pass = (1.6..=2.5).contains(&ratio);
    report(9, pass, format!("frob n=200 {small:.3} / n=800 {large:.3} = {ratio:.3} in [1.6, 2.5]"));
    assert!(pass);
}

#[test]
fn criterion_10_truncation_concentration() {
    let (noise, kind) = NoiseSpec::student_t3();
    let replicates = 10_000;
    let mut worst = f64::NEG_INFINITY;
    let mut details = Vec::new();
    for (i, &(n, tau)) in [(100, 4.0), (100, 8.0), (400, 6.0)].iter().enumerate() {
        for &t in &[0.5, 1.0, 2.0] {
            let seed = SEED + 10 * i as u64 + (2.0 * t) as u64;
            let r = diagnostics::truncation_bound_experiment(noise, |rng| kind.sample(rng), n, tau, t, replicates, seed)
                .unwrap();
            let limit = r.nominal + 3.0 * (r.nominal / replicates as f64).sqrt();
            worst = worst.max(r.frequency - limit);
            details.push(format!("{:.4}", r.frequency));
        }
    }
    let pass = worst <= 0.0;
    report(10, pass, format!("violation frequencies [{}] within exp(-2t) + 3 SE", details.join(", ")));
    assert!(pass);
}
