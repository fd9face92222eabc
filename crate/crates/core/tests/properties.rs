use huber_rrr::admm::{self, Hyperparams, Problem};
use huber_rrr::diagnostics;
use huber_rrr::prox::HuberParam;
use huber_rrr::simulate::{self, ScenarioSpec};
use huber_rrr::tuning::{self, CvPlan, LambdaGrid, TauGrid};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn support_shrinks_along_lambda_path() {
    let (mut pairs, mut monotone) = (0usize, 0usize);
    for seed in 0..8 {
        let spec = ScenarioSpec { n: 80, p: 15, q: 6, seed, ..ScenarioSpec::named("table2-rank1").unwrap() };
        let data = simulate::generate(&spec).unwrap();
        let tau = HuberParam::new(0.8 * tuning::tau_scale(80, 15, 6)).unwrap();
        let top = tuning::lambda_upper_bound(&data.problem, 3.0, tau).unwrap();
        let sizes: Vec<usize> = tuning::log_path(top, 20, 1e-2)
            .into_iter()
            .map(|lambda| admm::fit(&data.problem, &Hyperparams::new(lambda, 3.0, tau)).unwrap().support_size())
            .collect();
        for w in sizes.windows(2) {
            pairs += 1;
            monotone += usize::from(w[0] <= w[1]);
        }
    }
    assert!(monotone as f64 >= 0.95 * pairs as f64, "{monotone} of {pairs} adjacent pairs monotone");
}

#[test]
fn permuted_responses_select_an_empty_model() {
    let spec = ScenarioSpec { seed: 3, ..ScenarioSpec::named("table2-rank1").unwrap() };
    let data = simulate::generate(&spec).unwrap();
    let mut order: Vec<usize> = (0..data.problem.n()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(4));
    let y = data.problem.y();
    let shuffled = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(order[i], j)]);
    let problem = Problem::new(data.problem.x().clone(), shuffled).unwrap();

    let plan = CvPlan {
        lambda_grid: LambdaGrid::Path { count: 20, min_ratio: 1e-2 },
        tau_grid: TauGrid::Scaled(vec![0.4, 1.0]),
        gamma_grid: vec![3.0],
        seed: 5,
        ..CvPlan::default()
    };
    let cv = tuning::cross_validate(&problem, &plan).unwrap();
    let path: Vec<f64> = cv
        .cv_table
        .iter()
        .filter(|r| r.tau == cv.best.tau && r.gamma == cv.best.gamma)
        .map(|r| r.lambda)
        .collect();
    let rank = path.iter().position(|&l| l == cv.best.lambda).unwrap();
    assert!(rank < path.len() / 4, "selected lambda is number {rank} of {}", path.len());
    let cells = problem.p() * problem.q();
    assert!(cv.refit.support_size() * 20 <= cells, "support {} of {cells}", cv.refit.support_size());
}

#[test]
fn grubbs_flags_a_single_huge_entry() {
    let mut y = DMatrix::from_element(118, 3, 1.0);
    for i in 0..118 {
        y[(i, 0)] = i as f64;
        y[(i, 2)] = (i % 7) as f64;
    }
    y[(40, 1)] = 1e6;
    let report = diagnostics::grubbs_screen(&y, 0.05).unwrap();
    assert_eq!(report.flagged(), vec![1]);
}

#[test]
fn grubbs_null_family_wise_rate() {
    let (n, q, reps) = (118, 795, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut any = 0usize;
    for _ in 0..reps {
        let y = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        any += usize::from(!diagnostics::grubbs_screen(&y, 0.05).unwrap().flagged().is_empty());
    }
    let rate = any as f64 / reps as f64;
    let limit = 0.05 + 3.0 * (0.05 * 0.95 / reps as f64).sqrt();
    assert!(rate <= limit, "family-wise flag rate {rate} > {limit}");
}
