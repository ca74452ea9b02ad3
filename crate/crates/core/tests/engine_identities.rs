use std::sync::Arc;

use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udsgd_core::communication::{
    full_average, mh_matrix, CommPattern, IntervalSchedule, StepSchedule,
};
use udsgd_core::engine::{aggregate, aggregate_average, average_row, consensus_error, run, run_ensemble, RunConfig};
use udsgd_core::graph::Graph;
use udsgd_core::linalg::Matrix;
use udsgd_core::problems::{partition, quadratic_problem, solve_optimum, synthetic_blobs, PartitionMode, Problem, SyntheticSpec};
use udsgd_core::sampling::{SamplerKind, SamplerSpec};

fn quadratic(agents: usize, points: usize, seed: u64) -> Problem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::<f64>::from_f64_rows(&[&[1.5, 0.3], &[0.3, 1.0]]);
    let centers = (0..agents)
        .map(|_| Matrix::from_fn(points, 2, |_, _| rng.random_range(-2.0f64..2.0)))
        .collect();
    quadratic_problem(a, centers).unwrap()
}

fn logistic(agents: usize) -> Problem<f64> {
    let data = synthetic_blobs::<f64>(&SyntheticSpec { n_points: 15 * agents, dim: 3, separation: 1.0, seed: 5 }).unwrap();
    let part = partition(&data, agents, PartitionMode::Even, 9).unwrap();
    Problem::logistic(&data, &part, 1.0).unwrap()
}

fn config(problem: Problem<f64>, samplers: Vec<SamplerSpec>, pattern: CommPattern<f64>, k: usize) -> RunConfig<f64> {
    let opt = solve_optimum(&problem).unwrap();
    let d = problem.dim();
    RunConfig {
        problem: Arc::new(problem),
        samplers,
        pattern,
        interval: IntervalSchedule::Constant { k },
        step: StepSchedule { gamma_star: 1.0, a: 1.0 },
        horizon: 3000,
        checkpoints: vec![1, 10, 100, 1000, 3000],
        theta_star: opt.theta,
        theta0: vec![0.5; d],
        seed: 77,
    }
}

fn mixed_samplers(n: usize, points: usize) -> Vec<SamplerSpec> {
    let g = Arc::new(Graph::random_connected(points, 0.4, 3).unwrap());
    (0..n)
        .map(|i| match i % 3 {
            0 => SamplerSpec::iid(),
            1 => SamplerSpec::walk(SamplerKind::Srw, Arc::clone(&g)),
            _ => SamplerSpec::walk(SamplerKind::Nbrw, Arc::clone(&g)),
        })
        .collect()
}

#[test]
fn explicit_average_matrix_reproduces_full_average() {
    let p = logistic(4);
    let samplers = mixed_samplers(4, 15);
    let a = run(&config(p.clone(), samplers.clone(), CommPattern::FullAverage, 2)).unwrap();
    let b = run(&config(p.clone(), samplers.clone(), CommPattern::DecentralizedFixed { w: full_average(4) }, 2)).unwrap();
    let c = run(&config(p, samplers, CommPattern::PartialParticipation { size: 4 }, 2)).unwrap();
    let times = IntervalSchedule::Constant { k: 2 }.aggregation_times(3000);
    for ((ra, rb), rc) in a.records.iter().zip(&b.records).zip(&c.records) {
        for other in [rb, rc] {
            assert!((ra.mse - other.mse).abs() <= 1e-12 * (1.0 + ra.mse), "n={}: {} vs {}", ra.n, ra.mse, other.mse);
            if times.is_aggregation(ra.n - 1) {
                assert!(other.consensus < 1e-12);
            }
        }
    }
}

#[test]
fn affine_gradients_make_the_average_independent_of_mixing() {
    // With ∇F affine in θ and constant sample weights, any doubly stochastic W leaves
    // the agent average unchanged, so patterns sharing sampler streams agree.
    let p = quadratic(5, 9, 1);
    let g = Arc::new(Graph::complete(9).unwrap());
    let samplers: Vec<SamplerSpec> = (0..5)
        .map(|i| match i % 3 {
            0 => SamplerSpec::iid(),
            1 => SamplerSpec::walk(SamplerKind::Srw, Arc::clone(&g)),
            _ => SamplerSpec::walk(SamplerKind::Nbrw, Arc::clone(&g)),
        })
        .collect();
    let ring = mh_matrix::<f64>(&Graph::ring(5).unwrap());
    let base = run(&config(p.clone(), samplers.clone(), CommPattern::FullAverage, 1)).unwrap();
    for (pattern, k) in [
        (CommPattern::DecentralizedFixed { w: ring }, 1),
        (CommPattern::FullAverage, 4),
        (CommPattern::PartialParticipation { size: 2 }, 3),
    ] {
        let other = run(&config(p.clone(), samplers.clone(), pattern, k)).unwrap();
        for (ra, rb) in base.records.iter().zip(&other.records) {
            for (x, y) in ra.theta_avg.iter().zip(&rb.theta_avg) {
                assert!((x - y).abs() < 1e-10, "n={}: {x} vs {y}", ra.n);
            }
        }
    }
}

#[test]
fn ensembles_do_not_depend_on_the_thread_count() {
    let cfg = config(logistic(4), mixed_samplers(4, 15), CommPattern::PartialParticipation { size: 2 }, 2);
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let a = one.install(|| run_ensemble(&cfg, 6)).unwrap();
    let b = four.install(|| run_ensemble(&cfg, 6)).unwrap();
    assert_eq!(a.trials, b.trials);
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(x.mse.mean.to_bits(), y.mse.mean.to_bits());
        assert_eq!(x.scaled_cov, y.scaled_cov);
    }
}

#[test]
fn consensus_growth_between_aggregations_is_bounded_by_the_steps() {
    // After averaging, K local steps move each agent by at most Σγ‖∇‖, so the
    // consensus error is at most 2√N times that sum.
    let p = quadratic(3, 6, 4);
    let mut cfg = config(p, vec![SamplerSpec::iid(); 3], CommPattern::FullAverage, 5);
    cfg.checkpoints = (1..=200).collect();
    cfg.horizon = 200;
    let traj = run(&cfg).unwrap();
    let times = cfg.interval.aggregation_times(cfg.horizon);
    for r in &traj.records {
        let tick = r.n - 1;
        if times.is_aggregation(tick) {
            assert_eq!(r.consensus, 0.0, "tick {tick}");
        }
    }
    // Gradients of this quadratic stay below a crude bound once iterates are within 10 of the centers.
    let gmax = 1.8 * 10.0 * 2f64.sqrt();
    let mut round_start = 0usize;
    for r in &traj.records {
        let tick = r.n - 1;
        if times.is_aggregation(tick) {
            round_start = tick + 1;
            continue;
        }
        let steps: f64 = (round_start..=tick).map(|t| cfg.step.step_size(t + 1)).sum();
        assert!(r.consensus <= 2.0 * 3f64.sqrt() * steps * gmax, "tick {tick}: {}", r.consensus);
    }
}

fn random_doubly_stochastic(n: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    // Convex combination of permutation matrices.
    let mut w = Matrix::<f64>::zeros(n, n);
    let mut left = 1.0;
    for k in 0..4 {
        let weight = if k == 3 { left } else { left * rng.random_range(0.1..0.9) };
        left -= weight;
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        for (i, &j) in perm.iter().enumerate() {
            w[(i, j)] += weight;
        }
    }
    w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_preserves_the_average(n in 2usize..9, d in 1usize..5, seed in 0u64..u64::MAX) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Matrix::from_fn(n, d, |_, _| rng.random_range(-5.0f64..5.0));
        let before = average_row(&theta);
        let w = random_doubly_stochastic(n, &mut rng);
        aggregate(&mut theta, &w).unwrap();
        for (a, b) in before.iter().zip(average_row(&theta)) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
        aggregate_average(&mut theta);
        prop_assert!(consensus_error(&theta) == 0.0);
        for (a, b) in before.iter().zip(average_row(&theta)) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
