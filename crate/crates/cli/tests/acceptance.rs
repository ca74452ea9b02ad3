//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line on
//! stderr (written directly, so it shows even when output is captured) and then
//! asserts the same verdict.

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udsgd_core::clt::{self, decay_horizon, integral_check, loewner_verdict, lyapunov_residual, lyapunov_solve, CovarianceReport};
use udsgd_core::communication::{mh_matrix, second_eigen_modulus, verify_contraction, CommPattern, StepSchedule};
use udsgd_core::engine::Summary;
use udsgd_core::graph::Graph;
use udsgd_core::linalg::Matrix;
use udsgd_core::markov::{
    asymptotic_covariance, asymptotic_covariance_mc, asymptotic_covariance_series, stationary, FunctionTable, LoewnerOrder,
    TransitionMatrix,
};
use udsgd_core::problems::{partition, solve_optimum, synthetic_blobs, PartitionMode, Problem, SyntheticSpec};
use udsgd_core::sampling::{SamplerKind, SamplerSpec};
use udsgd_core::stats::{median, ols, t_quantile_975};
use udsgd_lab::build::Setup;
use udsgd_lab::experiments::{covariance_report, non_contracting_patterns, paired_mse_difference};
use udsgd_lab::{parse_config, run_experiment, ExperimentConfig, Outcome, VariantSummary};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {id:>2} {name}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn run_in(cfg: &ExperimentConfig, dir: &Path) -> Outcome {
    run_experiment(cfg, dir).unwrap_or_else(|e| panic!("experiment failed: {e}"))
}

fn variant<'a>(o: &'a Outcome, name: &str) -> &'a VariantSummary {
    o.variant(name).unwrap_or_else(|| panic!("variant {name} missing"))
}

/// `b − a` over matched trials, i.e. how much larger `b` is.
fn gap(o: &Outcome, low: &str, high: &str) -> Summary {
    paired_mse_difference(variant(o, high), variant(o, low))
}

// Criterion 1

fn random_ergodic_chain(n: usize, rng: &mut ChaCha8Rng) -> TransitionMatrix<f64> {
    // Sparse random support containing a Hamiltonian cycle and one self-loop.
    let mut p = Matrix::<f64>::zeros(n, n);
    for i in 0..n {
        p[(i, (i + 1) % n)] = rng.random_range(0.2..1.0);
        for j in 0..n {
            if rng.random_bool(0.4) {
                p[(i, j)] += rng.random_range(0.0..1.0);
            }
        }
    }
    p[(0, 0)] += 0.3;
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        p.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    TransitionMatrix::new(p).unwrap()
}

#[test]
fn c01_covariance_oracles_agree() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let chains = 24;
    let mut worst_series = 0.0f64;
    let mut worst_z = 0.0f64;
    let mut outside = 0usize;
    let mut entries = 0usize;
    for c in 0..chains {
        let n = rng.random_range(2..=10);
        let d = rng.random_range(1..=3);
        let p = random_ergodic_chain(n, &mut rng);
        p.validate_ergodic().unwrap();
        let pi = stationary(&p).unwrap();
        let g = FunctionTable::new(Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0f64..1.0))).unwrap();
        let closed = asymptotic_covariance(&p, &pi, &g).unwrap();
        let series = asymptotic_covariance_series(&p, &pi, &g, 20_000).unwrap();
        worst_series = worst_series.max((&closed - &series.covariance).max_abs());
        let mc = asymptotic_covariance_mc(&p, &g, 100_000, 100, 1000 + c as u64).unwrap();
        for a in 0..d {
            for b in a..d {
                entries += 1;
                let z = (mc.covariance[(a, b)] - closed[(a, b)]).abs() / mc.std_error[(a, b)].max(1e-300);
                worst_z = worst_z.max(z);
                if z > 3.0 {
                    outside += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_series <= 1e-6 && outside == 0 && secs < 60.0;
    verdict(
        1,
        "covariance oracles",
        pass,
        &format!(
            "{chains} chains; max |closed-series| = {worst_series:.2e}; max |MC-closed|/se = {worst_z:.2} over {entries} entries ({outside} beyond 3 se); {secs:.1}s"
        ),
    );
}

// Criterion 2

#[test]
fn c02_lyapunov_solver_matches_quadrature() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut worst_residual = 0.0f64;
    let mut worst_gap = 0.0f64;
    for k in 0..50 {
        let d = 1 + k % 20;
        let b = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0f64..1.0));
        let sym = b.matmul(&b.transpose()).scale(1.0 / d as f64);
        let skew = {
            let s = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0f64..1.0));
            (&s - &s.transpose()).scale(0.5)
        };
        let m = &(&(-&sym) - &Matrix::identity(d).scale(rng.random_range(0.2..1.0))) + &skew;
        let c = Matrix::from_fn(d, d, |_, _| rng.random_range(-1.0f64..1.0));
        let u = c.matmul(&c.transpose());
        let v = lyapunov_solve(&m, &u).unwrap();
        let rel = lyapunov_residual(&m, &v, &u) / u.frobenius_norm().max(1.0);
        worst_residual = worst_residual.max(rel);
        let t_end = decay_horizon(&m, 1e-8);
        let numeric = integral_check(&m, &u, t_end, 1e-4);
        worst_gap = worst_gap.max((&numeric - &v).max_abs());
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_residual <= 1e-9 && worst_gap <= 1e-6;
    verdict(
        2,
        "lyapunov correctness",
        pass,
        &format!("50 instances, d<=20; max residual/max(1,|U|) = {worst_residual:.2e}; max |V-quadrature| = {worst_gap:.2e}; {secs:.1}s"),
    );
}

// Criterion 3

#[test]
fn c03_clt_covariance_matches_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(
        r#"
experiment = "clt_compare"
seed = 303
horizon = 200000
trials = 300
checkpoints = { count = 12 }

[problem]
kind = "quadratic"
a = [[1.5, 0.2], [0.2, 1.2]]
points_per_agent = 20

[[groups]]
count = 2
sampler = { kind = "iid" }

[[groups]]
count = 2
sampler = { kind = "srw", graph = { kind = "random_connected", edge_prob = 0.25 } }

[step]
gamma_star = 1.0
a = 1.0
"#,
    )
    .unwrap();
    let start = Instant::now();
    let out = run_in(&cfg, dir.path());
    let v = variant(&out, "base");
    let predicted = v.trace_v.unwrap();
    let rel = (v.empirical_trace - predicted) / predicted;
    let secs = start.elapsed().as_secs_f64();
    verdict(
        3,
        "CLT match",
        rel.abs() <= 0.2,
        &format!(
            "n={} R=300: empirical Tr = {:.4} (se {:.4}), Tr(V) = {predicted:.4}, rel err = {rel:+.3}; {secs:.1}s",
            v.n, v.empirical_trace, v.empirical_trace_se
        ),
    );
}

// Criterion 4

#[test]
fn c04_linear_speedup() {
    let text = r#"
experiment = "speedup_sweep"
seed = 404
horizon = 50000
trials = 200
agents = 4
sampler = { kind = "iid" }
checkpoints = { count = 8 }

[problem]
kind = "quadratic"
a = [[1.5, 0.2], [0.2, 1.2]]
points_per_agent = 20
heterogeneity = 0.5

[sweep]
factors = [1, 2]
"#;
    let cfg = parse_config(text).unwrap();
    let base = Setup::<f64>::build(&cfg, &cfg.agent_groups(), &cfg.pattern, &cfg.schedule).unwrap();
    let mut exact_worst = 0.0f64;
    let tr1 = covariance_report(&cfg, &base).unwrap().unwrap().trace_v;
    for k in [2usize, 3, 4] {
        let trk = covariance_report(&cfg, &base.duplicated(k).unwrap()).unwrap().unwrap().trace_v;
        exact_worst = exact_worst.max(((k as f64) * trk - tr1).abs() / tr1);
    }
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(&cfg, dir.path());
    let (m4, m8) = (variant(&out, "x1"), variant(&out, "x2"));
    let ratio = m4.mse.mean / m8.mse.mean;
    let pass = exact_worst <= 1e-12 && (1.4..=2.6).contains(&ratio);
    verdict(
        4,
        "linear speedup",
        pass,
        &format!(
            "closed form max |k Tr(V_k) - Tr(V_1)|/Tr(V_1) = {exact_worst:.1e}; MSE(N=4)/MSE(N=8) = {:.3e}/{:.3e} = {ratio:.3}",
            m4.mse.mean, m8.mse.mean
        ),
    );
}

// Criterion 5

#[test]
fn c05_nbrw_dominates_srw() {
    let data = synthetic_blobs::<f64>(&SyntheticSpec { n_points: 36, dim: 3, separation: 1.0, seed: 55 }).unwrap();
    let part = partition(&data, 3, PartitionMode::Even, 55).unwrap();
    let problem = Problem::logistic(&data, &part, 1.0).unwrap();
    let opt = solve_optimum(&problem).unwrap();
    // Cycle-rich graph: first seed giving minimum degree two or more.
    let graph = (0u64..)
        .map(|s| Graph::random_connected(12, 0.35, s).unwrap())
        .find(|g| g.degrees().iter().all(|&d| d >= 2))
        .unwrap();
    let graph = Arc::new(graph);
    let srw = SamplerSpec::walk(SamplerKind::Srw, Arc::clone(&graph));
    let nbrw = SamplerSpec::walk(SamplerKind::Nbrw, Arc::clone(&graph));
    let mut worst_min = f64::INFINITY;
    let mut strict = true;
    for i in 0..3 {
        let u_srw = clt::agent_u(&problem, i, &srw, &opt.theta).unwrap();
        let u_nbrw = clt::agent_u(&problem, i, &nbrw, &opt.theta).unwrap();
        let v = loewner_verdict(&u_srw, &u_nbrw, 1e-8).unwrap();
        worst_min = worst_min.min(v.min_eigenvalue);
        strict &= v.order == LoewnerOrder::ADominates && v.max_eigenvalue > 1e-8;
    }
    let step = StepSchedule { gamma_star: 1.0, a: 1.0 };
    let sys_srw = CovarianceReport::closed_form(&problem, &vec![srw; 3], &opt.theta, opt.hessian.clone(), step).unwrap();
    let sys_nbrw = CovarianceReport::closed_form(&problem, &vec![nbrw; 3], &opt.theta, opt.hessian.clone(), step).unwrap();
    let sys = loewner_verdict(&sys_srw.v, &sys_nbrw.v, 1e-8).unwrap();
    let pass = worst_min >= -1e-8 && strict && sys.order == LoewnerOrder::ADominates && sys.min_eigenvalue >= -1e-8;
    verdict(
        5,
        "efficiency ordering",
        pass,
        &format!(
            "per-agent min eig(Σ_SRW − Σ_NBRW) = {worst_min:.2e}; V: min eig(V_SRW − V_NBRW) = {:.2e}, Tr {:.4e} vs {:.4e}",
            sys.min_eigenvalue, sys_srw.trace_v, sys_nbrw.trace_v
        ),
    );
}

// Criteria 6 and 7 share one sweep.

fn sampling_sweep() -> &'static Outcome {
    static OUT: OnceLock<Outcome> = OnceLock::new();
    OUT.get_or_init(|| {
        let walker = |kind: &str| format!(r#"{{ count = 5, sampler = {{ kind = "{kind}", graph = {{ kind = "random_connected", edge_prob = 0.15 }} }} }}"#);
        let text = format!(
            r#"
experiment = "sampling_sweep"
seed = 2024
horizon = 100000
trials = 50
checkpoints = {{ count = 10 }}

[problem]
kind = "logistic"
data = {{ source = "synthetic", n_points = 200, dim = 3 }}

[analysis]
closed_form_only = true

[[groups]]
count = 5
sampler = {{ kind = "shuffle" }}
[[groups]]
count = 5
sampler = {{ kind = "srw", graph = {{ kind = "random_connected", edge_prob = 0.15 }} }}

[[sweep.variants]]
name = "shuffle_srw"
[[sweep.variants]]
name = "shuffle_nbrw"
groups = [ {{ count = 5, sampler = {{ kind = "shuffle" }} }}, {nbrw} ]
[[sweep.variants]]
name = "shuffle_srrw"
groups = [ {{ count = 5, sampler = {{ kind = "shuffle" }} }}, {srrw} ]
[[sweep.variants]]
name = "iid_srw"
groups = [ {{ count = 5, sampler = {{ kind = "iid" }} }}, {srw} ]
[[sweep.variants]]
name = "shuffle_3srw_2srrw"
groups = [
  {{ count = 5, sampler = {{ kind = "shuffle" }} }},
  {{ count = 3, sampler = {{ kind = "srw", graph = {{ kind = "random_connected", edge_prob = 0.15 }} }} }},
  {{ count = 2, sampler = {{ kind = "srrw", alpha = 20.0, graph = {{ kind = "random_connected", edge_prob = 0.15 }} }} }},
]
"#,
            nbrw = walker("nbrw"),
            srrw = walker("srrw").replace(r#"kind = "srrw""#, r#"kind = "srrw", alpha = 20.0"#),
            srw = walker("srw"),
        );
        let cfg = parse_config(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_in(&cfg, dir.path())
    })
}

fn separated(g: &Summary) -> bool {
    g.mean > g.std_error
}

#[test]
fn c06_sampling_strategy_ordering() {
    let start = Instant::now();
    let o = sampling_sweep();
    let nbrw_srrw = gap(o, "shuffle_srrw", "shuffle_nbrw");
    let srw_nbrw = gap(o, "shuffle_nbrw", "shuffle_srw");
    let iid_shuffle = gap(o, "shuffle_srw", "iid_srw");
    let pass = separated(&nbrw_srrw) && separated(&srw_nbrw) && separated(&iid_shuffle);
    let m = |n: &str| variant(o, n).mse.mean;
    verdict(
        6,
        "sampling-strategy MSE ordering",
        pass,
        &format!(
            "terminal MSE srrw {:.3e} < nbrw {:.3e} < srw {:.3e}; shuffle {:.3e} < iid {:.3e}; paired gaps/se: {:.1}, {:.1}, {:.1}; {:.1}s",
            m("shuffle_srrw"),
            m("shuffle_nbrw"),
            m("shuffle_srw"),
            m("shuffle_srw"),
            m("iid_srw"),
            nbrw_srrw.mean / nbrw_srrw.std_error,
            srw_nbrw.mean / srw_nbrw.std_error,
            iid_shuffle.mean / iid_shuffle.std_error,
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn c07_partial_upgrade_lies_between() {
    let o = sampling_sweep();
    let above = gap(o, "shuffle_srrw", "shuffle_3srw_2srrw");
    let below = gap(o, "shuffle_3srw_2srrw", "shuffle_srw");
    let m = |n: &str| variant(o, n).mse.mean;
    verdict(
        7,
        "partial upgrade",
        separated(&above) && separated(&below),
        &format!(
            "all-SRRW {:.3e} < 2-of-5 SRRW {:.3e} < all-SRW {:.3e}; paired gaps/se: {:.1}, {:.1}",
            m("shuffle_srrw"),
            m("shuffle_3srw_2srrw"),
            m("shuffle_srw"),
            above.mean / above.std_error,
            below.mean / below.std_error
        ),
    );
}

// Criteria 8 and 9 share one sweep.

fn network_sweep() -> &'static Outcome {
    static OUT: OnceLock<Outcome> = OnceLock::new();
    OUT.get_or_init(|| {
        let cfg = parse_config(
            r#"
experiment = "network_independence"
seed = 808
horizon = 100000
trials = 50
checkpoints = { count = 40, spacing = "linear" }

[problem]
kind = "logistic"
data = { source = "synthetic", n_points = 200, dim = 3 }
partition = { mode = "dirichlet", alpha = 0.5 }

[[groups]]
count = 5
sampler = { kind = "iid" }
[[groups]]
count = 5
sampler = { kind = "srw", graph = { kind = "random_connected", edge_prob = 0.3 } }

[[sweep.variants]]
name = "centralized_k1"
[[sweep.variants]]
name = "mh_decentralized_k1"
pattern = { kind = "decentralized_fixed", topology = { kind = "random_connected", edge_prob = 0.4 } }
[[sweep.variants]]
name = "local_sgd_k5"
schedule = { kind = "constant", K = 5 }
[[sweep.variants]]
name = "mh_decentralized_k4"
pattern = { kind = "decentralized_fixed", topology = { kind = "random_connected", edge_prob = 0.4 } }
schedule = { kind = "constant", K = 4 }
"#,
        )
        .unwrap();
        // An even ring under MH weights has eigenvalue −1, so insist on a contracting topology.
        assert_eq!(non_contracting_patterns(&cfg, 1).unwrap(), Vec::<String>::new());
        let dir = tempfile::tempdir().unwrap();
        run_in(&cfg, dir.path())
    })
}

#[test]
fn c08_network_independence() {
    let start = Instant::now();
    let o = network_sweep();
    let base = variant(o, "centralized_k1");
    let mut ratios = Vec::new();
    let mut same_v = true;
    for name in ["mh_decentralized_k1", "local_sgd_k5"] {
        let v = variant(o, name);
        ratios.push((name, (v.mse.mean / v.gamma) / (base.mse.mean / base.gamma)));
        same_v &= v.trace_v == base.trace_v && v.trace_v_prime == base.trace_v_prime;
    }
    // Also compare the full matrices, not just traces.
    let cfg_text = |pattern: &str| {
        format!(
            "experiment = \"ensemble\"\nseed = 808\nagents = 3\nsampler = {{ kind = \"iid\" }}\n{pattern}\n[problem]\nkind = \"logistic\"\ndata = {{ source = \"synthetic\", n_points = 30, dim = 2 }}\n"
        )
    };
    let reports: Vec<_> = ["", "pattern = { kind = \"decentralized_fixed\", topology = { kind = \"complete\" } }"]
        .iter()
        .map(|p| {
            let cfg = parse_config(&cfg_text(p)).unwrap();
            let setup = Setup::<f64>::build(&cfg, &cfg.agent_groups(), &cfg.pattern, &cfg.schedule).unwrap();
            covariance_report(&cfg, &setup).unwrap().unwrap()
        })
        .collect();
    same_v &= reports[0].v == reports[1].v;
    let pass = same_v && ratios.iter().all(|(_, r)| (0.8..=1.25).contains(r));
    let listed: Vec<String> = ratios.iter().map(|(n, r)| format!("{n}/centralized = {r:.4}")).collect();
    verdict(
        8,
        "asymptotic network independence",
        pass,
        &format!("{}; closed-form V identical across patterns: {same_v}; {:.1}s", listed.join(", "), start.elapsed().as_secs_f64()),
    );
}

#[test]
fn c09_scaled_consensus_is_bounded() {
    let o = network_sweep();
    let mut pass = true;
    let mut details = Vec::new();
    // The centralized K = 1 run averages after every step, so its consensus is identically zero.
    assert!(variant(o, "centralized_k1").scaled_consensus_series.iter().all(|&(_, c)| c == 0.0));
    // Checkpoints of one run are autocorrelated, so the slope CI comes from
    // per-trial fits, which are independent across trials.
    for name in ["mh_decentralized_k1", "local_sgd_k5", "mh_decentralized_k4"] {
        let v = variant(o, name);
        let horizon = v.scaled_consensus_series.last().unwrap().0;
        let tail: Vec<usize> = (0..v.scaled_consensus_series.len()).filter(|&k| 2 * v.scaled_consensus_series[k].0 >= horizon).collect();
        let xs: Vec<f64> = tail.iter().map(|&k| v.scaled_consensus_series[k].0 as f64).collect();
        let slopes: Vec<f64> = v
            .scaled_consensus_trials
            .iter()
            .map(|t| ols(&xs, &tail.iter().map(|&k| t[k]).collect::<Vec<_>>()).unwrap().slope)
            .collect();
        let s = Summary::of(&slopes);
        let half = t_quantile_975(slopes.len() - 1) * s.std_error;
        let ci = (s.mean - half, s.mean + half);
        let ys: Vec<f64> = tail.iter().map(|&k| v.scaled_consensus_series[k].1).collect();
        let max = ys.iter().cloned().fold(f64::MIN, f64::max);
        let med = median(&ys);
        let ok = ci.0 <= 0.0 && med > 0.0 && max < 10.0 * med;
        pass &= ok;
        details.push(format!("{name}: slope CI [{:.2e}, {:.2e}], max/median = {:.2}", ci.0, ci.1, max / med));
    }
    verdict(9, "consensus rate", pass, &details.join("; "));
}

// Criterion 10

/// `‖E[WᵀW] − J‖₂` for partial participation, by enumerating every pair of
/// consecutive selections (each uniform over subsets of the given size).
fn exhaustive_contraction(n: usize, size: usize) -> f64 {
    fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
        (0u32..1 << n).filter(|m| m.count_ones() as usize == size).map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect()).collect()
    }
    let all = subsets(n, size);
    let mut acc = vec![vec![0.0f64; n]; n];
    for s in &all {
        for s_next in &all {
            // Block average over s, then route rows: entering agents swap with leaving ones.
            let mut block = vec![vec![0.0f64; n]; n];
            for i in 0..n {
                for j in 0..n {
                    block[i][j] = match (s.contains(&i), s.contains(&j)) {
                        (true, true) => 1.0 / size as f64,
                        (false, false) if i == j => 1.0,
                        _ => 0.0,
                    };
                }
            }
            let entering: Vec<usize> = s_next.iter().copied().filter(|i| !s.contains(i)).collect();
            let leaving: Vec<usize> = s.iter().copied().filter(|i| !s_next.contains(i)).collect();
            let mut sigma: Vec<usize> = (0..n).collect();
            for (&a, &b) in entering.iter().zip(&leaving) {
                sigma.swap(a, b);
            }
            let w: Vec<Vec<f64>> = (0..n).map(|i| block[sigma[i]].clone()).collect();
            for i in 0..n {
                for j in 0..n {
                    acc[i][j] += (0..n).map(|k| w[k][i] * w[k][j]).sum::<f64>();
                }
            }
        }
    }
    let pairs = (all.len() * all.len()) as f64;
    let e = Matrix::<f64>::from_fn(n, n, |i, j| acc[i][j] / pairs - 1.0 / n as f64);
    e.symmetric_spectral_norm()
}

#[test]
fn c10_contraction_diagnostics() {
    let exact = exhaustive_contraction(3, 2);
    let mc = verify_contraction(&CommPattern::<f64>::PartialParticipation { size: 2 }, 3, 10_000, 1010).unwrap();
    let mut lambdas = Vec::new();
    let graphs = [
        ("path5", Graph::path(5).unwrap()),
        ("ring7", Graph::ring(7).unwrap()),
        ("complete4", Graph::complete(4).unwrap()),
        ("star6", Graph::from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]).unwrap()),
        ("random12", Graph::random_connected(12, 0.3, 10).unwrap()),
        ("random30", Graph::random_connected(30, 0.1, 11).unwrap()),
    ];
    for (name, g) in &graphs {
        let l2 = second_eigen_modulus(&mh_matrix::<f64>(g));
        lambdas.push((name, l2 * l2));
    }
    // Negative control: MH on an even ring has no self-loops and eigenvalue −1.
    let even_ring = second_eigen_modulus(&mh_matrix::<f64>(&Graph::ring(6).unwrap())).powi(2);
    let margin = 1.0 - 1e-12;
    let pass = (exact - mc.norm).abs() <= 0.02
        && exact < margin
        && lambdas.iter().all(|&(_, l)| l < margin)
        && even_ring >= margin
        && !verify_contraction(&CommPattern::DecentralizedFixed { w: mh_matrix::<f64>(&Graph::ring(6).unwrap()) }, 6, 1, 0)
            .unwrap()
            .contracting;
    let mut listed: Vec<String> = lambdas.iter().map(|(n, l)| format!("{n} {l:.4}")).collect();
    listed.push(format!("control ring6 {even_ring:.4} flagged"));
    verdict(
        10,
        "contraction diagnostics",
        pass,
        &format!("N=3, |S|=2: exhaustive {exact:.4}, Monte Carlo {:.4} (R=10^4); MH λ₂²: {}", mc.norm, listed.join(", ")),
    );
}

// Criterion 11

const DETERMINISM_CONFIGS: [&str; 6] = [
    r#"
experiment = "single_run"
seed = 1
horizon = 4000
agents = 3
sampler = { kind = "srrw", graph = { kind = "random_connected", edge_prob = 0.4 } }
pattern = { kind = "partial_participation", participation = 2 }
[problem]
kind = "logistic"
data = { source = "synthetic", n_points = 30, dim = 2 }
"#,
    r#"
experiment = "ensemble"
seed = 2
horizon = 3000
trials = 7
agents = 4
sampler = { kind = "nbrw", graph = { kind = "complete" } }
pattern = { kind = "decentralized_time_varying", topologies = [ { kind = "ring" }, { kind = "path" } ] }
schedule = { kind = "log_growth" }
[problem]
kind = "quadratic"
a = [[1.0, 0.1], [0.1, 2.0]]
"#,
    r#"
experiment = "clt_compare"
seed = 3
horizon = 3000
trials = 6
agents = 2
sampler = { kind = "shuffle" }
[analysis]
mc_horizon = 500
mc_trials = 10
[problem]
kind = "logistic"
data = { source = "synthetic", n_points = 20, dim = 3 }
"#,
    r#"
experiment = "speedup_sweep"
seed = 4
horizon = 2000
trials = 5
agents = 2
sampler = { kind = "iid" }
pattern = { kind = "partial_participation", participation = 1 }
[sweep]
factors = [1, 3]
[problem]
kind = "quadratic"
a = [[2.0]]
"#,
    r#"
experiment = "network_independence"
seed = 5
horizon = 2000
trials = 4
agents = 4
sampler = { kind = "srw", graph = { kind = "complete" } }
[problem]
kind = "logistic"
data = { source = "synthetic", n_points = 24, dim = 2 }
[[sweep.variants]]
name = "a"
[[sweep.variants]]
name = "b"
pattern = { kind = "decentralized_fixed", topology = { kind = "ring" } }
schedule = { kind = "loglog_growth" }
"#,
    r#"
experiment = "sampling_sweep"
seed = 6
horizon = 2000
trials = 4
agents = 2
sampler = { kind = "iid" }
precision = "f32"
[problem]
kind = "logistic"
data = { source = "synthetic", n_points = 20, dim = 2 }
[[sweep.variants]]
name = "iid"
[[sweep.variants]]
name = "walks"
groups = [ { count = 1, sampler = { kind = "srw", graph = { kind = "complete" } } }, { count = 1, sampler = { kind = "nbrw", graph = { kind = "complete" } } } ]
"#,
];

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn c11_reruns_are_byte_identical() {
    let root = tempfile::tempdir().unwrap();
    let mut compared = 0usize;
    let mut mismatches = Vec::new();
    for (k, text) in DETERMINISM_CONFIGS.iter().enumerate() {
        let cfg = parse_config(text).unwrap();
        let mut runs = Vec::new();
        for (tag, threads) in [("a", 1usize), ("b", 4), ("c", 2)] {
            let dir = root.path().join(format!("{k}{tag}"));
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_in(&cfg, &dir));
            runs.push(dir_bytes(&dir));
        }
        for other in &runs[1..] {
            compared += other.len();
            if *other != runs[0] {
                mismatches.push(format!("{:?}", cfg.experiment));
            }
        }
    }
    verdict(
        11,
        "determinism",
        mismatches.is_empty(),
        &format!("6 experiment kinds x threads {{1, 4, 2}}: {compared} file comparisons, mismatches: {mismatches:?}"),
    );
}
