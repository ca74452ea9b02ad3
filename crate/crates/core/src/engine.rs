//! The UD-SGD loop: reweighted local steps, scheduled aggregation, metrics.

use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::communication::{check_schedule_compatibility, CommPattern, Communicator, IntervalSchedule, Mixing, StepSchedule};
use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Matrix};
use crate::problems::Problem;
use crate::rng::{self, tag};
use crate::sampling::{Sampler, SamplerSpec};
use crate::scalar::Scalar;
use crate::stats;

/// Any agent parameter with norm above this aborts the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct RunConfig<T> {
    pub problem: Arc<Problem<T>>,
    /// One sampler per agent.
    pub samplers: Vec<SamplerSpec>,
    pub pattern: CommPattern<T>,
    pub interval: IntervalSchedule,
    pub step: StepSchedule,
    pub horizon: usize,
    /// Iteration counts at which metrics are recorded, strictly increasing in `1..=horizon`.
    pub checkpoints: Vec<usize>,
    pub theta_star: Vec<T>,
    /// Common starting point of every agent.
    pub theta0: Vec<T>,
    pub seed: u64,
}

impl<T: Scalar> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let n = self.problem.num_agents();
        let d = self.problem.dim();
        if self.samplers.len() != n {
            return Err(Error::SizeMismatch { expected: n, found: self.samplers.len() });
        }
        for (i, s) in self.samplers.iter().enumerate() {
            s.validate_ergodic(self.problem.agent_size(i))?;
        }
        self.pattern.validate(n)?;
        check_schedule_compatibility(&self.step, &self.interval)?;
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        if self.checkpoints.is_empty()
            || self.checkpoints.windows(2).any(|w| w[0] >= w[1])
            || self.checkpoints[0] == 0
            || *self.checkpoints.last().expect("non-empty") > self.horizon
        {
            return Err(Error::InvalidArgument("checkpoints must be strictly increasing within 1..=horizon".into()));
        }
        for (name, v) in [("theta_star", &self.theta_star), ("theta0", &self.theta0)] {
            if v.len() != d {
                return Err(Error::DimensionMismatch(format!("{name} has length {}, problem dimension is {d}", v.len())));
            }
        }
        Ok(())
    }

    /// The same configuration reseeded for ensemble trial `r`.
    pub fn for_trial(&self, r: usize) -> Self {
        Self { seed: rng::derive_seed(self.seed, &[tag::TRIAL, r as u64]), ..self.clone() }
    }
}

/// `count` checkpoints evenly spaced up to `horizon` (always including it).
pub fn linear_checkpoints(horizon: usize, count: usize) -> Vec<usize> {
    let count = count.clamp(1, horizon.max(1));
    let mut v: Vec<usize> = (1..=count).map(|k| (k * horizon).div_ceil(count)).collect();
    v.dedup();
    v
}

/// Roughly geometric checkpoints from 1 to `horizon`.
pub fn geometric_checkpoints(horizon: usize, count: usize) -> Vec<usize> {
    let count = count.max(2);
    let ratio = (horizon as f64).powf(1.0 / (count - 1) as f64);
    let mut v: Vec<usize> = (0..count).map(|k| (ratio.powi(k as i32).round() as usize).clamp(1, horizon)).collect();
    v.push(horizon);
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record<T> {
    pub n: usize,
    /// `‖θ_n − θ*‖²` for the agent average `θ_n`.
    pub mse: T,
    /// `‖θ̄_n − θ*‖²` for the running Polyak–Ruppert average.
    pub pr_mse: T,
    /// `‖Θ_n − 1θ_nᵀ‖_F`.
    pub consensus: T,
    pub gamma: T,
    pub theta_avg: Vec<T>,
    pub pr_avg: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub records: Vec<Record<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn last(&self) -> &Record<T> {
        self.records.last().expect("trajectories have at least one record")
    }
}

/// One reweighted local step `θ ← θ − γ·w(X)·∇F_i(θ, X)`. Returns the sampled index.
pub fn local_step<T: Scalar>(
    problem: &Problem<T>,
    agent: usize,
    theta: &mut [T],
    sampler: &mut Sampler,
    weights: &[T],
    gamma: T,
    scratch: &mut [T],
) -> usize {
    let x = sampler.next();
    scratch.iter_mut().for_each(|g| *g = T::zero());
    problem.add_sample_grad(agent, theta, x, weights[x], scratch);
    for (t, &g) in theta.iter_mut().zip(scratch.iter()) {
        *t = *t - gamma * g;
    }
    x
}

/// `Θ ← (W ⊗ I)Θ`: row `i` becomes `Σ_j W(i,j)·row_j`.
pub fn aggregate<T: Scalar>(theta: &mut Matrix<T>, w: &Matrix<T>) -> Result<()> {
    if !w.is_square() || w.nrows() != theta.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "communication matrix is {}x{}, parameters have {} rows",
            w.nrows(),
            w.ncols(),
            theta.nrows()
        )));
    }
    *theta = w.matmul(theta);
    Ok(())
}

/// `Θ ← (J ⊗ I)Θ`.
pub fn aggregate_average<T: Scalar>(theta: &mut Matrix<T>) {
    let avg = average_row(theta);
    for i in 0..theta.nrows() {
        theta.row_mut(i).copy_from_slice(&avg);
    }
}

pub fn average_row<T: Scalar>(theta: &Matrix<T>) -> Vec<T> {
    let n = T::of_usize(theta.nrows());
    let mut avg = vec![T::zero(); theta.ncols()];
    for i in 0..theta.nrows() {
        for (a, &v) in avg.iter_mut().zip(theta.row(i)) {
            *a = *a + v;
        }
    }
    avg.iter_mut().for_each(|a| *a = *a / n);
    avg
}

/// `‖Θ − 1θ̄ᵀ‖_F`, evaluated as `√((1/N)Σ_{i<j}‖θ_i − θ_j‖²)` so that identical
/// rows give exactly zero.
pub fn consensus_error<T: Scalar>(theta: &Matrix<T>) -> T {
    let n = theta.nrows();
    let mut total = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            total = total + sq_dist(theta.row(i), theta.row(j));
        }
    }
    (total / T::of_usize(n)).sqrt()
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

pub fn run<T: Scalar>(cfg: &RunConfig<T>) -> Result<Trajectory<T>> {
    cfg.validate()?;
    let problem = &*cfg.problem;
    let n_agents = problem.num_agents();
    let d = problem.dim();
    let mut samplers = (0..n_agents)
        .map(|i| {
            let seed = rng::derive_seed(cfg.seed, &[tag::AGENT_SAMPLER, i as u64]);
            Sampler::new(&cfg.samplers[i], problem.agent_size(i), seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<Vec<T>> = (0..n_agents)
        .map(|i| cfg.samplers[i].weights(problem.agent_size(i)).into_iter().map(T::of).collect())
        .collect();
    let mut comm = Communicator::new(cfg.pattern.clone(), n_agents, cfg.seed)?;
    let times = cfg.interval.aggregation_times(cfg.horizon);
    let mut next_agg = times.times().iter().copied().peekable();

    let mut theta = Matrix::from_fn(n_agents, d, |_, c| cfg.theta0[c]);
    let mut scratch = vec![T::zero(); d];
    let mut pr_sum = vec![T::zero(); d];
    let mut checkpoints = cfg.checkpoints.iter().copied().peekable();
    let mut records = Vec::with_capacity(cfg.checkpoints.len());
    let limit = T::of(DIVERGENCE_THRESHOLD * DIVERGENCE_THRESHOLD);

    for n in 0..cfg.horizon {
        let gamma = T::of(cfg.step.step_size(n + 1));
        for (i, sampler) in samplers.iter_mut().enumerate() {
            let row = theta.row_mut(i);
            local_step(problem, i, row, sampler, &weights[i], gamma, &mut scratch);
            let sq = norm_sq(row);
            if !(sq <= limit) {
                return Err(Error::Divergence { step: n + 1, agent: i, norm: sq.sqrt().to_f64_lossy() });
            }
        }
        if next_agg.peek() == Some(&n) {
            next_agg.next();
            match comm.next_mixing() {
                Mixing::Average => aggregate_average(&mut theta),
                Mixing::Matrix(w) => aggregate(&mut theta, &w)?,
            }
        }
        let m = n + 1;
        let avg = average_row(&theta);
        for (s, &a) in pr_sum.iter_mut().zip(&avg) {
            *s = *s + a;
        }
        if checkpoints.peek() == Some(&m) {
            checkpoints.next();
            let pr_avg: Vec<T> = pr_sum.iter().map(|&s| s / T::of_usize(m)).collect();
            records.push(Record {
                n: m,
                mse: sq_dist(&avg, &cfg.theta_star),
                pr_mse: sq_dist(&pr_avg, &cfg.theta_star),
                consensus: consensus_error(&theta),
                gamma: T::of(cfg.step.step_size(m)),
                theta_avg: avg,
                pr_avg,
            });
        }
    }
    Ok(Trajectory { records })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: stats::mean(xs), variance: stats::variance(xs), std_error: stats::std_error(xs) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Mse,
    PrMse,
    Consensus,
    /// `consensus / γ_n`.
    ScaledConsensus,
    /// `mse / γ_n`.
    ScaledMse,
}

impl Metric {
    pub fn value<T: Scalar>(self, r: &Record<T>) -> f64 {
        let g = r.gamma.to_f64_lossy();
        match self {
            Self::Mse => r.mse.to_f64_lossy(),
            Self::PrMse => r.pr_mse.to_f64_lossy(),
            Self::Consensus => r.consensus.to_f64_lossy(),
            Self::ScaledConsensus => r.consensus.to_f64_lossy() / g,
            Self::ScaledMse => r.mse.to_f64_lossy() / g,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckpointStats {
    pub n: usize,
    pub gamma: f64,
    pub mse: Summary,
    pub pr_mse: Summary,
    pub consensus: Summary,
    pub scaled_consensus: Summary,
    /// `Ĉ_n = (1/γ_n)·Cov_trials(θ_n − θ*)`.
    pub scaled_cov: Matrix<f64>,
    pub scaled_cov_trace_se: f64,
    /// `n·Cov_trials(θ̄_n − θ*)` for the Polyak–Ruppert average.
    pub pr_scaled_cov: Matrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Ensemble<T> {
    pub trials: Vec<Trajectory<T>>,
    pub checkpoints: Vec<CheckpointStats>,
}

impl<T: Scalar> Ensemble<T> {
    pub fn terminal(&self) -> &CheckpointStats {
        self.checkpoints.last().expect("at least one checkpoint")
    }

    /// Per-trial values of `metric` at the final checkpoint, in trial order.
    pub fn terminal_values(&self, metric: Metric) -> Vec<f64> {
        self.trials.iter().map(|t| metric.value(t.last())).collect()
    }

    /// Per-trial values of `metric` at checkpoint index `k`.
    pub fn values_at(&self, k: usize, metric: Metric) -> Vec<f64> {
        self.trials.iter().map(|t| metric.value(&t.records[k])).collect()
    }
}

/// Trial-matched difference `self − other` of a terminal metric. Ensembles from
/// the same master seed share per-trial streams, so pairing removes common noise.
pub fn paired_difference<T: Scalar>(a: &Ensemble<T>, b: &Ensemble<T>, metric: Metric) -> Result<Summary> {
    if a.trials.len() != b.trials.len() {
        return Err(Error::SizeMismatch { expected: a.trials.len(), found: b.trials.len() });
    }
    let diff: Vec<f64> =
        a.terminal_values(metric).iter().zip(b.terminal_values(metric)).map(|(x, y)| x - y).collect();
    Ok(Summary::of(&diff))
}

fn scaled_covariance(devs: &[Vec<f64>], scale: f64) -> (Matrix<f64>, f64) {
    let r = devs.len();
    let d = devs[0].len();
    let mean: Vec<f64> = (0..d).map(|k| devs.iter().map(|e| e[k]).sum::<f64>() / r as f64).collect();
    let centered: Vec<Vec<f64>> = devs.iter().map(|e| e.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let cov = Matrix::from_fn(d, d, |a, b| {
        scale * centered.iter().map(|e| e[a] * e[b]).sum::<f64>() / (r - 1) as f64
    });
    let per_trial: Vec<f64> =
        centered.iter().map(|e| scale * e.iter().map(|x| x * x).sum::<f64>() * r as f64 / (r - 1) as f64).collect();
    (cov, stats::std_error(&per_trial))
}

/// Runs `trials` independent copies in parallel. Trial `r` is seeded from
/// `(master seed, r)` and results are collected in trial order, so the output
/// does not depend on the thread count.
pub fn run_ensemble<T: Scalar>(cfg: &RunConfig<T>, trials: usize) -> Result<Ensemble<T>> {
    if trials < 2 {
        return Err(Error::InvalidArgument("an ensemble needs at least 2 trials".into()));
    }
    cfg.validate()?;
    let runs: Vec<Trajectory<T>> =
        (0..trials).into_par_iter().map(|r| run(&cfg.for_trial(r))).collect::<Result<_>>()?;
    let star: Vec<f64> = cfg.theta_star.iter().map(|v| v.to_f64_lossy()).collect();
    let checkpoints = cfg
        .checkpoints
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let recs: Vec<&Record<T>> = runs.iter().map(|t| &t.records[k]).collect();
            let gamma = cfg.step.step_size(n);
            let col = |m: Metric| Summary::of(&recs.iter().map(|r| m.value(r)).collect::<Vec<_>>());
            let dev = |v: &Vec<T>| v.iter().zip(&star).map(|(x, s)| x.to_f64_lossy() - s).collect::<Vec<f64>>();
            let devs: Vec<Vec<f64>> = recs.iter().map(|r| dev(&r.theta_avg)).collect();
            let pr_devs: Vec<Vec<f64>> = recs.iter().map(|r| dev(&r.pr_avg)).collect();
            let (scaled_cov, scaled_cov_trace_se) = scaled_covariance(&devs, 1.0 / gamma);
            let (pr_scaled_cov, _) = scaled_covariance(&pr_devs, n as f64);
            CheckpointStats {
                n,
                gamma,
                mse: col(Metric::Mse),
                pr_mse: col(Metric::PrMse),
                consensus: col(Metric::Consensus),
                scaled_consensus: col(Metric::ScaledConsensus),
                scaled_cov,
                scaled_cov_trace_se,
                pr_scaled_cov,
            }
        })
        .collect();
    Ok(Ensemble { trials: runs, checkpoints })
}

pub const TRAJECTORY_HEADER: &str = "trial,n,mse,pr_mse,consensus,gamma";

pub fn write_trajectory_rows<T: Scalar, W: Write>(out: &mut W, trial: usize, traj: &Trajectory<T>) -> io::Result<()> {
    for r in &traj.records {
        writeln!(
            out,
            "{trial},{},{},{},{},{}",
            r.n,
            r.mse.to_f64_lossy(),
            r.pr_mse.to_f64_lossy(),
            r.consensus.to_f64_lossy(),
            r.gamma.to_f64_lossy()
        )?;
    }
    Ok(())
}

pub const ENSEMBLE_HEADER: &str = "n,gamma,mse_mean,mse_se,pr_mse_mean,pr_mse_se,consensus_mean,consensus_se,\
scaled_consensus_mean,scaled_consensus_se,scaled_cov_trace,scaled_cov_trace_se";

pub fn write_ensemble_rows<W: Write>(out: &mut W, stats: &[CheckpointStats]) -> io::Result<()> {
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.n,
            s.gamma,
            s.mse.mean,
            s.mse.std_error,
            s.pr_mse.mean,
            s.pr_mse.std_error,
            s.consensus.mean,
            s.consensus.std_error,
            s.scaled_consensus.mean,
            s.scaled_consensus.std_error,
            s.scaled_cov.trace(),
            s.scaled_cov_trace_se
        )?;
    }
    Ok(())
}

pub const MATRIX_HEADER: &str = "matrix,row,col,value";

/// Long-format matrix block: one `name,row,col,value` line per entry.
pub fn write_matrix_block<T: Scalar, W: Write>(out: &mut W, name: &str, m: &Matrix<T>) -> io::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            writeln!(out, "{name},{r},{c},{}", m[(r, c)].to_f64_lossy())?;
        }
    }
    Ok(())
}
