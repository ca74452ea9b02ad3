//! Turns a validated config into core objects.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use udsgd_core::communication::{mh_matrix, CommPattern, IntervalSchedule, StepSchedule};
use udsgd_core::engine::{geometric_checkpoints, linear_checkpoints, RunConfig};
use udsgd_core::graph::{load_edge_list, Graph};
use udsgd_core::linalg::Matrix;
use udsgd_core::problems::{
    parse_libsvm, partition, quadratic_problem, solve_optimum, synthetic_blobs, Optimum, Problem, SyntheticSpec,
};
use udsgd_core::rng::{self, tag};
use udsgd_core::sampling::{SamplerKind, SamplerSpec};
use udsgd_core::Scalar;

use crate::config::{
    DataConfig, ExperimentConfig, GraphConfig, GroupConfig, PatternConfig, PatternKind, ProblemConfig, SamplerName,
    ScheduleConfig, ScheduleKind, Spacing,
};
use crate::error::LabError;

/// Offset separating agent-topology graph seeds from per-agent data graphs.
const TOPOLOGY_SEED_BASE: u64 = 1 << 32;

/// Everything an engine run needs, plus the optimum.
#[derive(Debug, Clone)]
pub struct Setup<T> {
    pub problem: Arc<Problem<T>>,
    pub samplers: Vec<SamplerSpec>,
    pub pattern: CommPattern<T>,
    pub interval: IntervalSchedule,
    pub step: StepSchedule,
    pub optimum: Optimum<T>,
}

impl<T: Scalar> Setup<T> {
    pub fn build(cfg: &ExperimentConfig, groups: &[GroupConfig], pattern: &PatternConfig, schedule: &ScheduleConfig) -> Result<Self, LabError> {
        let n_agents: usize = groups.iter().map(|g| g.count).sum();
        let problem = build_problem::<T>(cfg, n_agents)?;
        let samplers = build_samplers(cfg.seed, groups, &problem)?;
        let pattern = build_pattern(pattern, n_agents, cfg.seed)?;
        let optimum = solve_optimum(&problem)?;
        Ok(Self {
            problem: Arc::new(problem),
            samplers,
            pattern,
            interval: build_interval(schedule),
            step: StepSchedule { gamma_star: cfg.step.gamma_star, a: cfg.step.a },
            optimum,
        })
    }

    /// Every agent repeated `k` times; the optimum is unchanged.
    pub fn duplicated(&self, k: usize) -> Result<Self, LabError> {
        let n = self.problem.num_agents() * k;
        let pattern = match &self.pattern {
            CommPattern::FullAverage => CommPattern::FullAverage,
            CommPattern::PartialParticipation { size } => CommPattern::PartialParticipation { size: size * k },
            _ => {
                return Err(LabError::Config(
                    "agent duplication supports full_average and partial_participation patterns only".into(),
                ))
            }
        };
        pattern.validate(n)?;
        Ok(Self {
            problem: Arc::new(self.problem.duplicated(k)),
            samplers: self.samplers.iter().flat_map(|s| std::iter::repeat_n(s.clone(), k)).collect(),
            pattern,
            interval: self.interval,
            step: self.step,
            optimum: self.optimum.clone(),
        })
    }

    pub fn run_config(&self, cfg: &ExperimentConfig) -> RunConfig<T> {
        let checkpoints = match cfg.checkpoints.spacing {
            Spacing::Geometric => geometric_checkpoints(cfg.horizon, cfg.checkpoints.count),
            Spacing::Linear => linear_checkpoints(cfg.horizon, cfg.checkpoints.count),
        };
        RunConfig {
            problem: Arc::clone(&self.problem),
            samplers: self.samplers.clone(),
            pattern: self.pattern.clone(),
            interval: self.interval,
            step: self.step,
            horizon: cfg.horizon,
            checkpoints,
            theta_star: self.optimum.theta.clone(),
            theta0: vec![T::zero(); self.problem.dim()],
            seed: cfg.seed,
        }
    }
}

pub fn build_interval(s: &ScheduleConfig) -> IntervalSchedule {
    match s.kind {
        ScheduleKind::Constant => IntervalSchedule::Constant { k: s.k },
        ScheduleKind::LogGrowth => IntervalSchedule::LogGrowth,
        ScheduleKind::LoglogGrowth => IntervalSchedule::LogLogGrowth,
    }
}

fn load_graph(g: &GraphConfig, nodes: usize, seed: u64) -> Result<Graph, LabError> {
    let graph = match g.generated() {
        Some(kind) => Graph::generate(kind, nodes, seed)?,
        None => {
            let GraphConfig::File { path } = g else { unreachable!("only files are not generated") };
            let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
            load_edge_list(&text)?
        }
    };
    if graph.num_nodes() != nodes {
        return Err(LabError::Config(format!("graph has {} nodes, {nodes} are required", graph.num_nodes())));
    }
    Ok(graph)
}

pub fn build_problem<T: Scalar>(cfg: &ExperimentConfig, n_agents: usize) -> Result<Problem<T>, LabError> {
    match &cfg.problem {
        ProblemConfig::Quadratic { a, points_per_agent, center_scale, heterogeneity } => {
            let rows: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
            let a = Matrix::<T>::from_f64_rows(&rows);
            let d = a.nrows();
            let centers = (0..n_agents)
                .map(|i| {
                    let mut rng = rng::stream(cfg.seed, &[tag::DATA, i as u64]);
                    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
                    let offset: Vec<f64> = (0..d).map(|_| heterogeneity * normal()).collect();
                    Matrix::from_fn(*points_per_agent, d, |_, c| T::of(offset[c] + center_scale * normal()))
                })
                .collect();
            Ok(quadratic_problem(a, centers)?)
        }
        ProblemConfig::Logistic { kappa, data, partition: mode } => {
            let dataset = match data {
                DataConfig::Synthetic { n_points, dim, separation, seed } => synthetic_blobs::<T>(&SyntheticSpec {
                    n_points: *n_points,
                    dim: *dim,
                    separation: *separation,
                    seed: seed.unwrap_or_else(|| rng::derive_seed(cfg.seed, &[tag::DATA])),
                })?,
                DataConfig::Libsvm { path } => {
                    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
                    parse_libsvm(&text)?
                }
            };
            let part = partition(&dataset, n_agents, *mode, cfg.seed)?;
            Ok(Problem::logistic(&dataset, &part, T::of(*kappa))?)
        }
    }
}

pub fn build_samplers<T: Scalar>(seed: u64, groups: &[GroupConfig], problem: &Problem<T>) -> Result<Vec<SamplerSpec>, LabError> {
    let mut specs = Vec::with_capacity(problem.num_agents());
    for g in groups {
        for _ in 0..g.count {
            let agent = specs.len();
            let s = &g.sampler;
            let kind = match s.kind {
                SamplerName::Iid => SamplerKind::Iid,
                SamplerName::Shuffle => SamplerKind::Shuffle,
                SamplerName::Srw => SamplerKind::Srw,
                SamplerName::Nbrw => SamplerKind::Nbrw,
                SamplerName::Srrw => SamplerKind::Srrw { alpha: s.alpha, beta_exponent: s.beta_exponent },
            };
            let spec = match &s.graph {
                Some(gc) if kind.is_walk() => {
                    let graph_seed = rng::derive_seed(seed, &[tag::GRAPH, agent as u64]);
                    SamplerSpec::walk(kind, Arc::new(load_graph(gc, problem.agent_size(agent), graph_seed)?))
                }
                _ if kind == SamplerKind::Shuffle => SamplerSpec::shuffle(),
                _ => SamplerSpec::iid(),
            };
            specs.push(spec);
        }
    }
    if specs.len() != problem.num_agents() {
        return Err(LabError::Config(format!("{} samplers for {} agents", specs.len(), problem.num_agents())));
    }
    Ok(specs)
}

pub fn build_pattern<T: Scalar>(p: &PatternConfig, n_agents: usize, seed: u64) -> Result<CommPattern<T>, LabError> {
    let topology = |j: usize, g: &GraphConfig| -> Result<Matrix<T>, LabError> {
        let graph = load_graph(g, n_agents, rng::derive_seed(seed, &[tag::GRAPH, TOPOLOGY_SEED_BASE + j as u64]))?;
        Ok(mh_matrix(&graph))
    };
    let pattern = match p.kind {
        PatternKind::FullAverage => CommPattern::FullAverage,
        PatternKind::PartialParticipation => {
            CommPattern::PartialParticipation { size: p.participation.expect("validated participation") }
        }
        PatternKind::DecentralizedFixed => {
            CommPattern::DecentralizedFixed { w: topology(0, p.topology.as_ref().expect("validated topology"))? }
        }
        PatternKind::DecentralizedTimeVarying => CommPattern::DecentralizedTimeVarying {
            ws: p.topologies.iter().enumerate().map(|(j, g)| topology(j, g)).collect::<Result<_, _>>()?,
        },
    };
    pattern.validate(n_agents)?;
    Ok(pattern)
}
