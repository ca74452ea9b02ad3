//! Per-agent data-sampling processes.
//!
//! Agents that can read their whole dataset sample i.i.d. or follow a single
//! fixed shuffle. Agents whose data sits on a graph walk it: simple random walk
//! (SRW), non-backtracking walk (NBRW) or self-repellent walk (SRRW). Walks visit
//! nodes in proportion to degree, so their gradients are reweighted to target
//! the uniform average over the dataset.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::markov::{self, Distribution, FunctionTable, IndexStream, StreamFactory, TransitionMatrix};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

pub const DEFAULT_SRRW_ALPHA: f64 = 20.0;
pub const DEFAULT_SRRW_BETA_EXPONENT: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerKind {
    Iid,
    Shuffle,
    Srw,
    Nbrw,
    /// Self-repellent walk over an SRW baseline. `alpha` is the repellence force,
    /// `beta_exponent` the decay `b` of the empirical-measure step `(n+1)^{-b}`.
    Srrw { alpha: f64, beta_exponent: f64 },
}

impl SamplerKind {
    pub fn srrw_default() -> Self {
        Self::Srrw { alpha: DEFAULT_SRRW_ALPHA, beta_exponent: DEFAULT_SRRW_BETA_EXPONENT }
    }

    pub fn is_walk(&self) -> bool {
        matches!(self, Self::Srw | Self::Nbrw | Self::Srrw { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Iid => "iid",
            Self::Shuffle => "shuffle",
            Self::Srw => "srw",
            Self::Nbrw => "nbrw",
            Self::Srrw { .. } => "srrw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    /// Dataset graph; required for walk kinds.
    pub graph: Option<Arc<Graph>>,
}

impl SamplerSpec {
    pub fn iid() -> Self {
        Self { kind: SamplerKind::Iid, graph: None }
    }

    pub fn shuffle() -> Self {
        Self { kind: SamplerKind::Shuffle, graph: None }
    }

    pub fn walk(kind: SamplerKind, graph: Arc<Graph>) -> Self {
        Self { kind, graph: Some(graph) }
    }

    pub fn validate(&self, dataset_size: usize) -> Result<()> {
        if dataset_size == 0 {
            return Err(Error::InvalidArgument("dataset_size must be >= 1".into()));
        }
        if let SamplerKind::Srrw { alpha, beta_exponent } = self.kind {
            if !(alpha >= 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidArgument(format!("srrw alpha must be >= 0, got {alpha}")));
            }
            if !(beta_exponent > 0.5 && beta_exponent <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "srrw beta exponent must lie in (0.5, 1], got {beta_exponent}"
                )));
            }
        }
        if self.kind.is_walk() {
            let g = self.graph.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("{} sampler requires a dataset graph", self.kind.name()))
            })?;
            if g.num_nodes() != dataset_size {
                return Err(Error::SizeMismatch { expected: dataset_size, found: g.num_nodes() });
            }
        }
        Ok(())
    }

    /// Structural checks plus ergodicity of the walk, required before sampling
    /// drives an optimisation run.
    pub fn validate_ergodic(&self, dataset_size: usize) -> Result<()> {
        self.validate(dataset_size)?;
        match &self.graph {
            Some(g) if self.kind.is_walk() => walk_is_ergodic(self.kind, g),
            _ => Ok(()),
        }
    }

    /// Stationary law of the sampler over dataset indices.
    pub fn stationary_law(&self, dataset_size: usize) -> Vec<f64> {
        match (&self.graph, self.kind.is_walk()) {
            (Some(g), true) => {
                let total = g.total_degree() as f64;
                g.degrees().into_iter().map(|d| d as f64 / total).collect()
            }
            _ => vec![1.0 / dataset_size as f64; dataset_size],
        }
    }

    /// Importance weight `1 / (|X|·π(x))`, so that `Σ_x π(x) w(x) g(x)` is the
    /// plain average of `g` over the dataset.
    pub fn weight(&self, dataset_size: usize, index: usize) -> f64 {
        match (&self.graph, self.kind.is_walk()) {
            (Some(g), true) => g.total_degree() as f64 / (dataset_size as f64 * g.degree(index) as f64),
            _ => 1.0,
        }
    }

    pub fn weights(&self, dataset_size: usize) -> Vec<f64> {
        (0..dataset_size).map(|x| self.weight(dataset_size, x)).collect()
    }

    /// Finite Markov kernel realising this sampler, when one exists.
    ///
    /// NBRW is represented on directed edges. Shuffling and SRRW have no fixed
    /// finite kernel and yield [`Error::KernelUnavailable`].
    pub fn explicit_chain<T: Scalar>(&self, dataset_size: usize) -> Result<ExplicitChain<T>> {
        self.validate(dataset_size)?;
        match self.kind {
            SamplerKind::Iid => {
                let pi = Distribution::uniform(dataset_size);
                Ok(ExplicitChain { kernel: TransitionMatrix::iid(&pi), stationary: pi, edge_states: None })
            }
            SamplerKind::Srw => {
                let kernel = markov::srw_kernel(self.graph.as_ref().expect("validated"));
                let stationary = markov::stationary(&kernel)?;
                Ok(ExplicitChain { kernel, stationary, edge_states: None })
            }
            SamplerKind::Nbrw => {
                let (kernel, states) = markov::nbrw_edge_chain(self.graph.as_ref().expect("validated"));
                let stationary = markov::stationary(&kernel)?;
                Ok(ExplicitChain { kernel, stationary, edge_states: Some(states) })
            }
            SamplerKind::Shuffle | SamplerKind::Srrw { .. } => {
                Err(Error::KernelUnavailable(self.kind.name().to_string()))
            }
        }
    }

    pub fn source(&self, dataset_size: usize) -> SamplerSource<'_> {
        SamplerSource { spec: self, dataset_size }
    }
}

/// Kernel, stationary law and (for NBRW) the directed-edge state labels.
/// Ergodicity of a walk: a connected, non-bipartite graph, and for NBRW an
/// ergodic directed-edge chain (checked on its sparse support).
fn walk_is_ergodic(kind: SamplerKind, g: &Graph) -> Result<()> {
    let name = kind.name();
    if g.num_nodes() < 2 || !g.is_connected() {
        return Err(Error::NonErgodic(format!("{name} needs a connected graph with at least two nodes")));
    }
    if g.is_bipartite() {
        return Err(Error::NonErgodic(format!("{name} on a bipartite graph is periodic with period 2")));
    }
    if kind == SamplerKind::Nbrw {
        let (_, adj) = markov::nbrw_edge_support(g);
        return markov::check_support_ergodic(&adj).map_err(|e| match e {
            Error::NonErgodic(m) => Error::NonErgodic(format!("nbrw edge chain: {m}")),
            other => other,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExplicitChain<T> {
    pub kernel: TransitionMatrix<T>,
    pub stationary: Distribution<T>,
    pub edge_states: Option<Vec<(usize, usize)>>,
}

impl<T: Scalar> ExplicitChain<T> {
    /// Re-expresses a per-data-point table on the chain's state space.
    pub fn lift(&self, g: &FunctionTable<T>) -> FunctionTable<T> {
        match &self.edge_states {
            Some(states) => markov::lift_by_head(g, states),
            None => g.clone(),
        }
    }

    pub fn asymptotic_covariance(&self, g: &FunctionTable<T>) -> Result<crate::linalg::Matrix<T>> {
        markov::asymptotic_covariance(&self.kernel, &self.stationary, &self.lift(g))
    }
}

#[derive(Debug, Clone)]
enum State {
    Iid,
    Shuffle { order: Vec<usize>, cursor: usize },
    Srw { current: usize },
    Nbrw { current: usize, previous: Option<usize> },
    Srrw { current: usize, measure: Vec<f64>, log_target: Vec<f64>, steps: u64, alpha: f64, beta_exponent: f64 },
}

/// Running sampler for one agent.
#[derive(Debug, Clone)]
pub struct Sampler {
    size: usize,
    graph: Option<Arc<Graph>>,
    state: State,
    started: bool,
    rng: StreamRng,
    scratch: Vec<f64>,
}

impl Sampler {
    pub fn new(spec: &SamplerSpec, dataset_size: usize, seed: u64) -> Result<Self> {
        spec.validate(dataset_size)?;
        let mut rng = rng::stream(seed, &[]);
        let graph = spec.graph.clone();
        let state = match spec.kind {
            SamplerKind::Iid => State::Iid,
            SamplerKind::Shuffle => {
                let mut order: Vec<usize> = (0..dataset_size).collect();
                order.shuffle(&mut rng);
                State::Shuffle { order, cursor: 0 }
            }
            SamplerKind::Srw => State::Srw { current: rng.random_range(0..dataset_size) },
            SamplerKind::Nbrw => State::Nbrw { current: rng.random_range(0..dataset_size), previous: None },
            SamplerKind::Srrw { alpha, beta_exponent } => {
                let g = graph.as_ref().expect("validated");
                let total = g.total_degree() as f64;
                State::Srrw {
                    current: rng.random_range(0..dataset_size),
                    measure: vec![1.0 / dataset_size as f64; dataset_size],
                    log_target: g.degrees().into_iter().map(|d| (d as f64 / total).ln()).collect(),
                    steps: 0,
                    alpha,
                    beta_exponent,
                }
            }
        };
        Ok(Self { size: dataset_size, graph, state, started: false, rng, scratch: Vec::new() })
    }

    pub fn dataset_size(&self) -> usize {
        self.size
    }

    /// SRRW empirical measure `x_n`; `None` for other kinds.
    pub fn empirical_measure(&self) -> Option<&[f64]> {
        match &self.state {
            State::Srrw { measure, .. } => Some(measure),
            _ => None,
        }
    }

    /// The shuffle order, for single-shuffling samplers.
    pub fn shuffle_order(&self) -> Option<&[usize]> {
        match &self.state {
            State::Shuffle { order, .. } => Some(order),
            _ => None,
        }
    }

    /// Emits the next data index. Walks emit their start node first and move on
    /// every later call.
    pub fn next(&mut self) -> usize {
        let first = !self.started;
        self.started = true;
        match &mut self.state {
            State::Iid => self.rng.random_range(0..self.size),
            State::Shuffle { order, cursor } => {
                let x = order[*cursor];
                *cursor = (*cursor + 1) % order.len();
                x
            }
            State::Srw { current } => {
                if !first {
                    let nbrs = self.graph.as_ref().expect("walk graph").neighbors(*current);
                    *current = nbrs[self.rng.random_range(0..nbrs.len())];
                }
                *current
            }
            State::Nbrw { current, previous } => {
                if !first {
                    let nbrs = self.graph.as_ref().expect("walk graph").neighbors(*current);
                    let next = match *previous {
                        Some(p) if nbrs.len() >= 2 => {
                            // Uniform over neighbours other than `p`.
                            let k = self.rng.random_range(0..nbrs.len() - 1);
                            let skip = nbrs.iter().position(|&v| v == p).expect("previous is a neighbour");
                            nbrs[if k >= skip { k + 1 } else { k }]
                        }
                        _ => nbrs[self.rng.random_range(0..nbrs.len())],
                    };
                    *previous = Some(*current);
                    *current = next;
                }
                *current
            }
            State::Srrw { current, measure, log_target, steps, alpha, beta_exponent } => {
                if !first {
                    let nbrs = self.graph.as_ref().expect("walk graph").neighbors(*current);
                    // K_ij[x] ∝ P_ij (x_j/μ_j)^{-α}; P_ij is constant along an SRW row.
                    self.scratch.clear();
                    self.scratch.extend(nbrs.iter().map(|&j| -*alpha * (measure[j].ln() - log_target[j])));
                    let top = self.scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for w in &mut self.scratch {
                        *w = (*w - top).exp();
                        total += *w;
                    }
                    let mut u = self.rng.random::<f64>() * total;
                    let mut pick = nbrs.len() - 1;
                    for (k, &w) in self.scratch.iter().enumerate() {
                        if u < w {
                            pick = k;
                            break;
                        }
                        u -= w;
                    }
                    *current = nbrs[pick];
                    *steps += 1;
                    // x_{n+1} = x_n + β_{n+1}(δ_{X_{n+1}} − x_n), β_n = (n+1)^{-b}.
                    let beta = ((*steps + 1) as f64).powf(-*beta_exponent);
                    for v in measure.iter_mut() {
                        *v *= 1.0 - beta;
                    }
                    measure[*current] += beta;
                }
                *current
            }
        }
    }
}

impl IndexStream for Sampler {
    fn next_index(&mut self) -> usize {
        self.next()
    }
}

/// A sampler spec bound to a dataset size, usable as a Monte-Carlo stream source.
#[derive(Debug, Clone, Copy)]
pub struct SamplerSource<'a> {
    spec: &'a SamplerSpec,
    dataset_size: usize,
}

impl StreamFactory for SamplerSource<'_> {
    type Stream = Sampler;

    fn num_states(&self) -> usize {
        self.dataset_size
    }

    fn start(&self, seed: u64) -> Result<Sampler> {
        Sampler::new(self.spec, self.dataset_size, seed)
    }
}
