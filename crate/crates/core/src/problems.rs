//! Objectives, datasets and the optimum oracle.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution as _, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, Matrix};
use crate::rng;
use crate::scalar::Scalar;

/// Default regularization weight of the logistic objective.
pub const DEFAULT_KAPPA: f64 = 1.0;

/// Binary-labelled points stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Matrix<T>,
    labels: Vec<u8>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Matrix<T>, labels: Vec<u8>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::SizeMismatch { expected: features.nrows(), found: labels.len() });
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        if !features.all_finite() {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn x(&self, i: usize) -> &[T] {
        self.features.row(i)
    }

    pub fn y(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.dim();
        let features = Matrix::from_fn(indices.len(), d, |r, c| self.features[(indices[r], c)]);
        Self { features, labels: indices.iter().map(|&i| self.labels[i]).collect() }
    }
}

/// Parses `label idx:val …` lines with 1-based sparse indices. Labels `−1/+1`
/// (or `0/1`) map to `0/1`; blank and `#` lines are skipped.
pub fn parse_libsvm<T: Scalar>(text: &str) -> Result<Dataset<T>> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = 0;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: lineno + 1, message };
        let mut tokens = line.split_whitespace();
        let label: f64 = tokens
            .next()
            .expect("non-empty line")
            .parse()
            .map_err(|_| err("label is not a number".into()))?;
        labels.push(match label {
            l if l == 1.0 => 1,
            l if l == -1.0 || l == 0.0 => 0,
            l => return Err(err(format!("label {l} is not binary"))),
        });
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| err(format!("expected idx:val, got {tok:?}")))?;
            let idx: usize = idx.parse().map_err(|_| err(format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            let val: f64 = val.parse().map_err(|_| err(format!("bad feature value {val:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value {val}")));
            }
            dim = dim.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut features = Matrix::zeros(rows.len(), dim);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            features[(r, c)] = T::of(v);
        }
    }
    Dataset::new(features, labels)
}

/// Seeded two-class Gaussian blobs: `x ~ N(±(s/2)·u, I)` with `u = 1/√d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_points: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

pub fn synthetic_blobs<T: Scalar>(spec: &SyntheticSpec) -> Result<Dataset<T>> {
    if spec.n_points == 0 {
        return Err(Error::EmptyDataset);
    }
    if spec.dim == 0 || !spec.separation.is_finite() {
        return Err(Error::InvalidArgument("synthetic data needs dim >= 1 and finite separation".into()));
    }
    let mut rng = rng::stream(spec.seed, &[rng::tag::DATA]);
    let shift = 0.5 * spec.separation / (spec.dim as f64).sqrt();
    let mut labels = Vec::with_capacity(spec.n_points);
    let mut data = Vec::with_capacity(spec.n_points * spec.dim);
    for _ in 0..spec.n_points {
        let y: u8 = rng.random_range(0..2);
        let sign = if y == 1 { 1.0 } else { -1.0 };
        for _ in 0..spec.dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(T::of(z + sign * shift));
        }
        labels.push(y);
    }
    Dataset::new(Matrix::from_vec(spec.n_points, spec.dim, data)?, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionMode {
    Even,
    /// Per-class agent proportions drawn from `Dirichlet(alpha)`.
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub agent_indices: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_agents(&self) -> usize {
        self.agent_indices.len()
    }

    /// True when the index lists are disjoint and cover `0..n` exactly.
    pub fn is_exact_cover(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.agent_indices.iter().flatten() {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Redraws allowed before a Dirichlet split that keeps leaving an agent empty is abandoned.
pub const MAX_PARTITION_ATTEMPTS: usize = 1000;

pub fn partition<T: Scalar>(data: &Dataset<T>, agents: usize, mode: PartitionMode, seed: u64) -> Result<Partition> {
    let n = data.len();
    if agents == 0 || agents > n {
        return Err(Error::InsufficientData { points: n, agents });
    }
    let mut rng = rng::stream(seed, &[rng::tag::PARTITION]);
    let mut agent_indices = vec![Vec::new(); agents];
    match mode {
        PartitionMode::Even => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            for (k, i) in order.into_iter().enumerate() {
                agent_indices[k % agents].push(i);
            }
        }
        PartitionMode::Dirichlet { alpha } => {
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|_| Error::InvalidArgument(format!("Dirichlet alpha must be positive, got {alpha}")))?;
            // Proportions are redrawn until no agent is left empty.
            let mut attempt = 0;
            loop {
                agent_indices.iter_mut().for_each(Vec::clear);
                for class in 0..2u8 {
                    let mut members: Vec<usize> = (0..n).filter(|&i| data.y(i) == class).collect();
                    members.shuffle(&mut rng);
                    let draws: Vec<f64> = (0..agents).map(|_| gamma.sample(&mut rng)).collect();
                    let total: f64 = draws.iter().sum();
                    let mut start = 0;
                    let mut acc = 0.0;
                    for (a, g) in draws.iter().enumerate() {
                        acc += g;
                        let end = if a + 1 == agents {
                            members.len()
                        } else {
                            ((acc / total) * members.len() as f64).round() as usize
                        };
                        let end = end.clamp(start, members.len());
                        agent_indices[a].extend_from_slice(&members[start..end]);
                        start = end;
                    }
                }
                attempt += 1;
                if agent_indices.iter().all(|l| !l.is_empty()) {
                    break;
                }
                if attempt == MAX_PARTITION_ATTEMPTS {
                    return Err(Error::InsufficientData { points: n, agents });
                }
            }
        }
    }
    for list in &mut agent_indices {
        list.sort_unstable();
    }
    Ok(Partition { agent_indices })
}

#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
pub fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `F = log(1+e^{θᵀx}) − y·θᵀx + (κ/2)‖θ‖²`.
pub fn logistic_loss<T: Scalar>(theta: &[T], x: &[T], y: u8, kappa: T) -> T {
    let z = crate::linalg::dot(theta, x);
    softplus(z) - T::of_usize(y as usize) * z + T::of(0.5) * kappa * norm_sq(theta)
}

/// `∇F = x·(σ(θᵀx) − y) + κθ`.
pub fn logistic_grad<T: Scalar>(theta: &[T], x: &[T], y: u8, kappa: T) -> Vec<T> {
    let mut out = vec![T::zero(); theta.len()];
    logistic_grad_into(theta, x, y, kappa, T::one(), &mut out);
    out
}

/// Adds `scale·∇F` to `out`.
#[inline]
fn logistic_grad_into<T: Scalar>(theta: &[T], x: &[T], y: u8, kappa: T, scale: T, out: &mut [T]) {
    let r = (sigmoid(crate::linalg::dot(theta, x)) - T::of_usize(y as usize)) * scale;
    let k = kappa * scale;
    for ((o, &xi), &t) in out.iter_mut().zip(x).zip(theta) {
        *o = *o + r * xi + k * t;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective<T> {
    Logistic { kappa: T },
    /// `F(θ, X) = ½(θ − c_X)ᵀA(θ − c_X)`; each agent's rows are the centers `c_X`.
    Quadratic { a: Matrix<T> },
}

/// A distributed objective: one local sample table per agent and
/// `f = (1/N)Σ_i f_i` with `f_i` the local sample average.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    objective: Objective<T>,
    agents: Vec<Dataset<T>>,
}

impl<T: Scalar> Problem<T> {
    pub fn logistic(data: &Dataset<T>, partition: &Partition, kappa: T) -> Result<Self> {
        if !(kappa >= T::zero()) {
            return Err(Error::InvalidArgument("kappa must be non-negative".into()));
        }
        let agents = partition.agent_indices.iter().map(|idx| data.subset(idx)).collect();
        Self::from_parts(Objective::Logistic { kappa }, agents)
    }

    pub fn from_parts(objective: Objective<T>, agents: Vec<Dataset<T>>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidArgument("problem needs at least one agent".into()));
        }
        let d = agents[0].dim();
        for (i, a) in agents.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::InvalidArgument(format!("agent {i} holds no data")));
            }
            if a.dim() != d {
                return Err(Error::DimensionMismatch(format!("agent {i} has dimension {} instead of {d}", a.dim())));
            }
        }
        if let Objective::Quadratic { a } = &objective {
            if a.nrows() != d || !a.is_square() {
                return Err(Error::DimensionMismatch(format!("A is {}x{}, centers have dimension {d}", a.nrows(), a.ncols())));
            }
        }
        Ok(Self { objective, agents })
    }

    pub fn objective(&self) -> &Objective<T> {
        &self.objective
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents[0].dim()
    }

    pub fn agent_data(&self, agent: usize) -> &Dataset<T> {
        &self.agents[agent]
    }

    pub fn agent_size(&self, agent: usize) -> usize {
        self.agents[agent].len()
    }

    /// Every agent repeated `k` times in order (`[a, a, …, b, b, …]`).
    pub fn duplicated(&self, k: usize) -> Self {
        let agents = self.agents.iter().flat_map(|a| std::iter::repeat_n(a.clone(), k)).collect();
        Self { objective: self.objective.clone(), agents }
    }

    pub fn sample_loss(&self, agent: usize, theta: &[T], idx: usize) -> T {
        let data = &self.agents[agent];
        match &self.objective {
            Objective::Logistic { kappa } => logistic_loss(theta, data.x(idx), data.y(idx), *kappa),
            Objective::Quadratic { a } => {
                let diff: Vec<T> = theta.iter().zip(data.x(idx)).map(|(&t, &c)| t - c).collect();
                T::of(0.5) * crate::linalg::dot(&diff, &a.matvec(&diff))
            }
        }
    }

    /// Adds `scale·∇F_i(θ, X = idx)` to `out`.
    #[inline]
    pub fn add_sample_grad(&self, agent: usize, theta: &[T], idx: usize, scale: T, out: &mut [T]) {
        let data = &self.agents[agent];
        match &self.objective {
            Objective::Logistic { kappa } => logistic_grad_into(theta, data.x(idx), data.y(idx), *kappa, scale, out),
            Objective::Quadratic { a } => {
                let c = data.x(idx);
                for (r, o) in out.iter_mut().enumerate() {
                    let row = a.row(r);
                    let mut s = T::zero();
                    for k in 0..theta.len() {
                        s = s + row[k] * (theta[k] - c[k]);
                    }
                    *o = *o + scale * s;
                }
            }
        }
    }

    pub fn sample_grad(&self, agent: usize, theta: &[T], idx: usize) -> Vec<T> {
        let mut out = vec![T::zero(); theta.len()];
        self.add_sample_grad(agent, theta, idx, T::one(), &mut out);
        out
    }

    /// `∇f_i(θ)`: the local sample average.
    pub fn agent_grad(&self, agent: usize, theta: &[T]) -> Vec<T> {
        let b = self.agent_size(agent);
        let mut out = vec![T::zero(); theta.len()];
        let w = T::one() / T::of_usize(b);
        for x in 0..b {
            self.add_sample_grad(agent, theta, x, w, &mut out);
        }
        out
    }

    pub fn full_grad(&self, theta: &[T]) -> Vec<T> {
        let n = T::of_usize(self.num_agents());
        let mut out = vec![T::zero(); theta.len()];
        for i in 0..self.num_agents() {
            for (o, g) in out.iter_mut().zip(self.agent_grad(i, theta)) {
                *o = *o + g / n;
            }
        }
        out
    }

    pub fn loss(&self, theta: &[T]) -> T {
        let n = T::of_usize(self.num_agents());
        (0..self.num_agents())
            .map(|i| {
                let b = self.agent_size(i);
                (0..b).map(|x| self.sample_loss(i, theta, x)).sum::<T>() / T::of_usize(b)
            })
            .sum::<T>()
            / n
    }

    /// `∇²f(θ)`.
    pub fn hessian(&self, theta: &[T]) -> Matrix<T> {
        let d = theta.len();
        match &self.objective {
            Objective::Quadratic { a } => a.clone(),
            Objective::Logistic { kappa } => {
                let mut h = Matrix::zeros(d, d);
                let n = T::of_usize(self.num_agents());
                for data in &self.agents {
                    let w = T::one() / (n * T::of_usize(data.len()));
                    for x in 0..data.len() {
                        let xv = data.x(x);
                        let s = sigmoid(crate::linalg::dot(theta, xv));
                        let c = w * s * (T::one() - s);
                        for r in 0..d {
                            for k in 0..d {
                                h[(r, k)] = h[(r, k)] + c * xv[r] * xv[k];
                            }
                        }
                    }
                }
                for r in 0..d {
                    h[(r, r)] = h[(r, r)] + *kappa;
                }
                h.symmetrize()
            }
        }
    }
}

/// `F(θ, X) = ½(θ − c_X)ᵀA(θ − c_X)` with per-agent center tables.
pub fn quadratic_problem<T: Scalar>(a: Matrix<T>, centers: Vec<Matrix<T>>) -> Result<Problem<T>> {
    if !a.is_square() || !a.is_symmetric(T::tol(1e-12) * (T::one() + a.max_abs())) {
        return Err(Error::NotPositiveDefinite("A must be symmetric".into()));
    }
    let lmin = a.symmetric_eigen().min();
    if !(lmin > T::zero()) {
        return Err(Error::NotPositiveDefinite(format!("A has eigenvalue {}", lmin.to_f64_lossy())));
    }
    let agents = centers
        .into_iter()
        .map(|c| {
            let n = c.nrows();
            Dataset::new(c, vec![0; n])
        })
        .collect::<Result<_>>()?;
    Problem::from_parts(Objective::Quadratic { a }, agents)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum<T> {
    pub theta: Vec<T>,
    /// `H = ∇²f(θ*)`.
    pub hessian: Matrix<T>,
    /// `λ_min(H)`.
    pub mu: T,
    pub iterations: usize,
    pub grad_norm: T,
}

pub const NEWTON_MAX_ITERATIONS: usize = 200;

/// Damped Newton iterations from the origin until `‖∇f‖ < 1e−10`.
pub fn solve_optimum<T: Scalar>(p: &Problem<T>) -> Result<Optimum<T>> {
    let d = p.dim();
    let mut theta = vec![T::zero(); d];
    let mut grad = p.full_grad(&theta);
    let g0 = norm_sq(&grad).sqrt();
    // The absolute target is unreachable in low precision; scale with the roundoff floor.
    let target = T::tol(1e-10).max(T::of(100.0) * T::epsilon() * (T::one() + g0));
    let mut iterations = 0;
    let mut gnorm = g0;
    while gnorm >= target {
        if iterations == NEWTON_MAX_ITERATIONS {
            return Err(Error::NonConvergence { iterations, grad_norm: gnorm.to_f64_lossy() });
        }
        let step = p.hessian(&theta).solve(&grad)?;
        let f0 = p.loss(&theta);
        let mut t = T::one();
        let mut candidate;
        loop {
            candidate = theta.iter().zip(&step).map(|(&x, &s)| x - t * s).collect::<Vec<T>>();
            // Near the optimum the loss is flat to roundoff; accept full steps there.
            if p.loss(&candidate) <= f0 + T::tol(1e-12) * (T::one() + f0.abs()) || t < T::of(1e-8) {
                break;
            }
            t = t * T::of(0.5);
        }
        theta = candidate;
        grad = p.full_grad(&theta);
        gnorm = norm_sq(&grad).sqrt();
        iterations += 1;
    }
    let hessian = p.hessian(&theta);
    let mu = hessian.symmetric_eigen().min();
    if !(mu > T::zero()) {
        return Err(Error::NotPositiveDefinite(format!("Hessian at the optimum has eigenvalue {}", mu.to_f64_lossy())));
    }
    Ok(Optimum { theta, hessian, mu, iterations, grad_norm: gnorm })
}
