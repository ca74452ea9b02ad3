//! Finite Markov chain analysis: kernels, stationary laws, the fundamental
//! matrix, Poisson-equation solutions and asymptotic covariance matrices.
//!
//! The asymptotic covariance of a test function `g` along an ergodic chain is
//! `lim n·Cov(μ̂_n(g))`. It is computed three independent ways:
//!
//! * [`asymptotic_covariance`]: closed form through the fundamental matrix,
//! * [`asymptotic_covariance_series`]: truncated autocovariance expansion,
//! * [`asymptotic_covariance_mc`]: Monte-Carlo estimate of `n·Var` over trials.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

/// Row-stochastic matrix of a finite chain.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<T>(Matrix<T>);

/// Probability vector; for covariance work it is the chain's stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T>(Vec<T>);

/// `N×d` table whose row `x` is `g(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTable<T>(Matrix<T>);

impl<T: Scalar> TransitionMatrix<T> {
    pub fn new(p: Matrix<T>) -> Result<Self> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!("transition matrix is {}x{}", p.nrows(), p.ncols())));
        }
        if !p.all_finite() || p.as_slice().iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidArgument("transition matrix entries must be finite and non-negative".into()));
        }
        let tol = T::tol(1e-12);
        if let Some((i, s)) = p.row_sums().into_iter().enumerate().find(|(_, s)| (*s - T::one()).abs() > tol) {
            return Err(Error::InvalidArgument(format!("row {i} sums to {s}, not 1")));
        }
        Ok(Self(p))
    }

    /// The i.i.d. chain `1πᵀ`.
    pub fn iid(pi: &Distribution<T>) -> Self {
        let n = pi.len();
        Self(Matrix::from_fn(n, n, |_, j| pi.0[j]))
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.nrows()
    }

    fn support(&self) -> Vec<Vec<usize>> {
        (0..self.num_states())
            .map(|i| self.0.row(i).iter().enumerate().filter(|(_, &v)| v > T::zero()).map(|(j, _)| j).collect())
            .collect()
    }

    /// Checks irreducibility (strong connectivity of the support digraph) and
    /// aperiodicity (gcd of cycle lengths equal to one).
    pub fn validate_ergodic(&self) -> Result<()> {
        check_support_ergodic(&self.support())
    }
}

/// Ergodicity of a chain given only its support as adjacency lists.
pub fn check_support_ergodic(adj: &[Vec<usize>]) -> Result<()> {
    let n = adj.len();
    if n == 0 {
        return Err(Error::NonErgodic("chain has no states".into()));
    }
    let mut radj = vec![Vec::new(); n];
    for (u, list) in adj.iter().enumerate() {
        for &v in list {
            radj[v].push(u);
        }
    }
    let reach = |g: &[Vec<usize>]| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &g[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    if !reach(adj) || !reach(&radj) {
        return Err(Error::NonErgodic("support is not strongly connected".into()));
    }
    // BFS levels; the period is gcd over edges u->v of level(u) + 1 - level(v).
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0usize;
    for (u, list) in adj.iter().enumerate() {
        for &v in list {
            let diff = (level[u] as isize + 1 - level[v] as isize).unsigned_abs();
            period = gcd(period, diff);
        }
    }
    if period != 1 {
        return Err(Error::NonErgodic(format!("chain is periodic with period {period}")));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

impl<T: Scalar> Distribution<T> {
    pub fn new(pi: Vec<T>) -> Result<Self> {
        if pi.is_empty() || pi.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument("distribution entries must be positive and finite".into()));
        }
        let s: T = pi.iter().copied().sum();
        if (s - T::one()).abs() > T::tol(1e-12) {
            return Err(Error::InvalidArgument(format!("distribution sums to {s}")));
        }
        Ok(Self(pi))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![T::one() / T::of_usize(n); n])
    }

    /// `π(i) ∝ weights[i]`.
    pub fn proportional(weights: &[T]) -> Result<Self> {
        let s: T = weights.iter().copied().sum();
        Self::new(weights.iter().map(|&w| w / s).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `max_j |(πᵀP)_j − π_j|`.
    pub fn balance_residual(&self, p: &TransitionMatrix<T>) -> T {
        let pp = p.0.vecmat(&self.0);
        pp.iter().zip(&self.0).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn total_variation(&self, other: &[T]) -> T {
        self.0.iter().zip(other).map(|(&a, &b)| (a - b).abs()).sum::<T>() * T::of(0.5)
    }
}

impl<T: Scalar> FunctionTable<T> {
    pub fn new(g: Matrix<T>) -> Result<Self> {
        if !g.all_finite() {
            return Err(Error::InvalidArgument("function table has non-finite entries".into()));
        }
        Ok(Self(g))
    }

    /// Scalar test function, one value per state.
    pub fn scalar(values: &[T]) -> Result<Self> {
        Self::new(Matrix::from_fn(values.len(), 1, |i, _| values[i]))
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn num_states(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn value(&self, x: usize) -> &[T] {
        self.0.row(x)
    }

    /// `μ = Gᵀπ`.
    pub fn mean(&self, pi: &Distribution<T>) -> Vec<T> {
        self.0.vecmat(pi.as_slice())
    }

    /// `Ḡ = G − 1μᵀ`.
    pub fn centered(&self, pi: &Distribution<T>) -> Matrix<T> {
        let mu = self.mean(pi);
        Matrix::from_fn(self.0.nrows(), self.0.ncols(), |i, j| self.0[(i, j)] - mu[j])
    }
}

/// Simple random walk on `g`: `P(i, j) = 1/d_i` for neighbours.
pub fn srw_kernel<T: Scalar>(g: &Graph) -> TransitionMatrix<T> {
    let n = g.num_nodes();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let w = T::one() / T::of_usize(g.degree(i));
        for &j in g.neighbors(i) {
            p[(i, j)] = w;
        }
    }
    TransitionMatrix(p)
}

/// Non-backtracking walk lifted to directed edges.
///
/// State `k` is the directed edge `states[k] = (prev, current)`. From `(u, v)` the
/// walk moves uniformly to `(v, w)` with `w ≠ u`, or back to `(v, u)` when `v` has
/// degree one.
pub fn nbrw_edge_chain<T: Scalar>(g: &Graph) -> (TransitionMatrix<T>, Vec<(usize, usize)>) {
    let (states, adj) = nbrw_edge_support(g);
    let m = states.len();
    let mut p = Matrix::zeros(m, m);
    for (k, next) in adj.iter().enumerate() {
        let prob = T::one() / T::of_usize(next.len());
        for &j in next {
            p[(k, j)] = prob;
        }
    }
    (TransitionMatrix(p), states)
}

/// Directed-edge states of the non-backtracking walk and, for each, the states it
/// can move to (all with equal probability).
pub fn nbrw_edge_support(g: &Graph) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let states: Vec<(usize, usize)> =
        (0..g.num_nodes()).flat_map(|u| g.neighbors(u).iter().map(move |&v| (u, v))).collect();
    let index = |u: usize, v: usize| states.binary_search(&(u, v)).expect("directed edge present");
    let adj = states
        .iter()
        .map(|&(u, v)| {
            if g.degree(v) == 1 {
                vec![index(v, u)]
            } else {
                g.neighbors(v).iter().filter(|&&w| w != u).map(|&w| index(v, w)).collect()
            }
        })
        .collect();
    (states, adj)
}

/// Lifts a node-level function table to directed-edge states by the head node.
pub fn lift_by_head<T: Scalar>(g: &FunctionTable<T>, states: &[(usize, usize)]) -> FunctionTable<T> {
    FunctionTable(Matrix::from_fn(states.len(), g.dim(), |k, j| g.0[(states[k].1, j)]))
}

/// Stationary distribution of an ergodic chain.
pub fn stationary<T: Scalar>(p: &TransitionMatrix<T>) -> Result<Distribution<T>> {
    p.validate_ergodic()?;
    let n = p.num_states();
    // (I − Pᵀ)π = 0 with the last equation replaced by Σπ = 1.
    let mut a = Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() } - p.0[(j, i)]);
    for j in 0..n {
        a[(n - 1, j)] = T::one();
    }
    let mut b = vec![T::zero(); n];
    b[n - 1] = T::one();
    let direct = a.solve(&b).ok().filter(|pi| pi.iter().all(|&v| v > T::zero() && v.is_finite()));
    let mut pi = match direct {
        Some(pi) => pi,
        None => power_iteration(p)?,
    };
    let s: T = pi.iter().copied().sum();
    pi.iter_mut().for_each(|v| *v = *v / s);
    let dist = Distribution(pi);
    if dist.balance_residual(p) > T::tol(1e-10) {
        let pi = power_iteration(p)?;
        return Ok(Distribution(pi));
    }
    Ok(dist)
}

fn power_iteration<T: Scalar>(p: &TransitionMatrix<T>) -> Result<Vec<T>> {
    let n = p.num_states();
    // Lazy chain shares π and removes periodic oscillation.
    let half = T::of(0.5);
    let mut pi = vec![T::one() / T::of_usize(n); n];
    for _ in 0..1_000_000 {
        let next: Vec<T> = p.0.vecmat(&pi).iter().zip(&pi).map(|(&a, &b)| half * (a + b)).collect();
        let diff = next.iter().zip(&pi).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        pi = next;
        if diff <= T::tol(1e-12) * T::of(1e-2) {
            if pi.iter().any(|&v| !(v > T::zero())) {
                break;
            }
            return Ok(pi);
        }
    }
    Err(Error::NonErgodic("power iteration did not converge".into()))
}

/// `Z = (I − P + 1πᵀ)⁻¹`.
pub fn fundamental_matrix<T: Scalar>(p: &TransitionMatrix<T>, pi: &Distribution<T>) -> Result<Matrix<T>> {
    p.validate_ergodic()?;
    let n = p.num_states();
    if pi.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: pi.len() });
    }
    let a = Matrix::from_fn(n, n, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        id - p.0[(i, j)] + pi.0[j]
    });
    let z = a.inverse()?;
    let residual = (&z.matmul(&a) - &Matrix::identity(n)).max_abs();
    if residual > T::tol(1e-10) {
        return Err(Error::Singular);
    }
    Ok(z)
}

/// Solution `m` of the Poisson equation `m − Pm = g − μ`, with rows `m(x)`.
pub fn poisson_solution<T: Scalar>(
    p: &TransitionMatrix<T>,
    pi: &Distribution<T>,
    g: &FunctionTable<T>,
) -> Result<FunctionTable<T>> {
    check_table(p, g)?;
    let z = fundamental_matrix(p, pi)?;
    Ok(FunctionTable(z.matmul(&g.centered(pi))))
}

fn check_table<T: Scalar>(p: &TransitionMatrix<T>, g: &FunctionTable<T>) -> Result<()> {
    if g.num_states() != p.num_states() {
        return Err(Error::SizeMismatch { expected: p.num_states(), found: g.num_states() });
    }
    Ok(())
}

/// Closed-form asymptotic covariance `Ḡᵀ(ΠZ + ZᵀΠ − Π)Ḡ`, with `Π = diag(π)`.
pub fn asymptotic_covariance<T: Scalar>(
    p: &TransitionMatrix<T>,
    pi: &Distribution<T>,
    g: &FunctionTable<T>,
) -> Result<Matrix<T>> {
    check_table(p, g)?;
    let z = fundamental_matrix(p, pi)?;
    let n = p.num_states();
    let core = Matrix::from_fn(n, n, |i, j| {
        let d = if i == j { pi.0[i] } else { T::zero() };
        pi.0[i] * z[(i, j)] + z[(j, i)] * pi.0[j] - d
    });
    let gc = g.centered(pi);
    Ok(gc.transpose().matmul(&core).matmul(&gc).symmetrize())
}

#[derive(Debug, Clone)]
pub struct SeriesEstimate<T> {
    pub covariance: Matrix<T>,
    /// Max-entry magnitude of the last added lag term (both orientations).
    pub last_term: T,
}

/// Autocovariance expansion truncated at lag `k_max`.
pub fn asymptotic_covariance_series<T: Scalar>(
    p: &TransitionMatrix<T>,
    pi: &Distribution<T>,
    g: &FunctionTable<T>,
    k_max: usize,
) -> Result<SeriesEstimate<T>> {
    check_table(p, g)?;
    let gc = g.centered(pi);
    let n = p.num_states();
    let weighted_t = Matrix::from_fn(gc.ncols(), n, |a, x| gc[(x, a)] * pi.0[x]);
    let mut sigma = weighted_t.matmul(&gc);
    // Since πᵀḠ = 0, (Pᵏ − 1πᵀ)Ḡ = PᵏḠ.
    let mut lagged = gc.clone();
    let mut last_term = T::zero();
    for _ in 0..k_max {
        lagged = p.0.matmul(&lagged);
        let c = weighted_t.matmul(&lagged);
        let term = &c + &c.transpose();
        last_term = term.max_abs();
        sigma = &sigma + &term;
    }
    Ok(SeriesEstimate { covariance: sigma.symmetrize(), last_term })
}

/// A process emitting state indices, e.g. a data sampler.
pub trait IndexStream {
    fn next_index(&mut self) -> usize;
}

/// Builds fresh, independently seeded index streams for Monte-Carlo estimation.
pub trait StreamFactory: Sync {
    type Stream: IndexStream;
    fn num_states(&self) -> usize;
    fn start(&self, seed: u64) -> Result<Self::Stream>;
}

/// Walk on an explicit kernel, started uniformly at random.
#[derive(Debug, Clone)]
pub struct KernelWalk {
    cumulative: Vec<Vec<f64>>,
    state: usize,
    rng: StreamRng,
}

impl IndexStream for KernelWalk {
    fn next_index(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let row = &self.cumulative[self.state];
        let next = row.partition_point(|&c| c <= u).min(row.len() - 1);
        self.state = next;
        next
    }
}

impl<T: Scalar> StreamFactory for TransitionMatrix<T> {
    type Stream = KernelWalk;

    fn num_states(&self) -> usize {
        self.0.nrows()
    }

    fn start(&self, seed: u64) -> Result<KernelWalk> {
        let cumulative = (0..self.num_states())
            .map(|i| {
                let mut acc = 0.0;
                self.0.row(i).iter().map(|v| { acc += v.to_f64_lossy(); acc }).collect()
            })
            .collect();
        let mut rng = rng::stream(seed, &[]);
        let state = rng.random_range(0..self.num_states());
        Ok(KernelWalk { cumulative, state, rng })
    }
}

#[derive(Debug, Clone)]
pub struct McEstimate<T> {
    pub covariance: Matrix<T>,
    /// Per-entry standard error of `covariance` under Gaussian trial means.
    pub std_error: Matrix<T>,
    pub horizon: usize,
    pub trials: usize,
}

/// Monte-Carlo estimate of `n·Cov(μ̂_n(g))` over `trials` independent runs of
/// length `horizon`. Trials run in parallel; trial `r` uses the stream seeded by
/// `(seed, r)`, so the result does not depend on the thread count.
pub fn asymptotic_covariance_mc<T: Scalar, F: StreamFactory>(
    source: &F,
    g: &FunctionTable<T>,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    if g.num_states() != source.num_states() {
        return Err(Error::SizeMismatch { expected: source.num_states(), found: g.num_states() });
    }
    if horizon == 0 || trials < 2 {
        return Err(Error::InvalidArgument("Monte-Carlo estimate needs horizon >= 1 and trials >= 2".into()));
    }
    let d = g.dim();
    let means: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut stream = source.start(rng::derive_seed(seed, &[rng::tag::MC_TRIAL, r as u64]))?;
            let mut sum = vec![0.0f64; d];
            for _ in 0..horizon {
                let x = stream.next_index();
                for (s, v) in sum.iter_mut().zip(g.value(x)) {
                    *s += v.to_f64_lossy();
                }
            }
            Ok(sum.into_iter().map(|s| s / horizon as f64).collect())
        })
        .collect::<Result<_>>()?;
    let grand: Vec<f64> = (0..d).map(|a| means.iter().map(|m| m[a]).sum::<f64>() / trials as f64).collect();
    let dev: Vec<Vec<f64>> = means.iter().map(|m| m.iter().zip(&grand).map(|(x, g)| x - g).collect()).collect();
    let n = horizon as f64;
    let r = trials as f64;
    let c = Matrix::<f64>::from_fn(d, d, |a, b| n * dev.iter().map(|e| e[a] * e[b]).sum::<f64>() / (r - 1.0));
    // Trial means are Gaussian by the chain CLT, so the Wishart variance
    // (C_aa·C_bb + C_ab²)/(R − 1) gives the standard error of each entry.
    let se = Matrix::from_fn(d, d, |a, b| T::of(((c[(a, a)] * c[(b, b)] + c[(a, b)] * c[(a, b)]) / (r - 1.0)).sqrt()));
    Ok(McEstimate { covariance: c.cast(), std_error: se, horizon, trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoewnerOrder {
    ADominates,
    BDominates,
    Equal,
    Incomparable,
}

/// Loewner comparison from the spectrum of `A − B`.
pub fn loewner_compare<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, tol: T) -> Result<LoewnerOrder> {
    loewner_compare_detailed(a, b, tol).map(|(o, _, _)| o)
}

/// As [`loewner_compare`], also returning the extreme eigenvalues of `A − B`.
pub fn loewner_compare_detailed<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, tol: T) -> Result<(LoewnerOrder, T, T)> {
    if !a.is_square() || (a.nrows(), a.ncols()) != (b.nrows(), b.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let eig = (a - b).symmetric_eigen();
    let (lo, hi) = (eig.min(), eig.max());
    let order = match (lo >= -tol, hi <= tol) {
        (true, true) => LoewnerOrder::Equal,
        (true, false) => LoewnerOrder::ADominates,
        (false, true) => LoewnerOrder::BDominates,
        (false, false) => LoewnerOrder::Incomparable,
    };
    Ok((order, lo, hi))
}

/// Symmetric within `1e−10` and `λ_min ≥ −1e−8·max(1, ‖Σ‖)`.
pub fn is_covariance<T: Scalar>(sigma: &Matrix<T>) -> bool {
    let scale = sigma.max_abs().max(T::one());
    sigma.is_symmetric(T::tol(1e-10) * scale) && sigma.symmetric_eigen().min() >= -T::tol(1e-8) * scale
}
