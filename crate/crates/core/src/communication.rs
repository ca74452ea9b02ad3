//! Communication matrices, aggregation schedules and step sizes.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

/// Checks non-negativity and unit row/column sums within `1e−12`.
pub fn check_doubly_stochastic<T: Scalar>(w: &Matrix<T>) -> Result<()> {
    if !w.is_square() {
        return Err(Error::DimensionMismatch(format!("communication matrix is {}x{}", w.nrows(), w.ncols())));
    }
    if w.as_slice().iter().any(|&v| v < T::zero() || !v.is_finite()) {
        return Err(Error::InvalidArgument("communication matrix has negative or non-finite entries".into()));
    }
    let tol = T::tol(1e-12);
    let bad = |sums: Vec<T>| sums.into_iter().any(|s| (s - T::one()).abs() > tol);
    if bad(w.row_sums()) || bad(w.col_sums()) {
        return Err(Error::InvalidArgument("communication matrix is not doubly stochastic".into()));
    }
    Ok(())
}

/// Metropolis–Hastings weights: `W(i,j) = min(1/d_i, 1/d_j)` on edges, the rest on the diagonal.
pub fn mh_matrix<T: Scalar>(g: &Graph) -> Matrix<T> {
    let n = g.num_nodes();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        let di = T::of_usize(g.degree(i));
        for &j in g.neighbors(i) {
            let dj = T::of_usize(g.degree(j));
            w[(i, j)] = (T::one() / di).min(T::one() / dj);
        }
    }
    // Summing the nonnegative slacks keeps the diagonal ≥ 0 under rounding.
    for i in 0..n {
        let di = T::one() / T::of_usize(g.degree(i));
        w[(i, i)] = g.neighbors(i).iter().map(|&j| di - w[(i, j)]).sum();
    }
    w
}

/// `J = 11ᵀ/N`.
pub fn full_average<T: Scalar>(n: usize) -> Matrix<T> {
    let v = T::one() / T::of_usize(n);
    Matrix::from_fn(n, n, |_, _| v)
}

/// Largest eigenvalue modulus of a symmetric doubly stochastic `W` other than the
/// Perron root, computed as `‖W − J‖₂`.
pub fn second_eigen_modulus<T: Scalar>(w: &Matrix<T>) -> T {
    (w - &full_average(w.nrows())).symmetric_spectral_norm()
}

/// Averaging block `W_S`: `1/|S|` on `S×S`, identity elsewhere.
pub fn client_block<T: Scalar>(n: usize, selected: &[usize]) -> Matrix<T> {
    let mut inside = vec![false; n];
    for &i in selected {
        inside[i] = true;
    }
    let avg = T::one() / T::of_usize(selected.len());
    Matrix::from_fn(n, n, |i, j| match (inside[i], inside[j]) {
        (true, true) => avg,
        (false, false) if i == j => T::one(),
        _ => T::zero(),
    })
}

/// Permutation `T_{S→S'}` routing the averaged block to the newly selected agents.
///
/// Row `i` of `T·X` is row `σ(i)` of `X`. Agents in `S'` read from `S`, the rest read
/// from outside `S`; agents in both sets, or in neither, keep their own row.
pub fn routing_permutation<T: Scalar>(n: usize, prev: &[usize], next: &[usize]) -> Matrix<T> {
    let mut in_prev = vec![false; n];
    let mut in_next = vec![false; n];
    prev.iter().for_each(|&i| in_prev[i] = true);
    next.iter().for_each(|&i| in_next[i] = true);
    let mut sigma: Vec<usize> = (0..n).collect();
    let entering: Vec<usize> = (0..n).filter(|&i| in_next[i] && !in_prev[i]).collect();
    let leaving: Vec<usize> = (0..n).filter(|&i| in_prev[i] && !in_next[i]).collect();
    for (&a, &b) in entering.iter().zip(&leaving) {
        sigma[a] = b;
        sigma[b] = a;
    }
    Matrix::from_fn(n, n, |i, j| if sigma[i] == j { T::one() } else { T::zero() })
}

/// Draws the next participating set `S'` uniformly without replacement and returns
/// `W = T_{S→S'} W_S` together with `S'` (sorted).
pub fn draw_client_sampling_matrix<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    participation: usize,
    prev_selected: &[usize],
    rng: &mut R,
) -> Result<(Matrix<T>, Vec<usize>)> {
    if participation == 0 || participation > n {
        return Err(Error::InvalidArgument(format!("participation size {participation} not in 1..={n}")));
    }
    if prev_selected.len() != participation || prev_selected.iter().any(|&i| i >= n) {
        return Err(Error::InvalidArgument("previous selection does not match participation size".into()));
    }
    let next = draw_selection(n, participation, rng);
    let w = routing_permutation(n, prev_selected, &next).matmul(&client_block(n, prev_selected));
    Ok((w, next))
}

pub fn draw_selection<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..n).collect();
    let (chosen, _) = all.partial_shuffle(rng, size);
    let mut next = chosen.to_vec();
    next.sort_unstable();
    next
}

/// Aggregation pattern of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum CommPattern<T> {
    FullAverage,
    /// Client sampling with `|S|` participants per aggregation.
    PartialParticipation { size: usize },
    DecentralizedFixed { w: Matrix<T> },
    /// One of the matrices, uniformly at random, at each aggregation.
    DecentralizedTimeVarying { ws: Vec<Matrix<T>> },
}

impl<T: Scalar> CommPattern<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::FullAverage => "full_average",
            Self::PartialParticipation { .. } => "partial_participation",
            Self::DecentralizedFixed { .. } => "decentralized_fixed",
            Self::DecentralizedTimeVarying { .. } => "decentralized_time_varying",
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |w: &Matrix<T>| {
            if w.nrows() != n {
                return Err(Error::SizeMismatch { expected: n, found: w.nrows() });
            }
            check_doubly_stochastic(w)
        };
        match self {
            Self::FullAverage => Ok(()),
            Self::PartialParticipation { size } if *size == 0 || *size > n => {
                Err(Error::InvalidArgument(format!("participation size {size} not in 1..={n}")))
            }
            Self::PartialParticipation { .. } => Ok(()),
            Self::DecentralizedFixed { w } => check(w),
            Self::DecentralizedTimeVarying { ws } if ws.is_empty() => {
                Err(Error::InvalidArgument("time-varying pattern needs at least one matrix".into()))
            }
            Self::DecentralizedTimeVarying { ws } => ws.iter().try_for_each(check),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Self::FullAverage | Self::DecentralizedFixed { .. })
    }
}

/// What the engine applies at one aggregation.
#[derive(Debug)]
pub enum Mixing<'a, T: Clone> {
    /// Replace every row with the average row.
    Average,
    Matrix(std::borrow::Cow<'a, Matrix<T>>),
}

/// Stateful driver that emits the communication matrix at each aggregation.
#[derive(Debug, Clone)]
pub struct Communicator<T> {
    n: usize,
    pattern: CommPattern<T>,
    selected: Vec<usize>,
    rng: StreamRng,
}

impl<T: Scalar> Communicator<T> {
    pub fn new(pattern: CommPattern<T>, n: usize, seed: u64) -> Result<Self> {
        pattern.validate(n)?;
        let mut rng = rng::stream(seed, &[rng::tag::COMMUNICATION]);
        let selected = match pattern {
            CommPattern::PartialParticipation { size } => draw_selection(n, size, &mut rng),
            _ => Vec::new(),
        };
        Ok(Self { n, pattern, selected, rng })
    }

    pub fn pattern(&self) -> &CommPattern<T> {
        &self.pattern
    }

    /// Currently participating agents (partial participation only).
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn next_mixing(&mut self) -> Mixing<'_, T> {
        match &self.pattern {
            CommPattern::FullAverage => Mixing::Average,
            CommPattern::DecentralizedFixed { w } => Mixing::Matrix(std::borrow::Cow::Borrowed(w)),
            CommPattern::DecentralizedTimeVarying { ws } => {
                Mixing::Matrix(std::borrow::Cow::Borrowed(ws.choose(&mut self.rng).expect("non-empty")))
            }
            CommPattern::PartialParticipation { size } => {
                let (w, next) = draw_client_sampling_matrix(self.n, *size, &self.selected, &mut self.rng)
                    .expect("validated participation");
                self.selected = next;
                Mixing::Matrix(std::borrow::Cow::Owned(w))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    /// `‖Ê[WᵀW] − J‖₂`.
    pub norm: f64,
    pub contracting: bool,
    pub draws: usize,
}

/// Spectral norm of the empirical mean of `WᵀW` minus `J` over `draws` matrices.
pub fn verify_contraction<T: Scalar>(pattern: &CommPattern<T>, n: usize, draws: usize, seed: u64) -> Result<ContractionReport> {
    pattern.validate(n)?;
    let draws = if pattern.is_deterministic() { 1 } else { draws.max(1) };
    let mut comm = Communicator::new(pattern.clone(), n, seed)?;
    let mut acc = Matrix::<T>::zeros(n, n);
    for _ in 0..draws {
        let w = match comm.next_mixing() {
            Mixing::Average => full_average(n),
            Mixing::Matrix(w) => w.into_owned(),
        };
        acc = &acc + &w.transpose().matmul(&w);
    }
    let mean = acc.scale(T::one() / T::of_usize(draws));
    let norm = (&mean - &full_average(n)).symmetrize().symmetric_spectral_norm().to_f64_lossy();
    Ok(ContractionReport { norm, contracting: norm < 1.0 - 1e-12, draws })
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntervalSchedule {
    Constant { k: usize },
    /// `K_l = max(1, ⌈ln l⌉)`.
    LogGrowth,
    /// `K_l = max(1, ⌈ln ln l⌉)` for `l ≥ 3`, else 1.
    LogLogGrowth,
}

impl IntervalSchedule {
    /// Interval `K_l` before the `l`-th aggregation, `l ≥ 1`.
    pub fn interval(&self, l: usize) -> usize {
        match *self {
            Self::Constant { k } => k.max(1),
            Self::LogGrowth => (l.max(1) as f64).ln().ceil().max(1.0) as usize,
            Self::LogLogGrowth if l >= 3 => (l as f64).ln().ln().ceil().max(1.0) as usize,
            Self::LogLogGrowth => 1,
        }
    }

    pub fn is_growing(&self) -> bool {
        !matches!(self, Self::Constant { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { k: 0 } => Err(Error::InvalidArgument("constant interval K must be >= 1".into())),
            _ => Ok(()),
        }
    }

    pub fn aggregation_times(&self, horizon: usize) -> AggregationTimes {
        AggregationTimes::new(*self, horizon)
    }
}

/// Aggregation instants `n_l = Σ_{m≤l} K_m` up to a horizon.
#[derive(Debug, Clone)]
pub struct AggregationTimes {
    schedule: IntervalSchedule,
    times: Vec<usize>,
}

impl AggregationTimes {
    fn new(schedule: IntervalSchedule, horizon: usize) -> Self {
        let mut times = Vec::new();
        let mut n = 0;
        for l in 1.. {
            n += schedule.interval(l);
            if n > horizon {
                break;
            }
            times.push(n);
        }
        Self { schedule, times }
    }

    /// `n_1, n_2, …` not exceeding the horizon.
    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn is_aggregation(&self, n: usize) -> bool {
        self.times.binary_search(&n).is_ok()
    }

    /// `τ_n = min{l : n_l ≥ n}`, extending past the horizon when needed.
    pub fn tau(&self, n: usize) -> usize {
        match self.times.binary_search(&n) {
            Ok(i) => i + 1,
            Err(i) if i < self.times.len() => i + 1,
            Err(_) => {
                let mut l = self.times.len();
                let mut t = self.times.last().copied().unwrap_or(0);
                while t < n {
                    l += 1;
                    t += self.schedule.interval(l);
                }
                l
            }
        }
    }

    /// `K_{τ_n}`.
    pub fn interval_at(&self, n: usize) -> usize {
        self.schedule.interval(self.tau(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepSchedule {
    pub gamma_star: f64,
    pub a: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { gamma_star: 1.0, a: 1.0 }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_star > 0.0 && self.gamma_star.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma_star must be positive, got {}", self.gamma_star)));
        }
        if !(self.a > 0.5 && self.a <= 1.0) {
            return Err(Error::InvalidArgument(format!("step exponent a must lie in (0.5, 1], got {}", self.a)));
        }
        Ok(())
    }

    /// `γ_n = γ⋆/(n+1)^a`.
    pub fn step_size(&self, n: usize) -> f64 {
        self.gamma_star / ((n + 1) as f64).powf(self.a)
    }
}

/// Growing intervals are only admissible with `γ_n ∝ 1/n`.
pub fn check_schedule_compatibility(step: &StepSchedule, interval: &IntervalSchedule) -> Result<()> {
    step.validate()?;
    interval.validate()?;
    if interval.is_growing() && step.a != 1.0 {
        return Err(Error::Config(format!("a growing communication interval requires a = 1, got a = {}", step.a)));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScheduleDiagnostics {
    /// `(n, η_n)` on a logarithmic grid of the horizon.
    pub eta: Vec<(usize, f64)>,
    /// `Σ_{k≤n} η_k²` on the same grid.
    pub eta_sq_partial_sums: Vec<(usize, f64)>,
    /// `(l, η_{n_l+1}/η_{n_{l+1}+1})` for every complete aggregation pair.
    pub ratios: Vec<(usize, f64)>,
    /// Ratio for the last complete pair.
    pub final_ratio: f64,
    /// Relative growth of `Σ η²` over the second half of the horizon.
    pub tail_growth: f64,
    pub sum_flagged: bool,
    pub ratio_flagged: bool,
}

/// Numeric check of the step/interval conditions over a finite horizon, with
/// `η_n = γ_n K_{τ_n}^{L+1}`.
pub fn schedule_diagnostics(
    step: &StepSchedule,
    interval: &IntervalSchedule,
    horizon: usize,
    smoothness_exponent: u32,
) -> Result<ScheduleDiagnostics> {
    check_schedule_compatibility(step, interval)?;
    if horizon < 4 {
        return Err(Error::InvalidArgument("diagnostics need horizon >= 4".into()));
    }
    let times = interval.aggregation_times(horizon + interval.interval(usize::MAX / 2).max(64));
    let eta = |n: usize| step.step_size(n) * (times.interval_at(n) as f64).powi(smoothness_exponent as i32 + 1);

    let mut grid: Vec<usize> = Vec::new();
    let mut g = 1.0f64;
    while (g as usize) < horizon {
        grid.push(g as usize);
        g *= 1.25;
    }
    grid.push(horizon);
    grid.dedup();

    let mut eta_grid = Vec::new();
    let mut sums = Vec::new();
    let mut partial = 0.0;
    let mut half_sum = 0.0;
    let mut next = 0;
    for n in 1..=horizon {
        let e = eta(n);
        partial += e * e;
        if n == horizon / 2 {
            half_sum = partial;
        }
        if next < grid.len() && grid[next] == n {
            eta_grid.push((n, e));
            sums.push((n, partial));
            next += 1;
        }
    }
    let ratios: Vec<(usize, f64)> = times
        .times()
        .windows(2)
        .enumerate()
        .take_while(|(_, w)| w[1] < horizon)
        .map(|(i, w)| (i + 1, eta(w[0] + 1) / eta(w[1] + 1)))
        .collect();
    let final_ratio = ratios.last().map_or(1.0, |r| r.1);
    let tail_growth = (partial - half_sum) / partial;
    Ok(ScheduleDiagnostics {
        eta: eta_grid,
        eta_sq_partial_sums: sums,
        ratios,
        final_ratio,
        tail_growth,
        sum_flagged: tail_growth > 0.05,
        ratio_flagged: !(0.9..=1.1).contains(&final_ratio),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    #[test]
    fn mh_on_path_and_small_graphs() {
        let w: Matrix<f64> = mh_matrix(&Graph::path(3).unwrap());
        assert_eq!(w, Matrix::from_f64_rows(&[&[0.5, 0.5, 0.0], &[0.5, 0.0, 0.5], &[0.0, 0.5, 0.5]]));
        check_doubly_stochastic(&w).unwrap();

        let w2: Matrix<f64> = mh_matrix(&Graph::complete(2).unwrap());
        assert_eq!(w2, Matrix::from_f64_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert_abs_diff_eq!(second_eigen_modulus(&w2), 1.0, epsilon = 1e-12);

        let w4: Matrix<f64> = mh_matrix(&Graph::ring(4).unwrap());
        for i in 0..4 {
            assert_eq!(w4[(i, i)], 0.0);
            assert_eq!(w4.row(i).iter().filter(|&&v| v == 0.5).count(), 2);
        }
    }

    #[test]
    fn full_average_properties() {
        assert_eq!(full_average::<f64>(2), Matrix::from_f64_rows(&[&[0.5, 0.5], &[0.5, 0.5]]));
        assert_eq!(full_average::<f64>(1), Matrix::identity(1));
        let j = full_average::<f64>(4);
        assert_eq!((&j.transpose().matmul(&j) - &j).max_abs(), 0.0);
    }

    #[test]
    fn client_sampling_examples() {
        let ws: Matrix<f64> = client_block(3, &[0, 1]);
        assert_eq!(ws, Matrix::from_f64_rows(&[&[0.5, 0.5, 0.0], &[0.5, 0.5, 0.0], &[0.0, 0.0, 1.0]]));
        assert_eq!(routing_permutation::<f64>(3, &[0, 1], &[0, 1]), Matrix::identity(3));

        let mut rng = StreamRng::seed_from_u64(1);
        let (w, next): (Matrix<f64>, _) = draw_client_sampling_matrix(3, 3, &[0, 1, 2], &mut rng).unwrap();
        assert_eq!(next, vec![0, 1, 2]);
        assert!((&w - &full_average(3)).max_abs() < 1e-15);

        let (w1, _): (Matrix<f64>, _) = draw_client_sampling_matrix(4, 1, &[2], &mut rng).unwrap();
        assert!(w1.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
        check_doubly_stochastic(&w1).unwrap();

        assert!(draw_client_sampling_matrix::<f64, _>(3, 0, &[], &mut rng).is_err());
        assert!(draw_client_sampling_matrix::<f64, _>(3, 4, &[0, 1, 2, 3], &mut rng).is_err());
    }

    #[test]
    fn client_sampling_routes_the_average_and_is_a_projection() {
        let mut rng = StreamRng::seed_from_u64(7);
        let mut prev = vec![0, 2, 5];
        for _ in 0..200 {
            let (w, next): (Matrix<f64>, _) = draw_client_sampling_matrix(7, 3, &prev, &mut rng).unwrap();
            check_doubly_stochastic(&w).unwrap();
            let wtw = w.transpose().matmul(&w);
            let ws = client_block::<f64>(7, &prev);
            assert!((&wtw - &ws).max_abs() < 1e-15);
            let x: Vec<f64> = (0..7).map(|i| (i * i) as f64).collect();
            let y = w.matvec(&x);
            let avg = prev.iter().map(|&i| x[i]).sum::<f64>() / 3.0;
            for &i in &next {
                assert_abs_diff_eq!(y[i], avg, epsilon = 1e-12);
            }
            prev = next;
        }
    }

    #[test]
    fn aggregation_schedule_examples() {
        let t = IntervalSchedule::Constant { k: 1 }.aggregation_times(5);
        assert_eq!(t.times(), &[1, 2, 3, 4, 5]);
        assert_eq!(IntervalSchedule::LogGrowth.interval(1), 1);
        assert_eq!(IntervalSchedule::LogGrowth.interval(3), 2);
        assert_eq!(IntervalSchedule::LogLogGrowth.interval(2), 1);
        assert_eq!(IntervalSchedule::LogLogGrowth.interval(16), 2);
        let t5 = IntervalSchedule::Constant { k: 5 }.aggregation_times(12);
        assert_eq!(t5.times(), &[5, 10]);
        assert_eq!(t5.tau(7), 2);
        assert_eq!(t5.tau(11), 3);
        assert_eq!(t5.tau(0), 1);
    }

    #[test]
    fn tau_of_aggregation_time_is_its_index() {
        for s in [IntervalSchedule::Constant { k: 3 }, IntervalSchedule::LogGrowth, IntervalSchedule::LogLogGrowth] {
            let t = s.aggregation_times(5_000);
            for (l, &n) in t.times().iter().enumerate() {
                assert_eq!(t.tau(n), l + 1);
            }
            assert!(t.times().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn step_sizes() {
        let s = StepSchedule { gamma_star: 1.0, a: 1.0 };
        assert_eq!(s.step_size(0), 1.0);
        let s = StepSchedule { gamma_star: 1.0, a: 0.75 };
        assert_abs_diff_eq!(s.step_size(15), 0.125, epsilon = 1e-15);
        assert!((0..1000).all(|n| s.step_size(n + 1) < s.step_size(n)));
        assert!(StepSchedule { gamma_star: 1.0, a: 0.5 }.validate().is_err());
        assert!(StepSchedule { gamma_star: 0.0, a: 1.0 }.validate().is_err());
    }

    #[test]
    fn contraction_examples() {
        let full = verify_contraction::<f64>(&CommPattern::FullAverage, 5, 10, 0).unwrap();
        assert!(full.norm.abs() < 1e-14 && full.contracting);

        // Eigenvalues of the path-3 MH matrix are 1, 1/2, −1/2 (characteristic
        // polynomial (1 − λ)(λ² − 1/4)), so λ₂² = 1/4.
        let w = mh_matrix::<f64>(&Graph::path(3).unwrap());
        let eig = w.symmetric_eigen();
        assert_abs_diff_eq!(eig.values[0], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 0.5, epsilon = 1e-12);
        let rep = verify_contraction(&CommPattern::DecentralizedFixed { w }, 3, 1, 0).unwrap();
        assert_abs_diff_eq!(rep.norm, 0.25, epsilon = 1e-12);

        let w2 = mh_matrix::<f64>(&Graph::complete(2).unwrap());
        let rep = verify_contraction(&CommPattern::DecentralizedFixed { w: w2 }, 2, 1, 0).unwrap();
        assert!(!rep.contracting);

        let pp = verify_contraction::<f64>(&CommPattern::PartialParticipation { size: 2 }, 3, 2000, 1).unwrap();
        assert!(pp.contracting && pp.norm < 0.6);
        let single = verify_contraction::<f64>(&CommPattern::PartialParticipation { size: 1 }, 3, 100, 1).unwrap();
        assert_abs_diff_eq!(single.norm, 1.0, epsilon = 1e-12);
        assert!(!single.contracting);
    }

    #[test]
    fn pattern_validation() {
        let bad = Matrix::<f64>::from_f64_rows(&[&[0.9, 0.2], &[0.1, 0.8]]);
        assert!(CommPattern::DecentralizedFixed { w: bad }.validate(2).is_err());
        assert!(CommPattern::<f64>::PartialParticipation { size: 4 }.validate(3).is_err());
        assert!(CommPattern::<f64>::DecentralizedTimeVarying { ws: vec![] }.validate(3).is_err());
        let w = mh_matrix::<f64>(&Graph::ring(5).unwrap());
        assert!(CommPattern::DecentralizedFixed { w }.validate(4).is_err());
    }

    #[test]
    fn diagnostics_constant_interval() {
        let d = schedule_diagnostics(
            &StepSchedule { gamma_star: 1.0, a: 0.8 },
            &IntervalSchedule::Constant { k: 4 },
            100_000,
            1,
        )
        .unwrap();
        assert!(!d.sum_flagged, "tail growth {}", d.tail_growth);
        let s = &d.eta_sq_partial_sums;
        assert!(s.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn diagnostics_reject_growing_interval_with_slow_decay() {
        let err = schedule_diagnostics(&StepSchedule { gamma_star: 1.0, a: 0.6 }, &IntervalSchedule::LogGrowth, 1000, 1)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn diagnostics_log_growth_tail_ratio() {
        let d = schedule_diagnostics(&StepSchedule { gamma_star: 1.0, a: 1.0 }, &IntervalSchedule::LogGrowth, 100_000, 1)
            .unwrap();
        // Direct evaluation: between jumps of ⌈ln l⌉ the ratio is (n_{l+1}+2)/(n_l+2) ≈ 1.
        assert!((0.9..=1.1).contains(&d.final_ratio), "final ratio {}", d.final_ratio);
        assert!(!d.ratio_flagged);
    }
}
