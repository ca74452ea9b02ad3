//! Closed-form CLT quantities: `U_i`, `U`, `M`, `V`, `V'` and their comparison
//! against ensemble statistics.

use std::io::{self, Write};

use crate::communication::StepSchedule;
use crate::engine::{write_matrix_block, CheckpointStats};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::markov::{self, loewner_compare_detailed, FunctionTable, LoewnerOrder};
use crate::problems::Problem;
use crate::sampling::SamplerSpec;
use crate::scalar::Scalar;

/// Rows `w(x)·∇F_i(θ*, x)` over the agent's local data.
pub fn gradient_table<T: Scalar>(
    problem: &Problem<T>,
    agent: usize,
    spec: &SamplerSpec,
    theta_star: &[T],
) -> Result<FunctionTable<T>> {
    let b = problem.agent_size(agent);
    let d = problem.dim();
    let mut g = Matrix::zeros(b, d);
    for x in 0..b {
        let w = T::of(spec.weight(b, x));
        problem.add_sample_grad(agent, theta_star, x, w, g.row_mut(x));
    }
    FunctionTable::new(g)
}

/// `U_i = Σ_{X^i}(w·∇F_i(θ*, ·))` in closed form. Shuffling and SRRW yield
/// [`Error::KernelUnavailable`]; use [`agent_u_mc`] for them.
pub fn agent_u<T: Scalar>(problem: &Problem<T>, agent: usize, spec: &SamplerSpec, theta_star: &[T]) -> Result<Matrix<T>> {
    let chain = spec.explicit_chain::<T>(problem.agent_size(agent))?;
    chain.asymptotic_covariance(&gradient_table(problem, agent, spec, theta_star)?)
}

/// Monte-Carlo `U_i` for samplers without a finite kernel.
pub fn agent_u_mc<T: Scalar>(
    problem: &Problem<T>,
    agent: usize,
    spec: &SamplerSpec,
    theta_star: &[T],
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<markov::McEstimate<T>> {
    let g = gradient_table(problem, agent, spec, theta_star)?;
    markov::asymptotic_covariance_mc(&spec.source(problem.agent_size(agent)), &g, horizon, trials, seed)
}

/// `U = (1/N²)·Σ_i U_i`.
pub fn system_u<T: Scalar>(us: &[Matrix<T>]) -> Result<Matrix<T>> {
    let first = us.first().ok_or_else(|| Error::InvalidArgument("no agent covariances".into()))?;
    let d = first.nrows();
    let mut total = Matrix::zeros(d, d);
    for u in us {
        if u.nrows() != d || u.ncols() != d {
            return Err(Error::DimensionMismatch(format!("U_i is {}x{}, expected {d}x{d}", u.nrows(), u.ncols())));
        }
        total = &total + u;
    }
    let n = T::of_usize(us.len());
    Ok(total.scale(T::one() / (n * n)))
}

/// `M = −H` for `a < 1`, `M = I/(2γ*) − H` for `a = 1`.
pub fn drift_matrix<T: Scalar>(h: &Matrix<T>, step: &StepSchedule) -> Result<Matrix<T>> {
    step.validate()?;
    let mu = h.symmetric_eigen().min();
    if !(mu > T::zero()) {
        return Err(Error::NotPositiveDefinite(format!("H has eigenvalue {}", mu.to_f64_lossy())));
    }
    let m = if step.a < 1.0 {
        -h
    } else {
        let shift = T::of(0.5 / step.gamma_star);
        &Matrix::identity(h.nrows()).scale(shift) - h
    };
    let top = m.symmetrize().symmetric_eigen().max();
    if !(top < T::zero()) {
        return Err(Error::NotHurwitz {
            eigenvalue: top.to_f64_lossy(),
            detail: format!(
                "a = 1 requires gamma_star > 1/(2 mu) = {}, got {}",
                0.5 / mu.to_f64_lossy(),
                step.gamma_star
            ),
        });
    }
    Ok(m)
}

/// `(I⊗M + M⊗I)` acting on row-major `vec(V)`, i.e. `V ↦ MV + VMᵀ`.
fn lyapunov_operator<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let d = m.nrows();
    let mut k = Matrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            let row = i * d + j;
            for l in 0..d {
                k[(row, l * d + j)] = k[(row, l * d + j)] + m[(i, l)];
                k[(row, i * d + l)] = k[(row, i * d + l)] + m[(j, l)];
            }
        }
    }
    k
}

fn solve_lyapunov_raw<T: Scalar>(m: &Matrix<T>, u: &Matrix<T>) -> Result<Matrix<T>> {
    let d = m.nrows();
    let k = lyapunov_operator(m);
    let lu = k.lu()?;
    let rhs: Vec<T> = u.as_slice().iter().map(|&v| -v).collect();
    let mut x = lu.solve(&rhs);
    // One round of iterative refinement.
    let kx = k.matvec(&x);
    let r: Vec<T> = rhs.iter().zip(&kx).map(|(&b, &a)| b - a).collect();
    for (xi, ci) in x.iter_mut().zip(lu.solve(&r)) {
        *xi = *xi + ci;
    }
    Ok(Matrix::from_vec(d, d, x)?.symmetrize())
}

/// `‖MV + VMᵀ + U‖_F`.
pub fn lyapunov_residual<T: Scalar>(m: &Matrix<T>, v: &Matrix<T>, u: &Matrix<T>) -> T {
    let mv = m.matmul(v);
    (&(&mv + &v.matmul(&m.transpose())) + u).frobenius_norm()
}

/// Checks that `M` is Hurwitz. Symmetric `M` is tested through its eigenvalues;
/// otherwise through positive definiteness of the solution of `MX + XMᵀ = −I`.
pub fn check_hurwitz<T: Scalar>(m: &Matrix<T>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!("M is {}x{}", m.nrows(), m.ncols())));
    }
    let scale = T::one() + m.max_abs();
    if m.is_symmetric(T::tol(1e-12) * scale) {
        let top = m.symmetric_eigen().max();
        return if top < T::zero() {
            Ok(())
        } else {
            Err(Error::NotHurwitz { eigenvalue: top.to_f64_lossy(), detail: "largest eigenvalue of M".into() })
        };
    }
    let not_hurwitz = |ev: T| Error::NotHurwitz {
        eigenvalue: ev.to_f64_lossy(),
        detail: "MX + XMᵀ = −I has no positive definite solution".into(),
    };
    let x = solve_lyapunov_raw(m, &Matrix::identity(m.nrows())).map_err(|_| not_hurwitz(T::zero()))?;
    let lo = x.symmetric_eigen().min();
    if lo > T::zero() && x.all_finite() {
        Ok(())
    } else {
        Err(not_hurwitz(lo))
    }
}

/// Solves `MV + VMᵀ = −U` through the Kronecker system.
pub fn lyapunov_solve<T: Scalar>(m: &Matrix<T>, u: &Matrix<T>) -> Result<Matrix<T>> {
    if !m.is_square() || u.nrows() != m.nrows() || !u.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "M is {}x{}, U is {}x{}",
            m.nrows(),
            m.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    check_hurwitz(m)?;
    solve_lyapunov_raw(m, u)
}

/// Composite trapezoid rule for `∫₀^T e^{Mt}Ue^{Mᵀt}dt` on `K = ⌈T/dt⌉` panels.
///
/// The node sum `Σ_{k≤K} E^k U E^{kᵀ}` with `E = e^{M·dt}` is accumulated by
/// binary doubling, so the cost is logarithmic in `K`.
pub fn integral_check<T: Scalar>(m: &Matrix<T>, u: &Matrix<T>, t_end: T, dt: T) -> Matrix<T> {
    let d = m.nrows();
    let panels = (t_end / dt).ceil().to_usize().unwrap_or(1).max(1);
    let h = t_end / T::of_usize(panels);
    let e = m.scale(h).expm();
    // Σ_{k<K} E^k U E^{kᵀ} via the binary expansion of K; `offset` ends at E^K.
    let mut acc = Matrix::zeros(d, d);
    let mut offset = Matrix::identity(d);
    let mut block_sum = u.clone();
    let mut block_pow = e;
    let mut bits = panels;
    while bits > 0 {
        if bits & 1 == 1 {
            acc = &acc + &offset.matmul(&block_sum).matmul(&offset.transpose());
            offset = offset.matmul(&block_pow);
        }
        bits >>= 1;
        if bits > 0 {
            block_sum = &block_sum + &block_pow.matmul(&block_sum).matmul(&block_pow.transpose());
            block_pow = block_pow.matmul(&block_pow);
        }
    }
    let last = offset.matmul(u).matmul(&offset.transpose());
    let ends = (&last - u).scale(T::of(0.5));
    (&acc + &ends).scale(h).symmetrize()
}

/// Smallest `T` (by doubling from 1) with `‖e^{MT}‖_F < tol`.
pub fn decay_horizon<T: Scalar>(m: &Matrix<T>, tol: T) -> T {
    let mut t = T::one();
    for _ in 0..60 {
        if m.scale(t).expm().frobenius_norm() < tol {
            return t;
        }
        t = t + t;
    }
    t
}

/// `V' = H⁻¹UH⁻¹`.
pub fn pr_covariance<T: Scalar>(h: &Matrix<T>, u: &Matrix<T>) -> Result<Matrix<T>> {
    let hinv = h.inverse()?;
    Ok(hinv.matmul(u).matmul(&hinv).symmetrize())
}

/// `γ_n·Tr(V)`.
pub fn predicted_mse<T: Scalar>(v: &Matrix<T>, step: &StepSchedule, n: usize) -> f64 {
    step.step_size(n) * v.trace().to_f64_lossy()
}

#[derive(Debug, Clone)]
pub struct CovarianceReport<T> {
    pub agent_u: Vec<Matrix<T>>,
    pub u: Matrix<T>,
    pub h: Matrix<T>,
    pub mu: T,
    pub m: Matrix<T>,
    pub v: Matrix<T>,
    pub v_prime: Matrix<T>,
    pub trace_v: T,
    pub trace_v_prime: T,
    pub step: StepSchedule,
}

impl<T: Scalar> CovarianceReport<T> {
    pub fn new(agent_u: Vec<Matrix<T>>, h: Matrix<T>, step: StepSchedule) -> Result<Self> {
        let u = system_u(&agent_u)?;
        if u.nrows() != h.nrows() {
            return Err(Error::DimensionMismatch(format!("U has dimension {}, H has {}", u.nrows(), h.nrows())));
        }
        let mu = h.symmetric_eigen().min();
        let m = drift_matrix(&h, &step)?;
        let v = lyapunov_solve(&m, &u)?;
        let v_prime = pr_covariance(&h, &u)?;
        Ok(Self { trace_v: v.trace(), trace_v_prime: v_prime.trace(), agent_u, u, h, mu, m, v, v_prime, step })
    }

    /// Closed-form report for samplers with explicit kernels.
    pub fn closed_form(
        problem: &Problem<T>,
        samplers: &[SamplerSpec],
        theta_star: &[T],
        h: Matrix<T>,
        step: StepSchedule,
    ) -> Result<Self> {
        if samplers.len() != problem.num_agents() {
            return Err(Error::SizeMismatch { expected: problem.num_agents(), found: samplers.len() });
        }
        let us = samplers
            .iter()
            .enumerate()
            .map(|(i, s)| agent_u(problem, i, s, theta_star))
            .collect::<Result<Vec<_>>>()?;
        Self::new(us, h, step)
    }

    pub fn predicted_mse(&self, n: usize) -> f64 {
        predicted_mse(&self.v, &self.step, n)
    }

    pub fn lyapunov_residual(&self) -> T {
        lyapunov_residual(&self.m, &self.v, &self.u)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for (i, u) in self.agent_u.iter().enumerate() {
            write_matrix_block(out, &format!("U_{i}"), u)?;
        }
        for (name, m) in [("U", &self.u), ("H", &self.h), ("M", &self.m), ("V", &self.v), ("V_prime", &self.v_prime)] {
            write_matrix_block(out, name, m)?;
        }
        Ok(())
    }

    /// Names of the blocks written by [`Self::write_csv`], in order.
    pub fn manifest(&self) -> Vec<String> {
        (0..self.agent_u.len())
            .map(|i| format!("U_{i}"))
            .chain(["U", "H", "M", "V", "V_prime"].map(String::from))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub predicted_mse: f64,
    pub empirical_mse: f64,
    pub predicted_trace: f64,
    pub empirical_trace: f64,
    pub empirical_trace_se: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<TraceRow>,
    /// `Ĉ_n − V` at the final checkpoint.
    pub entry_difference: Matrix<f64>,
}

impl Comparison {
    pub fn terminal(&self) -> &TraceRow {
        self.rows.last().expect("at least one checkpoint")
    }

    pub const HEADER: &'static str =
        "n,predicted_mse,empirical_mse,predicted_trace,empirical_trace,empirical_trace_se,relative_error";

    pub fn write_rows<W: Write>(&self, out: &mut W) -> io::Result<()> {
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                r.predicted_mse,
                r.empirical_mse,
                r.predicted_trace,
                r.empirical_trace,
                r.empirical_trace_se,
                r.relative_error
            )?;
        }
        Ok(())
    }
}

/// Predicted `Tr(V)` against the ensemble's `Tr(Ĉ_n)` at every checkpoint.
pub fn compare<T: Scalar>(report: &CovarianceReport<T>, stats: &[CheckpointStats]) -> Result<Comparison> {
    let last = stats.last().ok_or_else(|| Error::InvalidArgument("no checkpoints to compare".into()))?;
    let d = report.v.nrows();
    if last.scaled_cov.nrows() != d {
        return Err(Error::DimensionMismatch(format!("V has dimension {d}, ensemble {}", last.scaled_cov.nrows())));
    }
    let tv = report.trace_v.to_f64_lossy();
    let rows = stats
        .iter()
        .map(|s| {
            let et = s.scaled_cov.trace();
            TraceRow {
                n: s.n,
                predicted_mse: report.predicted_mse(s.n),
                empirical_mse: s.mse.mean,
                predicted_trace: tv,
                empirical_trace: et,
                empirical_trace_se: s.scaled_cov_trace_se,
                relative_error: (et - tv) / tv,
            }
        })
        .collect();
    let v64: Matrix<f64> = report.v.cast();
    Ok(Comparison { rows, entry_difference: &last.scaled_cov - &v64 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoewnerVerdict {
    pub order: LoewnerOrder,
    /// Extreme eigenvalues of `A − B`.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

pub fn loewner_verdict<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, tol: T) -> Result<LoewnerVerdict> {
    let (order, lo, hi) = loewner_compare_detailed(a, b, tol)?;
    Ok(LoewnerVerdict { order, min_eigenvalue: lo.to_f64_lossy(), max_eigenvalue: hi.to_f64_lossy() })
}
