use thiserror::Error;

/// Errors raised by graph construction, chain analysis, problems and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("self-loop on node {0}")]
    SelfLoop(usize),

    #[error("graph generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("matrix is singular or numerically rank deficient")]
    Singular,

    #[error("chain is not ergodic: {0}")]
    NonErgodic(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("insufficient data: {points} points for {agents} agents")]
    InsufficientData { points: usize, agents: usize },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("Newton iteration did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("drift matrix is not Hurwitz: eigenvalue {eigenvalue} ({detail})")]
    NotHurwitz { eigenvalue: f64, detail: String },

    #[error("iterate diverged at step {step}, agent {agent}: norm {norm:e}")]
    Divergence { step: usize, agent: usize, norm: f64 },

    #[error("no closed-form kernel for {0} sampling; use the Monte-Carlo estimator")]
    KernelUnavailable(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
