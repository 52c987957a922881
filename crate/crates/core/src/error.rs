use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A closed-form expression was evaluated outside its domain (e.g. a
    /// square root of a negative number).
    #[error("domain error: {0}")]
    Domain(String),

    /// Pore parameters violate the unit-cell constraints.
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// A conditional prior interval has no mass for the given hyperparameters.
    #[error("empty support for {param}: upper bound {upper} <= lower bound {lower}")]
    EmptySupport {
        param: &'static str,
        lower: f64,
        upper: f64,
    },

    /// A value lies outside the support of the prior being inverted.
    #[error("out of support: {0}")]
    OutOfSupport(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("pore space is disconnected ({components} fluid components)")]
    DisconnectedPore { components: usize },

    #[error("rank-deficient least-squares design (condition number {condition:e})")]
    RankDeficient { condition: f64 },

    #[error("forward solve failed for sample {index}: {source}")]
    ForwardFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} forward solves failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Constraint(_) => "constraint",
            Error::EmptySupport { .. } => "empty_support",
            Error::OutOfSupport(_) => "out_of_support",
            Error::Degenerate(_) => "degenerate",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonConvergence { .. } => "non_convergence",
            Error::DisconnectedPore { .. } => "disconnected_pore",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::ForwardFailure { .. } => "forward_failure",
            Error::TooManyFailures { .. } => "too_many_failures",
            Error::ZeroVariance(_) => "zero_variance",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
