use thiserror::Error;

/// Broad failure classes, used by front ends to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numeric,
    ResourceCap,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("overflow in {context}; try a smaller zeta or a narrower integrand")]
    Overflow { context: String },

    #[error("negative second moment {value:e} under the square root for beta")]
    NegativeVariance { value: f64 },

    #[error("{what} did not converge after {iterations} iterations (best value {best})")]
    NoConvergence { what: &'static str, iterations: usize, best: f64 },

    #[error("state space of {states} configurations exceeds the enumeration cap {cap}; use metropolis_sample")]
    StateSpaceTooLarge { states: f64, cap: u64 },

    #[error("the overlap grid does not intersect the constraint set")]
    EmptyConstraintGrid,

    #[error("channel has no sampler for its data-generating law")]
    NoSampler,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidPrior(_)
            | Error::InvalidArgument(_)
            | Error::InvalidChannel(_)
            | Error::EmptyConstraintGrid
            | Error::NoSampler
            | Error::Json(_) => ErrorCategory::Config,
            Error::StateSpaceTooLarge { .. } => ErrorCategory::ResourceCap,
            Error::Io(_) => ErrorCategory::ResourceCap,
            Error::NonFinite(_)
            | Error::Overflow { .. }
            | Error::NegativeVariance { .. }
            | Error::NoConvergence { .. } => ErrorCategory::Numeric,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
