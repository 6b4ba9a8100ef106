use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("degenerate kernel factor: variance {0:e} is not a positive finite number")]
    DegenerateVariance(f64),

    #[error("kernel graph does not tie variable z{0} to a fixed endpoint; the integral diverges")]
    Disconnected(usize),

    #[error("precision matrix is not positive definite (pivot {pivot} = {value:e})")]
    SingularPrecision { pivot: usize, value: f64 },

    #[error("branch times {0:?} are not interior to the ordered simplex")]
    NotInterior(Vec<f64>),

    #[error("integrand returned non-finite value {value} at s = {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("moment order {n} exceeds the configured cap {cap}")]
    OrderCap { n: usize, cap: usize },

    #[error("quadrature failed for triple #{index} of J_({n},{n_prime}): {source}")]
    Triple {
        n: usize,
        n_prime: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("{aborted} of {replicates} replicates hit the population cap (limit 1%)")]
    TooManyAborted { aborted: usize, replicates: usize },

    #[error("domain violation: {0}")]
    Domain(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
