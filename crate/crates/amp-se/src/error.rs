use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("snr must be nonnegative, got {0}")]
    NegativeSnr(f64),

    #[error("quadrature did not converge: {nodes} nodes gave {value}, {nodes2} nodes gave {value2}")]
    QuadratureDivergence {
        nodes: usize,
        value: f64,
        nodes2: usize,
        value2: f64,
    },

    #[error("coupling matrix violation: {0}")]
    CouplingViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix of {rows}x{cols} entries exceeds the memory cap of {cap} entries")]
    MemoryCap { rows: usize, cols: usize, cap: usize },

    #[error("zero denominator in Q computation for column group {column}")]
    ZeroQDenominator { column: usize },

    #[error("phi[{index}] = {value}; state-evolution variances must be positive and finite")]
    InvalidPhi { index: usize, value: f64 },

    #[error("orbit diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("covariance matrix is not positive semidefinite: eigenvalue {eigenvalue}")]
    NotPsd { eigenvalue: f64 },

    #[error("jacobian mismatch at row {row}: analytic {analytic} vs finite-difference {numeric}")]
    JacobianMismatch { row: usize, analytic: f64, numeric: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("equivalence check failed: max deviation {deviation} at (index {index}, t {t})")]
    EquivalenceFailed { deviation: f64, index: usize, t: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
