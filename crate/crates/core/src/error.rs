use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("generating function violates the twist condition: d12h = {value} at ({x}, {x_next})")]
    TwistViolated { x: f64, x_next: f64, value: f64 },

    #[error("mixed partial d12h vanishes on the orbit at site {site}")]
    DegenerateTwist { site: usize },

    #[error("no start converged for rotation number {p}/{q}")]
    NoConvergence { p: i64, q: i64 },

    #[error("every critical point found for {p}/{q} has an indefinite second variation")]
    SaddleOnly { p: i64, q: i64 },

    #[error("minimizers of {p}/{q} form a continuous family; no gap to cross")]
    DegenerateFamily { p: i64, q: i64 },

    #[error("beta table is empty")]
    EmptyTable,

    #[error("locking interval of {p}/{q} overlaps its predecessor by {overlap:e}")]
    OverlapDetected { p: i64, q: i64, overlap: f64 },

    #[error("flatness term at {p}/{q} is negative ({value:e}); beta table is not convex there")]
    NonconvexTerm { p: i64, q: i64, value: f64 },

    #[error("{needed} samples required, {found} available")]
    InsufficientSamples { needed: usize, found: usize },

    #[error("u(delta) = {value:e} < 0 at delta = {delta}; beta or c_plus inconsistent")]
    NegativeU { delta: f64, value: f64 },

    #[error("right derivative at {p}/{q} not resolved below {target:e} (bracket {width:e})")]
    UncertifiedDerivative { p: i64, q: i64, width: f64, target: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration store: {0}")]
    Store(String),
}

pub type Result<T> = std::result::Result<T, Error>;
