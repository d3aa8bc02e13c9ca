use thiserror::Error;

/// Unified error type for every fallible operation in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chart mismatch: expected `{expected}`, got `{got}`")]
    ChartMismatch { expected: String, got: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point outside the declared support: {0}")]
    OutsideSupport(String),

    #[error("jacobian is singular or non-finite at the evaluation point")]
    SingularJacobian,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("domain error evaluating `{expr}`: {msg}")]
    EvalDomain { expr: String, msg: String },

    #[error("unknown variable `{0}` for the supplied evaluation context")]
    UnknownVariable(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("iteration failed to converge: {0}")]
    NoConvergence(String),

    #[error("geodesic left the declared support at arc length {arc_length}")]
    SupportBoundary { arc_length: f64 },

    #[error("boundary-value solve did not converge: residual {residual:.3e}")]
    BvpDiverged { residual: f64 },

    #[error("mode search failed: {0}")]
    ModeSearch(String),

    #[error("two covariant-divergence routes disagree: {left:.6e} vs {right:.6e}")]
    DivergenceMismatch { left: f64, right: f64 },

    #[error("first-order condition fails at the supplied state: {0}")]
    Stationarity(String),

    #[error("unknown family id `{0}`")]
    UnknownFamily(String),

    #[error("family self-check failed: {0}")]
    FamilyGate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("statistical suite failure: {0}")]
    SuiteFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
