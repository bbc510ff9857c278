//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed row in a CSV input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Time column is not a uniform grid, or grid constraints violated.
    #[error("grid error: {0}")]
    Grid(String),

    /// Signal-level constraint violated (span, periodicity consistency).
    #[error("signal error: {0}")]
    Signal(String),

    /// Non-finite value produced by a numeric routine.
    #[error("numeric error{}: {msg}", index.map(|i| format!(" at grid index {i}")).unwrap_or_default())]
    Numeric { index: Option<usize>, msg: String },

    /// Model evaluation hit a singularity (e.g. a vanishing denominator).
    #[error("domain error at grid index {index}: {what}")]
    Domain { what: String, index: usize },

    /// The auxiliary subsystem is not contracting over one period.
    #[error("q-subsystem component {component} is not stable over one period (integral of alpha = {integral})")]
    QUnstable { component: usize, integral: f64 },

    /// 1 - exp(A(T)) is numerically zero; the periodic initial condition is undefined.
    #[error("q-subsystem component {component} has a singular period map (|1 - exp(A(T))| = {magnitude:.3e})")]
    SingularPeriod { component: usize, magnitude: f64 },

    /// I - Phi(t0+T, t0) is numerically singular.
    #[error("integral representation unavailable: I - Phi_T is singular (min singular value {min_singular:.3e})")]
    RepresentationUnavailable { min_singular: f64 },

    /// Observer gain vector fails a stability requirement.
    #[error("observer gains invalid: {0}")]
    Gains(String),

    /// Bad run configuration or CLI usage.
    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 usage, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::Parse { .. } | Error::Grid(_) | Error::Signal(_) | Error::Io(_) => 3,
            _ => 4,
        }
    }
}
