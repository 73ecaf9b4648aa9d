//! Crate-wide error type.
//!
//! Every failure carries a stable machine-readable category (used by the CLI
//! for exit codes and by sweep logs for failure tags) alongside a
//! human-readable message.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad dimensions, unknown tags, inconsistent
    /// shapes, malformed config files.
    #[error("configuration error: {0}")]
    Config(String),

    /// A documented precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite or out-of-domain numeric input where finite values are
    /// required.
    #[error("numeric-domain error: {0}")]
    NumericDomain(String),

    /// A probability mass collapsed to zero where positive mass is required.
    #[error("degenerate support: {0}")]
    DegenerateSupport(String),

    /// Successive quadrature refinements failed to agree.
    #[error("quadrature non-convergence: {0}")]
    QuadratureNonConvergence(String),

    /// An internal numerical identity failed beyond tolerance (e.g. a bound
    /// evaluated negative).
    #[error("numerical-integrity error: {0}")]
    NumericalIntegrity(String),

    /// A brute-force enumeration was refused because the space is too large.
    #[error("space too large: {0}")]
    SpaceTooLarge(String),

    /// Fisher information requested at a point where the law is singular.
    #[error("singularity: {0}")]
    Singularity(String),

    /// Filesystem or serialization failure while reading/writing artifacts.
    #[error("I/O error: {0}")]
    Io(String),

    /// An artifact selection (metric subset, sweep slice) matched nothing.
    #[error("empty selection: {0}")]
    EmptySelection(String),
}

impl Error {
    /// Stable machine-readable category tag.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::NumericDomain(_) => "numeric-domain",
            Error::DegenerateSupport(_) => "degenerate-support",
            Error::QuadratureNonConvergence(_) => "quadrature-non-convergence",
            Error::NumericalIntegrity(_) => "numerical-integrity",
            Error::SpaceTooLarge(_) => "space-too-large",
            Error::Singularity(_) => "singularity",
            Error::Io(_) => "io",
            Error::EmptySelection(_) => "empty-selection",
        }
    }

    /// Process exit code associated with the category (0 is success; 1 is
    /// reserved for unexpected panics).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Contract(_) => 3,
            Error::NumericDomain(_) => 4,
            Error::DegenerateSupport(_) => 5,
            Error::QuadratureNonConvergence(_) => 6,
            Error::NumericalIntegrity(_) => 7,
            Error::SpaceTooLarge(_) => 8,
            Error::Singularity(_) => 9,
            Error::Io(_) => 10,
            Error::EmptySelection(_) => 11,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
