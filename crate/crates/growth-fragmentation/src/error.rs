use thiserror::Error;

/// Failure modes of the solver library.
///
/// The CLI maps these onto distinct exit codes, so variants are grouped by
/// what the caller can do about them rather than by the module they arise in.
#[derive(Debug, Error)]
pub enum Error {
    /// Input value outside the mathematical domain of an evaluation
    /// (negative size, nonpositive mother size, extrapolation without a
    /// declared tail).
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid configuration: bad parameter ranges, malformed
    /// problem files, unusable grids.
    #[error("configuration error: {0}")]
    Config(String),

    /// The problem description failed a blocking model assumption.
    #[error("rejected problem: {0}")]
    Rejected(String),

    /// The power iteration hit its iteration budget before the increment
    /// dropped below tolerance. Carries the last increment so callers can
    /// decide whether to retry with a larger budget or step.
    #[error("no convergence after {iterations} iterations (last increment {increment:.3e})")]
    NoConvergence { iterations: usize, increment: f64 },

    /// Total mass became zero or negative during normalization.
    #[error("mass collapse during normalization")]
    Collapse,

    /// The dense cross-check could not produce a trustworthy eigenpair.
    #[error("oracle failure: {0}")]
    Oracle(String),

    /// A dilation was requested in a regime where the problem is not
    /// well-posed (the exponent condition 1 + gamma - nu > 0 fails).
    #[error("ill-posed limit regime: 1 + gamma - nu = {0} is not positive")]
    IllPosed(f64),

    /// A solution was paired with a problem living on a different grid.
    #[error("grid mismatch between solution and problem")]
    GridMismatch,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 2,
            Error::Rejected(_) | Error::IllPosed(_) => 3,
            Error::NoConvergence { .. } | Error::Collapse | Error::Oracle(_) => 4,
            Error::Io(_) => 5,
            Error::GridMismatch => 2,
        }
    }
}
