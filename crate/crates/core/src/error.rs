use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("pole of D(omega) at omega = {omega:e} rad/s (|D| = {magnitude:e})")]
    Pole { omega: f64, magnitude: f64 },

    #[error("mode tracking failed near omega = {omega:e} rad/s")]
    BranchFlip { omega: f64 },

    #[error("exponent overflow: growth exponent {exponent:.3} exceeds {limit}")]
    Overflow { exponent: f64, limit: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("Fock cutoff {cutoff} inadequate: amplitudes moved by {change:e} at cutoff + 2")]
    CutoffInadequate { cutoff: usize, change: f64 },

    #[error("generator reproduces the mode equations only to {deviation:e}")]
    GeneratorMismatch { deviation: f64 },

    #[error("logarithm of a vanishing amplitude at z = {z:e} m")]
    LogDomain { z: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        !matches!(self, Error::InvalidParams(_) | Error::Config(_) | Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
