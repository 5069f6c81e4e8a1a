use alloc::string::String;
use core::fmt;

/// Errors raised by the few-shot pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration or parameter values.
    Config(String),
    /// A shape or size contract between components was violated.
    Contract(String),
    /// A vector too close to zero to be normalized.
    DegenerateVector { norm: f64 },
    /// The mean support embedding of a class collapsed to zero.
    DegenerateClass { class: usize, norm: f64 },
    /// A class does not hold enough examples for the requested episode.
    Sampling {
        class: usize,
        needed: usize,
        available: usize,
    },
    /// Training produced a non-finite loss.
    Divergence {
        stage: &'static str,
        step: usize,
        loss: f64,
    },
    /// Not enough samples for the requested statistic.
    Statistics(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::DegenerateVector { norm } => {
                write!(f, "cannot normalize vector with norm {norm:e}")
            }
            Error::DegenerateClass { class, norm } => {
                write!(f, "class {class} has a degenerate mean embedding (norm {norm:e})")
            }
            Error::Sampling {
                class,
                needed,
                available,
            } => write!(
                f,
                "class {class} has {available} examples but the episode needs {needed}"
            ),
            Error::Divergence { stage, step, loss } => {
                write!(f, "{stage} diverged at step {step} (loss = {loss})")
            }
            Error::Statistics(msg) => write!(f, "statistics error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
