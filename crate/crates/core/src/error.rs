use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input left the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),
    /// A parameter bundle violates its constraints.
    #[error("parameter error: {0}")]
    Param(String),
    /// The dual point of a mirror step left the interior of dom h*.
    #[error("step error: {0}")]
    Step(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    Size { expected: usize, got: usize },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Size { expected, got });
    }
    Ok(())
}

pub(crate) fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|t| !t.is_finite()) {
        Some(i) => Err(Error::Domain(format!("{name}[{i}] = {} is not finite", v[i]))),
        None => Ok(()),
    }
}
