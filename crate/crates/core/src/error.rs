//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A stated hypothesis of an inequality or lemma does not hold for the
    /// given inputs.
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// A quantity that must be positive (diameter, radius) degenerated to zero.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A constructed object failed one of its postcondition invariants.
    /// Usually signals insufficient curve sampling density.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A lookup into a registry (e.g. arc -> extended arc) failed; indicates a
    /// plumbing bug in the caller.
    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("unknown experiment: {0}")]
    UnknownExperiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
