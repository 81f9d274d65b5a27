//! Crate-wide error type.
//!
//! Contract violations are reported through typed variants so callers (and the
//! command-line layer) can distinguish configuration mistakes from numerical
//! events such as detected blow-up, which is a scientific result rather than a
//! failure.

use thiserror::Error;

/// Errors produced by the laboratory's operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A scale (mollification δ, test-function λ, quadrature mesh) is too fine
    /// for the grid that must resolve it.
    #[error("unresolvable scale: {what} = {value} requires at least {limit} ({context})")]
    UnresolvableScale {
        what: String,
        value: f64,
        limit: f64,
        context: String,
    },

    /// Two objects that must live on the same grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Mismatched dimensions in linear-algebra or Gaussian-vector plumbing.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A grid parameter violates its invariant (size, power of two, time order).
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// The matrix map produced a non-elliptic matrix.
    #[error("ellipticity violation at {context}: {detail}")]
    EllipticityViolation { context: String, detail: String },

    /// A frozen-kernel evaluation was requested at a singular argument.
    #[error("origin singularity: the Green function diverges at y = 0")]
    OriginSingularity,

    /// A frozen-kernel evaluation was requested at non-positive time.
    #[error("non-positive time {0} in heat-kernel evaluation")]
    NonpositiveTime(f64),

    /// A covariance matrix failed its positive-semidefiniteness check.
    #[error("covariance not positive semidefinite: {0}")]
    NotPsd(String),

    /// The solver detected numerical blow-up (reported as truncation data by
    /// the experiment drivers, not as a crash).
    #[error("instability detected at step {step} (t = {time}): sup-norm grew from {before:.3e} to {after:.3e}")]
    InstabilityDetected {
        step: usize,
        time: f64,
        before: f64,
        after: f64,
    },

    /// A labelled diagram violates its well-formedness invariants.
    #[error("invalid diagram: {0}")]
    InvalidDiagram(String),

    /// Diagram-format parse failure, with a 1-based line number.
    #[error("parse error at line {line}: {detail}")]
    ParseError { line: usize, detail: String },

    /// A subset-enumeration request exceeds the supported order.
    #[error("diagram too large: {vertices} vertices exceeds the {limit}-vertex enumeration limit")]
    TooLarge { vertices: usize, limit: usize },

    /// An unknown vertex was referenced.
    #[error("unknown vertex: {0}")]
    UnknownVertex(String),

    /// Experiment configuration rejected, naming the offending key.
    #[error("config error for key `{key}`: {detail}")]
    ConfigError { key: String, detail: String },

    /// Filesystem or serialization failure while emitting results.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON serialization failure.
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    /// CSV serialization failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
