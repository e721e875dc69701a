//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad coverage count, empty checkpoints, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input row; carries the 1-based line number of the offending record.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    /// Data violates a structural constraint (e.g. payment on a never-activated coverage).
    #[error("data integrity: {0}")]
    DataIntegrity(String),

    /// Categorical level not present in the schema.
    #[error("unknown level {level:?} for factor {factor:?}")]
    UnknownLevel { factor: String, level: String },

    /// Claim is missing an attribute required by the schema.
    #[error("missing covariate {0:?}")]
    MissingCovariate(String),

    /// All observations share one outcome; the MLE does not exist without a ridge penalty.
    #[error("complete separation: {0}")]
    Separation(String),

    /// Optimizer failed to reach a finite maximum.
    #[error("optimizer diverged: {msg}; trace: {trace:?}")]
    Diverged { msg: String, trace: Vec<String> },

    /// Renormalization requested over a support carrying zero probability mass.
    #[error("degenerate support: allowed patterns carry zero probability mass")]
    DegenerateSupport,

    /// Fitted tail parameters imply an infinite mean; the fit is rejected.
    #[error("infinite mean: {0}")]
    InfiniteMean(String),

    /// Chain-ladder development factor has a zero denominator.
    #[error("undefined development factor for column {0}: zero denominator")]
    UndefinedFactor(usize),

    /// Triangle has no observed cells.
    #[error("empty triangle: {0}")]
    EmptyTriangle(String),

    /// Pearson dispersion estimate is non-positive; the bootstrap is undefined.
    #[error("degenerate dispersion estimate: {0}")]
    DegenerateDispersion(f64),

    /// Claim status does not admit the requested simulation routine.
    #[error("invalid claim status: {0}")]
    InvalidStatus(String),

    /// Every candidate severity fit failed.
    #[error("no severity model converged: {0}")]
    NoModel(String),

    #[error("amount error: {0}")]
    Amount(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
