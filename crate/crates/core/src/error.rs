//! Crate-wide error type shared by the data, inference, estimation, and
//! evaluation layers.

use thiserror::Error;

/// Unified error for every fallible operation in the crate.
#[derive(Error, Debug)]
pub enum Error {
    /// A series (or an observed subset of one) is too short for the requested
    /// operation.
    #[error("series `{id}` too short: {reason}")]
    TooShort { id: String, reason: String },

    /// Standardization of a series whose observed values are all equal.
    #[error("series `{id}` is constant; standardization undefined")]
    ConstantSeries { id: String },

    /// Undifferencing requires the last `d` base values to be observed.
    #[error("cannot undifference: base value at position {position} is missing")]
    MissingBase { position: usize },

    /// Malformed CSV input.
    #[error("parse error at row {row}, column {col}: {reason}")]
    ParseError { row: usize, col: usize, reason: String },

    /// Malformed or inconsistent JSON document (models, experiment specs).
    #[error("schema error in `{field}`: {reason}")]
    SchemaError { field: String, reason: String },

    /// Cross-predictor graph has a cycle through lag-0 edges.
    #[error("cross-predictor cycle involving series `{id}`")]
    CyclicCrossPredictors { id: String },

    /// Chain construction over a series with no modeled time steps.
    #[error("chain too short: series length {len} does not exceed max lag {r}")]
    ChainTooShort { len: usize, r: usize },

    /// A conditioning or factorization step lost positive definiteness.
    #[error("numerical failure: {reason}")]
    NumericalFailure { reason: String },

    /// Dense-joint construction refused for problems past its size cap.
    #[error("dense joint too large: {steps} steps exceeds cap {cap}")]
    TooLarge { steps: usize, cap: usize },

    /// Sufficient statistics cover zero time steps.
    #[error("degenerate sufficient statistics: no time steps accumulated")]
    DegenerateStats,

    /// Likelihood dropped during EM beyond numerical slack; indicates a bug
    /// in exact linear-Gaussian inference or the M-step.
    #[error("log-likelihood decreased by {drop:.3e} at iteration {iteration}")]
    NonMonotone { iteration: usize, drop: f64 },

    /// A cross predictor needs values its source cannot supply.
    #[error("missing cross-predictor values from series `{source_id}` at lag {lag}")]
    MissingCrossValues { source_id: String, lag: usize },

    /// Forecasting from a history shorter than the model's max lag.
    #[error("history length {len} shorter than required {required}")]
    ShortHistory { len: usize, required: usize },

    /// Scoring over a holdout with no observed values.
    #[error("holdout for series `{id}` contains no observed values")]
    EmptyHoldout { id: String },

    /// An experiment spec could not be interpreted.
    #[error("experiment spec error at `{path}`: {reason}")]
    SpecError { path: String, reason: String },

    /// An operation that requires complete data met a missing value.
    #[error("series `{id}` has a missing value at position {position}")]
    MissingData { id: String, position: usize },

    /// Catch-all for violated argument contracts.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: String, reason: String },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
