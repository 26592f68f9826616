use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: mismatched dimensions, negative quantities, non-finite numbers.
    #[error("invalid input: {0}")]
    Input(String),

    /// A cost model that does not keep every discounted weight strictly positive.
    #[error("invalid cost model: {0}")]
    CostModel(String),

    /// An experiment or sweep configuration value that is out of range.
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// The exhaustive oracle was asked to solve something outside its scope.
    #[error("brute-force oracle out of scope: {0}")]
    OracleScope(String),

    /// Discounting produced a negative dual entry, so the input duals were not optimal.
    #[error("discounted dual is negative ({side}[{index}] = {value:e}); input duals are not optimal")]
    DualPrecondition { side: &'static str, index: usize, value: f64 },

    /// A regime construction could not be completed on this instance.
    #[error("regime construction failed: {0}")]
    Regime(String),

    /// The simplex exceeded its iteration budget.
    #[error("solver did not converge: {0}")]
    Numerical(String),

    #[error("unknown figure key `{0}`")]
    UnknownFigure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input(msg: impl Into<String>) -> Error {
    Error::Input(msg.into())
}

pub(crate) fn config(field: &str, reason: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), reason: reason.into() }
}
