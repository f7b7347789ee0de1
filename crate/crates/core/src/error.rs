use std::path::PathBuf;

use thiserror::Error;

use crate::arima::ArimaOrder;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("unparseable cell at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("empty universe: every ticker was excluded")]
    EmptyUniverse,

    #[error("no fill source: first observation of {ticker} is missing")]
    NoFillSource { ticker: String },

    #[error("cannot sample {requested} tickers from a universe of {available}")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("zero variance")]
    ZeroVariance,

    #[error("series too short: need {needed} values, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate window for pair ({first}, {second}) at offset {offset}: {source}")]
    DegenerateWindow {
        first: String,
        second: String,
        offset: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parameters violate stationarity or invertibility")]
    NonStationary,

    #[error("ARIMA{order} fit failed: {reason}")]
    FitFailed { order: ArimaOrder, reason: String },

    #[error("no fit: every candidate order failed")]
    NoFit,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("missing auxiliary data: {0}")]
    MissingAuxData(String),

    #[error("missing model/dataset combination: {0}")]
    MissingCombination(String),

    #[error("insufficient pool: need {needed} tickers, have {available}")]
    InsufficientPool { needed: usize, available: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
