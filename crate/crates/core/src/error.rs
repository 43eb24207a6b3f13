use thiserror::Error;

/// Errors raised by estimation, decomposition and data handling.
#[derive(Debug, Error)]
pub enum LpError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing value at line {line}, column `{column}`")]
    MissingValue { line: usize, column: String },

    #[error("non-numeric value `{value}` at line {line}, column `{column}`")]
    NonNumeric {
        line: usize,
        column: String,
        value: String,
    },

    #[error("invalid date `{value}` at line {line}")]
    InvalidDate { line: usize, value: String },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("irregular date spacing between {prev} and {next}")]
    IrregularDates { prev: String, next: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("horizon {horizon}: {rows} usable rows for {cols} regressors")]
    InsufficientRows {
        horizon: usize,
        rows: usize,
        cols: usize,
    },

    #[error("rank-deficient design (horizon {horizon}): column(s) {columns:?} are linearly dependent on earlier columns")]
    RankDeficient {
        horizon: usize,
        columns: Vec<String>,
    },

    #[error("shock has no exogenous variation once controls are partialled out")]
    NoExogenousVariation,

    #[error("non-positive eigenvalue {0:e} in the regressor cross-product")]
    NonPositiveEigenvalue(f64),

    #[error("dosage must be nonzero")]
    ZeroDosage,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} is undefined for an all-zero vector")]
    AllZero(&'static str),

    #[error("trimming removed every observation")]
    TrimmedEverything,

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
}

pub type Result<T> = std::result::Result<T, LpError>;
