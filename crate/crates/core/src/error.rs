use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("row {row}: cannot parse column `{column}` as a number")]
    UnparsableNumber { row: usize, column: String },
    #[error("row {row}: cannot parse date `{value}`")]
    UnparsableDate { row: usize, value: String },
    #[error("row {row}: column `{column}` must be non-negative")]
    NegativeConcentration { row: usize, column: String },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("row {row}: missing value for `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("parameter `{parameter}`: unknown class label `{label}`")]
    UnknownClassLabel { parameter: String, label: String },
    #[error("parameter `{0}` is not declared in the schema")]
    UnknownParameter(String),
    #[error("column `{0}` is constant")]
    ConstantColumn(String),
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("no record reaches the threshold")]
    NoExceedances,
    #[error("invalid balance specification: {0}")]
    InvalidBalance(String),
    #[error("each ANOVA group needs at least 2 values")]
    GroupTooSmall,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("design matrix is singular")]
    SingularDesign,
    #[error("training cost became non-finite")]
    NonFiniteCost,
    #[error("every restart diverged")]
    NoViableRestart,
    #[error("mean squared error must be positive")]
    NonPositiveMse,
    #[error("gradient matrix is rank deficient: effective rank {effective} of {expected}")]
    RankDeficient { effective: usize, expected: usize },
    #[error("no residual degrees of freedom: N = {n}, q = {q}")]
    DofExhausted { n: usize, q: usize },
    #[error("argument out of domain: {0}")]
    OutOfDomain(String),
    #[error("interval-augmented targets need a regression network with interval context")]
    MissingRegressionContext,
    #[error("interval context does not match the network's active weights")]
    ContextMismatch,
    #[error("operation requires a network with a different output kind")]
    WrongOutputKind,
    #[error("targets contain a single class")]
    SingleClass,
    #[error("series is too short")]
    TooShort,
    #[error("classes are perfectly separated")]
    PerfectSeparation,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("observations are constant")]
    ConstantObservations,
    #[error("no observed exceedance (M = 0)")]
    NoObservedExceedances,
    #[error("every case is an observed exceedance (N = M)")]
    AllExceedances,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
