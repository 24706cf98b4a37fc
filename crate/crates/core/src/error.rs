use thiserror::Error;

/// Errors raised by the analysis library.
///
/// Each variant belongs to one of three [`ErrorKind`]s which the command-line
/// front end maps onto exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown column or group `{0}`")]
    UnknownVariable(String),

    #[error("column `{name}` has length {found}, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate name `{0}`")]
    DuplicateName(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("treatment column `{0}` is collinear with the covariates (treatment confounding is infinite)")]
    TreatmentCollinear(String),

    #[error("no residual degrees of freedom (df = {df})")]
    NoResidualDf { df: i64 },

    #[error("zero residual variance in `{0}`")]
    DegenerateVariance(String),

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("df = {df} must exceed the rank k = {k} of the omitted variable")]
    DfTooSmall { df: usize, k: usize },

    #[error("complete or quasi-complete separation in logistic fit (direction dominated by `{direction}`)")]
    Separation { direction: String },

    #[error("logistic fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("stratum {stratum} contains only {arm} rows")]
    SingleArmStratum { stratum: usize, arm: &'static str },

    #[error("cannot form {requested} strata from {distinct} distinct scores")]
    TooFewDistinctScores { requested: usize, distinct: usize },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),
}

/// Coarse error classification: usage, data, or numerical degeneracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            InvalidArgument(_) | Config(_) | InvalidSpec(_) | UnknownVariable(_) => ErrorKind::Usage,
            LengthMismatch { .. } | DuplicateName(_) | InvalidWeights(_) | Data(_) | Io { .. } => {
                ErrorKind::Data
            }
            TreatmentCollinear(_)
            | NoResidualDf { .. }
            | DegenerateVariance(_)
            | NotNested(_)
            | DfTooSmall { .. }
            | Separation { .. }
            | NoConvergence { .. }
            | SingleArmStratum { .. }
            | TooFewDistinctScores { .. } => ErrorKind::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
