use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: expected 0 or 1, found `{value}`")]
    NonBinaryValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: value is not a finite number (`{value}`)")]
    NonFiniteValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: missing cell")]
    MissingCell { row: usize, column: String },
    #[error("instrument arm Z={arm} has no records")]
    EmptyInstrumentCell { arm: u8 },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("design matrix is rank deficient (rank {rank} < {columns} columns)")]
    RankDeficientDesign { rank: usize, columns: usize },
    #[error("logistic fit separated: fitted probabilities pinned at the clamp limits")]
    SeparationDetected,
    #[error("solver did not converge in {iterations} iterations (score sup-norm {score:e})")]
    MaxIterationsExceeded { iterations: usize, score: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("treatment arm A={arm} has no records")]
    EmptyArm { arm: u8 },
    #[error("inverse probability weights sum to zero in arm A={arm}")]
    DegenerateWeights { arm: u8 },
    #[error("tau inversion denominator is numerically zero ({denominator:e})")]
    SingularDenominator { denominator: f64 },
    #[error("weak instrument: treatment-rate difference across Z arms is {difference:e}")]
    WeakInstrument { difference: f64 },
    #[error("cell (A={a}, Z={z}) has no records")]
    EmptyCell { a: u8, z: u8 },
    #[error("crossed bound: lower {lower} exceeds upper {upper}")]
    InvalidBound { lower: f64, upper: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{failures} of {replicates} bootstrap replicates failed (ceiling 5%)")]
    TooManyFailures { failures: usize, replicates: usize },
    #[error("{available} replicates available, at least {required} needed")]
    InsufficientReplicates { available: usize, required: usize },
    #[error("tau {requested} is infeasible for this design; |tau| must not exceed {bound}")]
    InfeasibleTau { requested: f64, bound: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "MissingColumn",
            Error::NonBinaryValue { .. } => "NonBinaryValue",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::MissingCell { .. } => "MissingCell",
            Error::EmptyInstrumentCell { .. } => "EmptyInstrumentCell",
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::RankDeficientDesign { .. } => "RankDeficientDesign",
            Error::SeparationDetected => "SeparationDetected",
            Error::MaxIterationsExceeded { .. } => "MaxIterationsExceeded",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::EmptyArm { .. } => "EmptyArm",
            Error::DegenerateWeights { .. } => "DegenerateWeights",
            Error::SingularDenominator { .. } => "SingularDenominator",
            Error::WeakInstrument { .. } => "WeakInstrument",
            Error::EmptyCell { .. } => "EmptyCell",
            Error::InvalidBound { .. } => "InvalidBound",
            Error::Precondition(_) => "Precondition",
            Error::TooManyFailures { .. } => "TooManyFailures",
            Error::InsufficientReplicates { .. } => "InsufficientReplicates",
            Error::InfeasibleTau { .. } => "InfeasibleTau",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
