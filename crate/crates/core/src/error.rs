use thiserror::Error;

/// Errors raised by the design library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("covariate matrix is not rectangular")]
    NotRectangular,
    #[error("covariate matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("first covariate column must be all ones (row {row} differs)")]
    FirstColumnNotOnes { row: usize },
    #[error("covariate matrix is rank deficient (singular value ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("too few rows: n = {n} < p = {p}")]
    TooFewRows { n: usize, p: usize },
    #[error("Gram matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("allocation is confounded with the covariates")]
    ConfoundedDesign,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("invalid covariate space: {0}")]
    InvalidSpace(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown level {value:?} in column {column:?} (data row {row})")]
    UnknownLevel {
        column: String,
        value: String,
        row: usize,
    },
    #[error("no rows remain after excluding rows with missing cells ({excluded} excluded)")]
    EmptyAfterExclusion { excluded: usize },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("cutting plane regenerated an existing cut at iteration {iteration} (theta {theta:e}, delta {delta:e})")]
    DuplicateCut {
        iteration: usize,
        theta: f64,
        delta: f64,
    },
    #[error("every one of the {count} replicates is confounded")]
    AllConfounded { count: usize },
}

impl DesignError {
    /// Stable machine-readable identifier.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::NotRectangular => "NotRectangular",
            Self::NonFinite { .. } => "NonFinite",
            Self::FirstColumnNotOnes { .. } => "FirstColumnNotOnes",
            Self::RankDeficient { .. } => "RankDeficient",
            Self::TooFewRows { .. } => "TooFewRows",
            Self::IllConditioned { .. } => "IllConditioned",
            Self::ConfoundedDesign => "ConfoundedDesign",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::InvalidAllocation(_) => "InvalidAllocation",
            Self::InvalidSpace(_) => "InvalidSpace",
            Self::InvalidInput(_) => "InvalidInput",
            Self::UnknownLevel { .. } => "UnknownLevel",
            Self::EmptyAfterExclusion { .. } => "EmptyAfterExclusion",
            Self::Schema(_) => "Schema",
            Self::Csv(_) => "Csv",
            Self::Infeasible => "Infeasible",
            Self::DuplicateCut { .. } => "DuplicateCut",
            Self::AllConfounded { .. } => "AllConfounded",
        }
    }
}

impl From<csv::Error> for DesignError {
    fn from(e: csv::Error) -> Self {
        Self::Csv(e.to_string())
    }
}

pub type Result<T, E = DesignError> = std::result::Result<T, E>;
