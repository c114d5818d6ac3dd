//! Error type shared across the pipeline stages.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column '{column}'")]
    MissingColumn { column: String },

    #[error("unknown column '{column}'")]
    UnknownColumn { column: String },

    #[error("duplicate customer_id '{id}' on line {line}")]
    DuplicateId { id: String, line: u64 },

    #[error("line {line}: non-numeric value '{value}' in column '{column}'")]
    NonNumericField {
        line: u64,
        column: String,
        value: String,
    },

    #[error("line {line}: {column} = {value} outside [{min}, {max}]")]
    ValueOutOfRange {
        line: u64,
        column: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("duplicate rating for (customer '{customer_id}', offer '{offer_id}') on line {line}")]
    DuplicatePair {
        customer_id: String,
        offer_id: String,
        line: u64,
    },

    #[error("line {line}: rating {rating} outside [1, 5]")]
    RatingOutOfRange { line: u64, rating: f64 },

    #[error("matrix is empty")]
    EmptyMatrix,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("labels are single-class; need at least one positive and one negative example")]
    DegenerateLabels,

    #[error("loss became non-finite during fitting")]
    NonFiniteLoss,

    #[error("loyal_threshold ({loyal}) must be strictly below risky_threshold ({risky})")]
    ThresholdOrder { loyal: f64, risky: f64 },

    #[error("k = {k} exceeds the number of points ({n})")]
    KTooLarge { k: usize, n: usize },

    #[error("input contains no points")]
    EmptyInput,

    #[error("{n} points exceed the {max}-point guard for agglomerative clustering")]
    TooManyPoints { n: usize, max: usize },

    #[error("assignments do not cover the table: {0}")]
    AssignmentMismatch(String),

    #[error("no score found for customer '{customer_id}'")]
    MissingScore { customer_id: String },

    #[error("customer '{customer_id}' is not in the risky set")]
    NotRisky { customer_id: String },

    #[error("no neighbor rated offer '{offer_id}'")]
    NoSupport { offer_id: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(String),
}

impl Error {
    /// Prefix an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 for input/configuration problems, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingColumn { .. }
            | Error::UnknownColumn { .. }
            | Error::DuplicateId { .. }
            | Error::NonNumericField { .. }
            | Error::ValueOutOfRange { .. }
            | Error::DuplicatePair { .. }
            | Error::RatingOutOfRange { .. }
            | Error::EmptyMatrix
            | Error::InvalidConfig(_)
            | Error::DimensionMismatch { .. }
            | Error::DegenerateLabels
            | Error::ThresholdOrder { .. }
            | Error::KTooLarge { .. }
            | Error::EmptyInput
            | Error::TooManyPoints { .. }
            | Error::Csv(_) => 1,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
