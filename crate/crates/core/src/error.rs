use std::path::PathBuf;

/// Errors raised by the engine.
///
/// Ingestion problems carry row and field context so a caller can point at
/// the offending line; everything numeric says which quantity went bad.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("ingestion error at row {row}, field `{field}`: {message}")]
    Ingest {
        row: usize,
        field: String,
        message: String,
    },

    #[error("duplicate person_id `{0}`")]
    DuplicatePerson(String),

    #[error("ICD code `{0}` has no CCS mapping (stale map file?)")]
    UnmappedIcd(String),

    #[error("invalid code maps: {0}")]
    InvalidMaps(String),

    #[error("invalid group definition: {0}")]
    InvalidGroup(String),

    #[error("age {0} outside [0, 120]")]
    AgeOutOfRange(i64),

    #[error("invalid formula: {0}")]
    InvalidFormula(String),

    #[error("formula references HCC `{0}` that is not a payment HCC")]
    UnknownHcc(String),

    #[error("variable {0} is already in the design")]
    DuplicateVariable(String),

    #[error("variable {0} is not in the design")]
    UnknownColumn(String),

    #[error("the intercept cannot be removed")]
    RemoveIntercept,

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("degenerate outcome: total sum of squares is zero")]
    DegenerateOutcome,

    #[error("not enough rows: n = {n} but {p} non-aliased columns")]
    Underdetermined { n: usize, p: usize },

    #[error("aliased column at pivot {0}")]
    AliasedPivot(usize),

    #[error("empty group")]
    EmptyGroup,

    #[error("group `{0}` has non-positive actual spending; predictive ratio undefined")]
    NonPositiveActual(String),

    #[error("unknown group `{0}`")]
    UnknownGroup(String),

    #[error("invalid cross-validation setup: {0}")]
    InvalidFolds(String),

    #[error("fold {fold} has degenerate training data: {source}")]
    DegenerateFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("calibration failed after {iterations} iterations; binding constraint: {binding}")]
    Calibration { iterations: usize, binding: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn ingest(row: usize, field: &str, message: impl Into<String>) -> Self {
        Error::Ingest {
            row,
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// True for problems in the input files themselves (schema, parse, duplicates).
    pub fn is_schema_error(&self) -> bool {
        matches!(
            self,
            Error::Ingest { .. }
                | Error::DuplicatePerson(_)
                | Error::InvalidMaps(_)
                | Error::UnmappedIcd(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
