use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid split: threshold {threshold} outside feature {feature} interval [{lo}, {hi}]")]
    InvalidSplit {
        feature: usize,
        threshold: f64,
        lo: f64,
        hi: f64,
    },

    #[error("feature index {feature} out of range for dimension {dim}")]
    FeatureOutOfRange { feature: usize, dim: usize },

    #[error("empty feature set")]
    EmptyFeatureSet,

    #[error("empty subsample")]
    EmptySubsample,

    #[error("non-binary feature value {value} at row {row}, feature {feature}")]
    NonBinaryFeature { row: usize, feature: usize, value: f64 },

    #[error("candidate budget exceeded: {candidates} candidates > guard {guard}")]
    OracleGuard { candidates: usize, guard: usize },

    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },

    #[error("feature out of [0,1] at line {line}, column {column}: {value}")]
    FeatureOutOfBounds { line: usize, column: String, value: f64 },

    #[error("no observations")]
    NoObservations,

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("model constant on all probed cells")]
    ConstantModel,

    #[error("population oracle unavailable for this data source: register the model through the user-callable kind with explicit conditional-moment callables")]
    OracleUnavailable,

    #[error("unknown model id `{id}`; known ids: {known}")]
    UnknownModel { id: String, known: String },

    #[error("tree format version {got} unsupported (expected {expected})")]
    TreeVersion { got: u32, expected: u32 },

    #[error("malformed tree payload: {0}")]
    TreeFormat(String),

    #[error("schedule enumeration too large: {count} schedules > guard {guard}")]
    EnumerationGuard { count: u128, guard: u128 },

    #[error("empty sweep")]
    EmptySweep,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
