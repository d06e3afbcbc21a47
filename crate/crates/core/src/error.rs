use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown group kind `{0}`")]
    UnknownGroup(String),

    #[error("group `{group}`: {reason}")]
    InvalidAxis { group: String, reason: String },

    #[error("representations act through different groups (`{0}` vs `{1}`)")]
    GroupMismatch(String, String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("constraint matrix of {rows}x{cols} exceeds the size cap of {cap} entries")]
    ConstraintTooLarge { rows: usize, cols: usize, cap: usize },

    #[error("at least one group is required")]
    EmptyGroupList,

    #[error("width {width} cannot host one scalar, vector and rank-2 object plus gates (need >= {min})")]
    WidthTooSmall { width: usize, min: usize },

    #[error("missing basis: {0}")]
    MissingBasis(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("non-positive regularizer value {value} for group `{group}`")]
    NonPositiveRegularizer { group: String, value: f64 },

    #[error("non-finite {0}")]
    NonFinite(String),

    #[error("coefficients were already adjusted")]
    AlreadyAdjusted,

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
