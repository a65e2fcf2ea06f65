use thiserror::Error;

pub type Result<T> = std::result::Result<T, FgError>;

#[derive(Debug, Error)]
pub enum FgError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("constant covariate column {0} cannot be standardized")]
    ConstantColumn(usize),

    #[error(
        "degenerate IPCW weight: subject {subject} has zero censoring survival at its own time {time}; lower the horizon"
    )]
    DegenerateWeight { subject: usize, time: f64 },

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("matrix too large: p = {p} exceeds the cap of {cap}")]
    TooLarge { p: usize, cap: usize },

    #[error("fold {fold} of {folds} has no cause-1 events in its training part; use fewer folds")]
    EmptyFold { fold: usize, folds: usize },

    #[error("nodewise regression for column {column} is degenerate (tau^2 = {tau_sq:e})")]
    DegenerateNodewise { column: usize, tau_sq: f64 },

    #[error("row {row} of the inverse-information estimate violates its KKT bound by {excess:e}")]
    KktViolation { row: usize, excess: f64 },

    #[error("variance estimate is not positive ({0:e}); the sandwich matrix is not PSD")]
    NonPositiveVariance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FgError {
    /// True for errors caused by the numerical procedure rather than by the
    /// input itself.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            FgError::NonFinite { .. }
                | FgError::DegenerateNodewise { .. }
                | FgError::KktViolation { .. }
                | FgError::NonPositiveVariance(_)
                | FgError::TooLarge { .. }
        )
    }
}
