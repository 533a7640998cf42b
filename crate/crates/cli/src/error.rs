use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
    #[error(transparent)]
    Core(#[from] shelab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("record lacks columns {0:?} for this view")]
    MissingColumns(Vec<String>),
    #[error("checks failed: {0}")]
    ChecksFailed(String),
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    fields: Option<&'a [FieldError]>,
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Invalid(_) => "invalid_config",
            CliError::Core(shelab::Error::Numerical { .. }) => "numerical_failure",
            CliError::Core(_) => "domain",
            CliError::Io(_) => "io",
            CliError::Json(_) => "json",
            CliError::Csv(_) => "csv",
            CliError::MissingColumns(_) => "missing_columns",
            CliError::ChecksFailed(_) => "checks_failed",
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> String {
        let fields = match self {
            CliError::Invalid(f) => Some(f.as_slice()),
            _ => None,
        };
        serde_json::to_string(&ErrorReport { error: self.kind(), message: self.to_string(), fields }).expect("report serializes")
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Json(_) => 2,
            CliError::ChecksFailed(_) => 3,
            _ => 1,
        }
    }
}
