use dpvis_core::analytics::AnalyticsError;
use dpvis_core::data::DataError;
use dpvis_core::hmm::HmmError;
use dpvis_core::layout::LayoutError;
use dpvis_core::patterns::PatternError;
use dpvis_core::query::QueryError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Patterns(#[from] PatternError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("no dataset has been ingested")]
    NoDataset,
    #[error("no active model; train or activate one first")]
    NoActiveModel,
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown job {0}")]
    UnknownJob(u64),
    #[error("model `{model}` does not fit the dataset: {reason}")]
    IncompatibleModel { model: String, reason: String },
    #[error("{0}")]
    BadRequest(String),
    #[error("workspace file error: {0}")]
    Workspace(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Machine-readable error category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Data(e) => e.category(),
            Error::Hmm(e) => e.category(),
            Error::Query(e) => e.category(),
            Error::Patterns(e) => e.category(),
            Error::Analytics(e) => e.category(),
            Error::Layout(e) => e.category(),
            Error::NoDataset => "NoDataset",
            Error::NoActiveModel => "NoActiveModel",
            Error::UnknownModel(_) => "UnknownModel",
            Error::UnknownJob(_) => "UnknownJob",
            Error::IncompatibleModel { .. } => "IncompatibleModel",
            Error::BadRequest(_) => "BadRequest",
            Error::Workspace(_) => "WorkspaceFile",
            Error::Io(_) => "Io",
        }
    }

    /// HTTP status code for the error.
    pub fn status(&self) -> u16 {
        match self {
            Error::NoActiveModel | Error::NoDataset | Error::Query(QueryError::NoDecoding) => 409,
            Error::IncompatibleModel { .. } => 409,
            Error::Query(QueryError::UnknownSubgroup(_)) | Error::UnknownModel(_) | Error::UnknownJob(_) => 404,
            Error::Query(QueryError::Io(_)) | Error::Io(_) | Error::Workspace(_) => 500,
            Error::Data(DataError::Io(_)) => 500,
            Error::Query(_) => 422,
            _ => 400,
        }
    }

    /// JSON-pointer-like location of the offending filter node, if any.
    pub fn path(&self) -> Option<&str> {
        match self {
            Error::Query(QueryError::InvalidFilter { path, .. }) => Some(path),
            _ => None,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: ErrorDetail {
                category: self.category().to_string(),
                message: self.to_string(),
                path: self.path().map(str::to_string),
            },
        }
    }
}

/// `{"error": {"category", "message", "path"?}}`, shared by the HTTP API
/// and the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorDetail {
    pub category: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<String>,
}
