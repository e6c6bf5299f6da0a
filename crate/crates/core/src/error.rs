use thiserror::Error;

use crate::executor::Transcript;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed interchange JSON.
    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation error on page `{page_id}`{}: {rule}", span_suffix(.span_id))]
    Validation {
        page_id: String,
        span_id: Option<String>,
        rule: String,
    },

    #[error("span `{span_id}` on page `{page_id}` has no label; the oracle classifier needs one")]
    MissingLabel { page_id: String, span_id: String },

    #[error("no predictions for span `{0}`")]
    NoPredictions(String),

    #[error("prediction refers to {0}")]
    BadPrediction(String),

    #[error("span id sets differ; only in predicted: {only_predicted:?}, only in gold: {only_gold:?}")]
    KeyMismatch {
        only_predicted: Vec<String>,
        only_gold: Vec<String>,
    },

    #[error("page sets differ between runs: {0:?}")]
    PageMismatch(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tokenizer mode `{0}` is not supported in the core")]
    Unsupported(&'static str),

    #[error("reserved pad token `{token}` appears in span `{span_id}`")]
    ReservedToken { token: String, span_id: String },

    /// Transport or protocol failure in a remote classifier. Retrying may help.
    #[error("remote classifier failed (retryable): {0}")]
    Remote(String),

    #[error("backbone failed on page `{page_id}`: {source}")]
    Backbone {
        page_id: String,
        #[source]
        source: BackboneError,
        partial: Box<Transcript>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn span_suffix(span_id: &Option<String>) -> String {
    match span_id {
        Some(id) => format!(", span `{id}`"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn validation(page_id: &str, span_id: Option<&str>, rule: impl Into<String>) -> Self {
        Error::Validation {
            page_id: page_id.to_owned(),
            span_id: span_id.map(str::to_owned),
            rule: rule.into(),
        }
    }

    /// The partial transcript carried by a backbone failure, if any.
    pub fn partial_transcript(&self) -> Option<&Transcript> {
        match self {
            Error::Backbone { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackboneError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("no script for page `{0}`")]
    NoScript(String),
}
