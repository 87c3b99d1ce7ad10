use std::io;

use thiserror::Error;

/// Errors produced anywhere in the slicing / encoding / training pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON at byte {position}: {message}")]
    Json { position: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("graph {id} has no nodes")]
    EmptyGraph { id: String },

    #[error("graph {id} is not a tree: node {node} has {parents} incoming edges")]
    NotATree { id: String, node: u32, parents: usize },

    #[error("tokenizer tables are inconsistent: {0}")]
    Tokenizer(String),

    #[error("unknown edge label {0:?}")]
    UnknownLabel(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("bad {kind} file: {message}")]
    Format { kind: &'static str, message: String },

    #[error("stage {stage} failed{}: {source}", sentence.as_ref().map(|s| format!(" on sentence {s}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        sentence: Option<String>,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(kind: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            kind,
            message: message.into(),
        }
    }

    /// Whether the error stems from configuration rather than from data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: &'static str, sentence: Option<String>) -> Self {
        Error::Stage {
            stage,
            sentence,
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json {
            position: e.column().saturating_sub(1),
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
