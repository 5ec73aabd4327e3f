use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate probe table for model={model_id} entity={entity_id} slot={slot} language={language}")]
    DuplicateProbe {
        model_id: String,
        entity_id: String,
        slot: String,
        language: String,
    },

    #[error("line {line}: probability {value} for token {token:?} is not in [0, 1]")]
    InvalidProbability { line: usize, token: String, value: f64 },

    #[error("lexicon {lexicon}: score {value} for {word:?} is outside the {scale} scale")]
    OutOfScale {
        lexicon: String,
        word: String,
        value: f64,
        scale: String,
    },

    #[error("lemma {0:?} is not in the model vocabulary")]
    UnknownLemma(String),

    #[error("rank-deficient design matrix; aliased terms: {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("training diverged: loss is not finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
