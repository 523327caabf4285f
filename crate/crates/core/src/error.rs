use thiserror::Error;

use crate::embed::EmbedError;
use crate::grouping::GroupingError;
use crate::ingest::IngestError;
use crate::llm::LlmError;
use crate::prompts::PromptError;
use crate::repository::RepoError;

/// Any failure surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Grouping(#[from] GroupingError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error("no captions for video {0}")]
    MissingCaptions(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
