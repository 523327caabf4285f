//! Multi-scale text repository over captioned video chunks.
//!
//! Captions of a long video are split into chunks and written to the
//! repository: within each chunk, near-duplicate captions are grouped by
//! embedding similarity and rephrased by an LLM into one sentence carrying
//! its timestamps and occurrence count. The same write is repeated over
//! fewer, longer chunks to produce coarser scales. Reading summarizes every
//! entry of the chosen scales, and the summaries feed a multiple-choice
//! classifier (generative or log-likelihood).
//!
//! ```no_run
//! use std::sync::Arc;
//! use langrepo::{embed::Embedder, llm::{LlmClient, MockBackend}, repository::{self, BuildConfig, Providers}};
//!
//! let captions = langrepo::ingest::load_captions("captions/video.json")?;
//! let providers = Providers::new(
//!     Arc::new(LlmClient::new(Arc::new(MockBackend::new()))),
//!     Arc::new(Embedder::hashing(256)),
//! );
//! let repo = repository::build(&captions, &BuildConfig::default(), &providers)?;
//! repo.save("video.repo.json")?;
//! # Ok::<(), langrepo::Error>(())
//! ```

pub mod app;
pub mod embed;
mod error;
pub mod eval;
pub mod grouping;
pub mod ingest;
pub mod llm;
pub mod prompts;
pub mod repository;
pub mod retry;
pub mod vqa;

#[cfg(test)]
pub(crate) mod test_server;

pub use error::Error;
