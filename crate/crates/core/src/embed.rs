//! Text embeddings and cosine-similarity matrices.
//!
//! Every vector is L2-normalized when it enters the crate, so cosine
//! similarity is a plain dot product from then on.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::retry::RetryPolicy;

/// Environment variable holding the API key for the HTTP embedding endpoint.
pub const EMBED_KEY_ENV: &str = "LANGREPO_EMBED_KEY";

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: u32, reason: String },
    #[error("no precomputed embedding for text {0:?}")]
    MissingEmbedding(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding is not a finite non-zero vector")]
    InvalidVector,
    #[error("provider returned {actual} vectors for {expected} texts")]
    CountMismatch { expected: usize, actual: usize },
    #[error("invalid embedding configuration: {0}")]
    Config(String),
}

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidVector);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::InvalidVector);
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Dense row-major `|src| x |dst|` similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Builds a matrix from explicit rows. Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged similarity rows");
        Self {
            rows: rows.len(),
            cols,
            values: rows.into_iter().flatten().collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                values.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            values,
        }
    }
}

/// Pairwise cosine similarity between every `src` and every `dst` vector.
pub fn similarity_matrix(
    src: &[EmbeddingVector],
    dst: &[EmbeddingVector],
) -> Result<SimilarityMatrix, EmbedError> {
    let dim = src.first().or(dst.first()).map_or(0, |v| v.dimension());
    if let Some(bad) = src.iter().chain(dst).find(|v| v.dimension() != dim) {
        return Err(EmbedError::DimensionMismatch {
            expected: dim,
            actual: bad.dimension(),
        });
    }
    let values = src
        .iter()
        .flat_map(|s| dst.iter().map(move |d| s.dot(d)))
        .collect();
    Ok(SimilarityMatrix {
        rows: src.len(),
        cols: dst.len(),
        values,
    })
}

/// Truncates to at most `max_chars` characters.
pub fn truncate_chars(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}

/// A source of raw (not yet normalized) embeddings.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier recorded in repository provenance.
    fn id(&self) -> String;

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    PrecomputedFile,
    HttpEndpoint,
    /// Offline bag-of-words hashing embedder; needs no model or file.
    Hashing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProviderConfig {
    pub kind: ProviderKind,
    /// File path for `precomputed-file`, URL for `http-endpoint`.
    pub location: String,
    pub dimension: usize,
    pub max_text_chars: usize,
    /// Header carrying the API key for `http-endpoint`.
    pub auth_header: String,
    pub batch_size: usize,
    pub parallelism: usize,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Hashing,
            location: String::new(),
            dimension: 256,
            max_text_chars: 300,
            auth_header: "Authorization".into(),
            batch_size: 64,
            parallelism: 4,
            timeout_secs: 60,
            retry: RetryPolicy::default(),
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dimension == 0 || self.max_text_chars == 0 || self.batch_size == 0 {
            return Err(EmbedError::Config(
                "dimension, max_text_chars and batch_size must be positive".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(EmbedError::Config("parallelism must be positive".into()));
        }
        if matches!(self.kind, ProviderKind::PrecomputedFile | ProviderKind::HttpEndpoint)
            && self.location.is_empty()
        {
            return Err(EmbedError::Config(format!(
                "{:?} provider needs a location",
                self.kind
            )));
        }
        Ok(())
    }
}

/// Truncating, batching, normalizing front end over an [`EmbeddingProvider`].
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    dimension: usize,
    max_text_chars: usize,
    batch_size: usize,
    parallelism: usize,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>, dimension: usize, max_text_chars: usize) -> Self {
        Self {
            provider,
            dimension,
            max_text_chars,
            batch_size: usize::MAX,
            parallelism: 1,
        }
    }

    pub fn hashing(dimension: usize) -> Self {
        Self::new(Box::new(HashingEmbedder::new(dimension)), dimension, 300)
    }

    pub fn from_config(cfg: &EmbeddingProviderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        let provider: Box<dyn EmbeddingProvider> = match cfg.kind {
            ProviderKind::Hashing => Box::new(HashingEmbedder::new(cfg.dimension)),
            ProviderKind::PrecomputedFile => {
                Box::new(PrecomputedEmbeddings::load(&cfg.location, cfg.max_text_chars)?)
            }
            ProviderKind::HttpEndpoint => Box::new(HttpEmbedder::new(
                &cfg.location,
                &cfg.auth_header,
                std::env::var(EMBED_KEY_ENV).ok(),
                cfg.retry.clone(),
                Duration::from_secs(cfg.timeout_secs),
            )),
        };
        Ok(Self {
            provider,
            dimension: cfg.dimension,
            max_text_chars: cfg.max_text_chars,
            batch_size: cfg.batch_size,
            parallelism: cfg.parallelism,
        })
    }

    pub fn id(&self) -> String {
        self.provider.id()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Embeds `texts` in order, one unit vector per text.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let truncated: Vec<String> = texts
            .iter()
            .map(|t| truncate_chars(t, self.max_text_chars).to_string())
            .collect();
        let batches: Vec<&[String]> = truncated.chunks(self.batch_size.max(1)).collect();
        let mut raw = Vec::with_capacity(texts.len());
        for wave in batches.chunks(self.parallelism.max(1)) {
            let results: Vec<Result<Vec<Vec<f64>>, EmbedError>> = if wave.len() == 1 {
                vec![self.provider.embed_raw(wave[0])]
            } else {
                std::thread::scope(|s| {
                    let handles: Vec<_> = wave
                        .iter()
                        .map(|batch| s.spawn(|| self.provider.embed_raw(batch)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("embedding worker panicked"))
                        .collect()
                })
            };
            for (batch, result) in wave.iter().zip(results) {
                let vectors = result?;
                if vectors.len() != batch.len() {
                    return Err(EmbedError::CountMismatch {
                        expected: batch.len(),
                        actual: vectors.len(),
                    });
                }
                raw.extend(vectors);
            }
        }
        raw.into_iter()
            .map(|v| {
                if v.len() != self.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.dimension,
                        actual: v.len(),
                    });
                }
                EmbeddingVector::normalized(v)
            })
            .collect()
    }
}

/// Deterministic signed feature hashing over lowercase word tokens.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        Self { dimension }
    }

    fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        let lowered = text.to_lowercase();
        let mut any = false;
        for token in lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
        {
            let digest = Sha256::digest(token.as_bytes());
            let mut idx = [0u8; 8];
            idx.copy_from_slice(&digest[..8]);
            let slot = (u64::from_le_bytes(idx) % self.dimension as u64) as usize;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[slot] += sign;
            any = true;
        }
        if !any || v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        v
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-{}", self.dimension)
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Vectors read from a JSON object mapping text to a list of numbers.
///
/// Keys are truncated with the same character limit applied to queries, so a
/// long caption still finds its vector.
#[derive(Debug, Clone)]
pub struct PrecomputedEmbeddings {
    source: String,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedEmbeddings {
    pub fn load(path: impl AsRef<Path>, max_text_chars: usize) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| EmbedError::Config(format!("cannot read {}: {e}", path.display())))?;
        let map: HashMap<String, Vec<f64>> = serde_json::from_str(&raw)
            .map_err(|e| EmbedError::Config(format!("malformed {}: {e}", path.display())))?;
        Ok(Self::from_map(path.display().to_string(), map, max_text_chars))
    }

    pub fn from_map(source: String, map: HashMap<String, Vec<f64>>, max_text_chars: usize) -> Self {
        let vectors = map
            .into_iter()
            .map(|(k, v)| (truncate_chars(&k, max_text_chars).to_string(), v))
            .collect();
        Self { source, vectors }
    }
}

impl EmbeddingProvider for PrecomputedEmbeddings {
    fn id(&self) -> String {
        format!("precomputed:{}", self.source)
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                self.vectors
                    .get(t)
                    .cloned()
                    .ok_or_else(|| EmbedError::MissingEmbedding(t.clone()))
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequestBody<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponseBody {
    vectors: Vec<Vec<f64>>,
}

/// `POST {"texts": [...]}` -> `{"vectors": [[...], ...]}`.
pub struct HttpEmbedder {
    url: String,
    auth_header: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

enum HttpFailure {
    Transient(String),
    Permanent(String),
}

impl HttpEmbedder {
    pub fn new(
        url: &str,
        auth_header: &str,
        api_key: Option<String>,
        retry: RetryPolicy,
        timeout: Duration,
    ) -> Self {
        Self {
            url: url.to_string(),
            auth_header: auth_header.to_string(),
            api_key,
            retry,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn post_once(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, HttpFailure> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            let value = if self.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key.clone()
            };
            req = req.set(&self.auth_header, &value);
        }
        match req.send_json(EmbedRequestBody { texts }) {
            Ok(resp) => resp
                .into_json::<EmbedResponseBody>()
                .map(|b| b.vectors)
                .map_err(|e| HttpFailure::Permanent(format!("bad response body: {e}"))),
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Err(HttpFailure::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => Err(HttpFailure::Permanent(format!("HTTP {code}"))),
            Err(e) => Err(HttpFailure::Transient(e.to_string())),
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}", self.url)
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        self.retry
            .run(
                || self.post_once(texts),
                |e| matches!(e, HttpFailure::Transient(_)),
            )
            .map_err(|(e, attempts)| EmbedError::ProviderUnavailable {
                attempts,
                reason: match e {
                    HttpFailure::Transient(r) | HttpFailure::Permanent(r) => r,
                },
            })
    }
}
