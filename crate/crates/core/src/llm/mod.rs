//! Text generation and continuation scoring.
//!
//! [`LlmClient`] wraps any [`LlmBackend`] with response caching, retries with
//! exponential backoff, a bound on in-flight requests and a [`CallLedger`]
//! counting the backend calls actually issued.

mod cache;
mod mock;
mod openai;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::retry::RetryPolicy;

pub use cache::{CachedValue, ResponseCache};
pub use mock::MockBackend;
pub use openai::{OpenAiBackend, OpenAiConfig, LLM_KEY_ENV};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable { attempts: u32, reason: String },
    /// Retryable failure reported by a backend; the client turns it into
    /// `BackendUnavailable` once retries are exhausted.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("prompt exceeds the backend context window: {0}")]
    ContextOverflow(String),
    #[error("backend cannot score continuations: {0}")]
    ScoringUnsupported(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("response cache error: {0}")]
    Cache(String),
}

/// What a generation call is for; keys the call ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Rephrase,
    Summarize,
    Qa,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Purpose::Rephrase => "rephrase",
            Purpose::Summarize => "summarize",
            Purpose::Qa => "qa",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub stop: Option<Vec<String>>,
    pub purpose: Purpose,
    /// Re-ask counter. Part of the cache key so a re-ask after an
    /// unparseable reply reaches the backend instead of the cached reply.
    pub attempt: u32,
}

impl GenerationRequest {
    pub fn new(purpose: Purpose, prompt: impl Into<String>, max_new_tokens: u32) -> Self {
        Self {
            prompt: prompt.into(),
            max_new_tokens,
            temperature: 0.0,
            stop: None,
            purpose,
            attempt: 0,
        }
    }

    pub fn with_attempt(mut self, attempt: u32) -> Self {
        self.attempt = attempt;
        self
    }
}

/// Log-probability of `continuation` given `prefix`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRequest {
    pub prefix: String,
    pub continuation: String,
}

/// A model endpoint. Implementations are stateless from the caller's view.
pub trait LlmBackend: Send + Sync {
    /// Backend and model identity; part of every cache key.
    fn id(&self) -> String;

    fn generate(&self, req: &GenerationRequest) -> Result<String, LlmError>;

    /// Sum of token log-probabilities of the continuation.
    fn score(&self, req: &ScoreRequest) -> Result<f64, LlmError>;
}

/// Uncached backend calls per purpose, plus cache hits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLedger {
    pub counters: BTreeMap<Purpose, u64>,
    /// Continuation-scoring calls (log-likelihood classifier).
    pub score_calls: u64,
    pub cache_hits: u64,
}

impl CallLedger {
    pub fn count(&self, purpose: Purpose) -> u64 {
        self.counters.get(&purpose).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> u64 {
        self.counters.values().sum::<u64>() + self.score_calls
    }

    /// Calls made since `earlier` was taken.
    pub fn since(&self, earlier: &CallLedger) -> CallLedger {
        let counters = self
            .counters
            .iter()
            .map(|(p, n)| (*p, n - earlier.count(*p)))
            .collect();
        CallLedger {
            counters,
            score_calls: self.score_calls - earlier.score_calls,
            cache_hits: self.cache_hits - earlier.cache_hits,
        }
    }
}

impl fmt::Display for CallLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rephrase={} summarize={} qa={} score={} cache_hits={}",
            self.count(Purpose::Rephrase),
            self.count(Purpose::Summarize),
            self.count(Purpose::Qa),
            self.score_calls,
            self.cache_hits
        )
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// Caching, retrying, rate-bounded front end for one backend.
///
/// Safe to share across threads. Identical concurrent requests are
/// serialized on their cache key, so each distinct request reaches the
/// backend at most once while caching is on.
pub struct LlmClient {
    backend: Arc<dyn LlmBackend>,
    backend_id: String,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    limiter: Semaphore,
    ledger: Mutex<CallLedger>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl LlmClient {
    pub const DEFAULT_PARALLELISM: usize = 4;

    /// In-memory cache, default retry policy, default parallelism.
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        let backend_id = backend.id();
        Self {
            backend,
            backend_id,
            cache: Some(ResponseCache::in_memory()),
            retry: RetryPolicy::default(),
            limiter: Semaphore::new(Self::DEFAULT_PARALLELISM),
            ledger: Mutex::new(CallLedger::default()),
            key_locks: Mutex::new(HashMap::new()),
        }
    }

    /// Persists responses under `dir` so repeated runs reuse earlier calls.
    pub fn with_cache_dir(mut self, dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        self.cache = Some(ResponseCache::on_disk(dir)?);
        Ok(self)
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_parallelism(mut self, n: usize) -> Self {
        self.limiter = Semaphore::new(n);
        self
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn ledger(&self) -> CallLedger {
        self.ledger.lock().unwrap().clone()
    }

    fn cache_key(&self, kind: &str, payload: &impl Serialize) -> String {
        let body = serde_json::to_string(payload).expect("request serializes");
        let mut h = Sha256::new();
        h.update(self.backend_id.as_bytes());
        h.update([0]);
        h.update(kind.as_bytes());
        h.update([0]);
        h.update(body.as_bytes());
        hex::encode(h.finalize())
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.key_locks.lock().unwrap();
        Arc::clone(locks.entry(key.to_string()).or_default())
    }

    fn call_backend<T>(&self, op: impl Fn() -> Result<T, LlmError>) -> Result<T, LlmError> {
        let _permit = self.limiter.acquire();
        self.retry
            .run(op, |e| matches!(e, LlmError::Transient(_)))
            .map_err(|(e, attempts)| match e {
                LlmError::Transient(reason) => LlmError::BackendUnavailable { attempts, reason },
                other => other,
            })
    }

    fn cached<T>(
        &self,
        key: Option<String>,
        fetch: impl Fn() -> Result<T, LlmError>,
        record: impl Fn(&mut CallLedger),
        to_cache: impl Fn(&T) -> CachedValue,
        from_cache: impl Fn(CachedValue) -> Option<T>,
    ) -> Result<T, LlmError> {
        let (Some(cache), Some(key)) = (&self.cache, key) else {
            let out = self.call_backend(fetch)?;
            record(&mut self.ledger.lock().unwrap());
            return Ok(out);
        };
        let lock = self.key_lock(&key);
        let _guard = lock.lock().unwrap();
        if let Some(hit) = cache.get(&key)?.and_then(&from_cache) {
            self.ledger.lock().unwrap().cache_hits += 1;
            return Ok(hit);
        }
        let out = self.call_backend(fetch)?;
        record(&mut self.ledger.lock().unwrap());
        cache.put(&key, to_cache(&out))?;
        Ok(out)
    }

    /// Generates a completion, consulting the cache first for deterministic requests.
    pub fn generate(&self, req: &GenerationRequest) -> Result<String, LlmError> {
        let key = (req.temperature == 0.0).then(|| self.cache_key("generate", req));
        self.cached(
            key,
            || self.backend.generate(req),
            |l| *l.counters.entry(req.purpose).or_insert(0) += 1,
            |s| CachedValue::Text(s.clone()),
            |v| match v {
                CachedValue::Text(s) => Some(s),
                CachedValue::Score(_) => None,
            },
        )
    }

    /// Scores a continuation; results are always cacheable.
    pub fn score(&self, req: &ScoreRequest) -> Result<f64, LlmError> {
        if req.continuation.is_empty() {
            return Err(LlmError::Rejected("empty continuation".into()));
        }
        let key = Some(self.cache_key("score", req));
        self.cached(
            key,
            || self.backend.score(req),
            |l| l.score_calls += 1,
            |s| CachedValue::Score(*s),
            |v| match v {
                CachedValue::Score(s) => Some(s),
                CachedValue::Text(_) => None,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
    }

    impl LlmBackend for Flaky {
        fn id(&self) -> String {
            "flaky".into()
        }
        fn generate(&self, _req: &GenerationRequest) -> Result<String, LlmError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(LlmError::Transient("HTTP 500".into()))
            } else {
                Ok("ok".into())
            }
        }
        fn score(&self, _req: &ScoreRequest) -> Result<f64, LlmError> {
            Err(LlmError::ScoringUnsupported("flaky".into()))
        }
    }

    #[test]
    fn second_identical_request_is_a_cache_hit() {
        let mock = Arc::new(MockBackend::new().with_reply("P", "1. a\n2. b"));
        let client = LlmClient::new(mock.clone());
        let req = GenerationRequest::new(Purpose::Rephrase, "P", 64);
        assert_eq!(client.generate(&req).unwrap(), "1. a\n2. b");
        assert_eq!(client.generate(&req).unwrap(), "1. a\n2. b");
        let ledger = client.ledger();
        assert_eq!(ledger.cache_hits, 1);
        assert_eq!(ledger.count(Purpose::Rephrase), 1);
        assert_eq!(mock.generate_calls(), 1);
    }

    #[test]
    fn attempts_and_temperature_bypass_cache() {
        let mock = Arc::new(MockBackend::new());
        let client = LlmClient::new(mock.clone());
        let req = GenerationRequest::new(Purpose::Qa, "Q", 8);
        client.generate(&req).unwrap();
        client.generate(&req.clone().with_attempt(1)).unwrap();
        let mut hot = req.clone();
        hot.temperature = 0.7;
        client.generate(&hot).unwrap();
        client.generate(&hot).unwrap();
        assert_eq!(mock.generate_calls(), 4);
        assert_eq!(client.ledger().count(Purpose::Qa), 4);
        assert_eq!(client.ledger().cache_hits, 0);
    }

    #[test]
    fn retries_then_unavailable() {
        let backend = Arc::new(Flaky {
            failures: 3,
            calls: AtomicUsize::new(0),
        });
        let client = LlmClient::new(backend.clone()).with_retry(RetryPolicy::no_backoff(2));
        let err = client
            .generate(&GenerationRequest::new(Purpose::Summarize, "x", 8))
            .unwrap_err();
        assert!(matches!(err, LlmError::BackendUnavailable { attempts: 3, .. }));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        assert_eq!(client.ledger().total_calls(), 0);
    }

    #[test]
    fn recovers_within_retry_budget() {
        let backend = Arc::new(Flaky {
            failures: 2,
            calls: AtomicUsize::new(0),
        });
        let client = LlmClient::new(backend).with_retry(RetryPolicy::no_backoff(2));
        let out = client
            .generate(&GenerationRequest::new(Purpose::Summarize, "x", 8))
            .unwrap();
        assert_eq!(out, "ok");
        assert_eq!(client.ledger().count(Purpose::Summarize), 1);
    }

    #[test]
    fn scores_cached_and_counted() {
        let mock = Arc::new(MockBackend::new().with_score("p", "c", -2.5));
        let client = LlmClient::new(mock.clone());
        let req = ScoreRequest {
            prefix: "p".into(),
            continuation: "c".into(),
        };
        assert_eq!(client.score(&req).unwrap(), -2.5);
        assert_eq!(client.score(&req).unwrap(), -2.5);
        let default = ScoreRequest {
            prefix: "anything".into(),
            continuation: "abcde".into(),
        };
        assert_eq!(client.score(&default).unwrap(), -0.5);
        let l = client.ledger();
        assert_eq!((l.score_calls, l.cache_hits), (2, 1));
    }

    #[test]
    fn concurrent_identical_requests_hit_backend_once() {
        let mock = Arc::new(MockBackend::new());
        let client = Arc::new(LlmClient::new(mock.clone()).with_parallelism(8));
        std::thread::scope(|s| {
            for _ in 0..16 {
                let c = Arc::clone(&client);
                s.spawn(move || {
                    c.generate(&GenerationRequest::new(Purpose::Qa, "same", 4))
                        .unwrap()
                });
            }
        });
        assert_eq!(mock.generate_calls(), 1);
        assert_eq!(client.ledger().cache_hits, 15);
    }

    #[test]
    fn disk_cache_survives_new_client() {
        let dir = tempfile::tempdir().unwrap();
        let req = GenerationRequest::new(Purpose::Summarize, "- one\n- two", 64);
        let first = Arc::new(MockBackend::new());
        let a = LlmClient::new(first.clone()).with_cache_dir(dir.path()).unwrap();
        let out = a.generate(&req).unwrap();

        let second = Arc::new(MockBackend::new());
        let b = LlmClient::new(second.clone()).with_cache_dir(dir.path()).unwrap();
        assert_eq!(b.generate(&req).unwrap(), out);
        assert_eq!(second.generate_calls(), 0);
        assert_eq!(b.ledger().total_calls(), 0);
    }
}
