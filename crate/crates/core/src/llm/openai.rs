//! OpenAI-compatible HTTP backend.
//!
//! Generation uses `POST {base}/chat/completions`; scoring uses the legacy
//! `POST {base}/completions` with `echo` and `logprobs`, which vLLM and
//! llama.cpp style servers still expose.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{GenerationRequest, LlmBackend, LlmError, ScoreRequest};

/// Environment variable holding the API key for the chat endpoint.
pub const LLM_KEY_ENV: &str = "LANGREPO_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAiConfig {
    /// Base URL up to and including the version segment, e.g. `http://host:8000/v1`.
    pub endpoint: String,
    pub model: String,
    /// Whether the server returns prompt log-probabilities on `/completions`.
    pub supports_logprobs: bool,
    /// Wrap prompts in `[INST] ... [/INST]` unless they already carry the markers.
    pub instruction_wrapping: bool,
    pub timeout_secs: u64,
}

impl Default for OpenAiConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8000/v1".into(),
            model: "mistralai/Mistral-7B-Instruct-v0.2".into(),
            supports_logprobs: true,
            instruction_wrapping: true,
            timeout_secs: 120,
        }
    }
}

pub struct OpenAiBackend {
    cfg: OpenAiConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiBackend {
    /// Reads the API key from [`LLM_KEY_ENV`] when set.
    pub fn new(cfg: OpenAiConfig) -> Self {
        let key = std::env::var(LLM_KEY_ENV).ok();
        Self::with_key(cfg, key)
    }

    pub fn with_key(cfg: OpenAiConfig, api_key: Option<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build();
        Self { cfg, api_key, agent }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{path}", self.cfg.endpoint.trim_end_matches('/'))
    }

    fn wrap(&self, prompt: &str) -> String {
        if self.cfg.instruction_wrapping && !prompt.trim_start().starts_with("[INST]") {
            format!("[INST] {prompt} [/INST]")
        } else {
            prompt.to_string()
        }
    }

    fn post(&self, path: &str, body: Value) -> Result<Value, LlmError> {
        let mut req = self.agent.post(&self.url(path));
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| LlmError::Transient(format!("unreadable response: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Err(classify_status(code, &text))
            }
            Err(e) => Err(LlmError::Transient(e.to_string())),
        }
    }
}

fn classify_status(code: u16, body: &str) -> LlmError {
    if code == 429 || code >= 500 {
        return LlmError::Transient(format!("HTTP {code}"));
    }
    let lower = body.to_lowercase();
    if lower.contains("context") && (lower.contains("length") || lower.contains("maximum")) {
        return LlmError::ContextOverflow(format!("HTTP {code}: {body}"));
    }
    LlmError::Rejected(format!("HTTP {code}: {body}"))
}

/// Sums log-probabilities of the tokens that end past the prefix.
///
/// Tokenizers often fuse the space before the first continuation word into
/// one token, so a token straddling the boundary counts toward the answer.
fn continuation_logprob(logprobs: &Value, prefix_chars: usize) -> Option<f64> {
    let tokens = logprobs.get("tokens")?.as_array()?;
    let lps = logprobs.get("token_logprobs")?.as_array()?;
    let offsets = logprobs.get("text_offset")?.as_array()?;
    if tokens.len() != lps.len() || tokens.len() != offsets.len() {
        return None;
    }
    let mut total = 0.0;
    let mut counted = 0;
    for i in 0..tokens.len() {
        let start = offsets[i].as_u64()? as usize;
        let end = start + tokens[i].as_str()?.chars().count();
        if end > prefix_chars {
            total += lps[i].as_f64()?;
            counted += 1;
        }
    }
    (counted > 0).then_some(total)
}

impl LlmBackend for OpenAiBackend {
    fn id(&self) -> String {
        format!("openai:{}#{}", self.cfg.endpoint, self.cfg.model)
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, LlmError> {
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": self.wrap(&req.prompt)}],
            "temperature": req.temperature,
            "max_tokens": req.max_new_tokens,
        });
        if let Some(stop) = &req.stop {
            body["stop"] = json!(stop);
        }
        let resp = self.post("chat/completions", body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Transient("response without choices[0].message.content".into()))
    }

    fn score(&self, req: &ScoreRequest) -> Result<f64, LlmError> {
        if !self.cfg.supports_logprobs {
            return Err(LlmError::ScoringUnsupported(format!(
                "{} is configured without log-probability support",
                self.cfg.endpoint
            )));
        }
        let body = json!({
            "model": self.cfg.model,
            "prompt": format!("{}{}", req.prefix, req.continuation),
            "max_tokens": 0,
            "temperature": 0,
            "echo": true,
            "logprobs": 0,
        });
        let resp = self.post("completions", body)?;
        let logprobs = resp
            .pointer("/choices/0/logprobs")
            .filter(|v| !v.is_null())
            .ok_or_else(|| LlmError::ScoringUnsupported("response carries no logprobs".into()))?;
        continuation_logprob(logprobs, req.prefix.chars().count())
            .ok_or_else(|| LlmError::ScoringUnsupported("malformed logprobs payload".into()))
    }
}
