//! Deterministic offline backend.
//!
//! Scripted exact-match replies take precedence; then an optional custom
//! rule; then the built-in rules:
//!
//! * rephrase: every numbered prompt line `N. a | b | c` becomes `N. a`
//! * summarize: the `- ` bullet lines of the prompt joined with single spaces
//! * qa: `A`
//! * score: `-(characters in continuation) / 10`

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{GenerationRequest, LlmBackend, LlmError, Purpose, ScoreRequest};
use crate::prompts::GROUP_MEMBER_SEPARATOR;

type GenerateRule = Box<dyn Fn(&GenerationRequest) -> Option<String> + Send + Sync>;
type ScoreRule = Box<dyn Fn(&ScoreRequest) -> Option<f64> + Send + Sync>;

#[derive(Default)]
pub struct MockBackend {
    replies: HashMap<String, String>,
    scores: HashMap<(String, String), f64>,
    generate_rule: Option<GenerateRule>,
    score_rule: Option<ScoreRule>,
    scoring_disabled: bool,
    generate_calls: AtomicUsize,
    score_calls: AtomicUsize,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replies `reply` whenever the prompt is exactly `prompt`.
    pub fn with_reply(mut self, prompt: impl Into<String>, reply: impl Into<String>) -> Self {
        self.replies.insert(prompt.into(), reply.into());
        self
    }

    pub fn with_score(
        mut self,
        prefix: impl Into<String>,
        continuation: impl Into<String>,
        score: f64,
    ) -> Self {
        self.scores.insert((prefix.into(), continuation.into()), score);
        self
    }

    /// Custom generation rule consulted after scripted replies; `None` falls through.
    pub fn with_generate_rule(
        mut self,
        rule: impl Fn(&GenerationRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.generate_rule = Some(Box::new(rule));
        self
    }

    pub fn with_score_rule(
        mut self,
        rule: impl Fn(&ScoreRequest) -> Option<f64> + Send + Sync + 'static,
    ) -> Self {
        self.score_rule = Some(Box::new(rule));
        self
    }

    /// Behave like an endpoint without log-probability support.
    pub fn without_scoring(mut self) -> Self {
        self.scoring_disabled = true;
        self
    }

    pub fn generate_calls(&self) -> usize {
        self.generate_calls.load(Ordering::SeqCst)
    }

    pub fn score_calls(&self) -> usize {
        self.score_calls.load(Ordering::SeqCst)
    }

    pub fn default_reply(req: &GenerationRequest) -> String {
        match req.purpose {
            Purpose::Rephrase => req
                .prompt
                .lines()
                .filter_map(numbered_line)
                .map(|(n, body)| {
                    let first = body.split(GROUP_MEMBER_SEPARATOR).next().unwrap_or(body);
                    format!("{n}. {}", first.trim())
                })
                .collect::<Vec<_>>()
                .join("\n"),
            Purpose::Summarize => req
                .prompt
                .lines()
                .filter_map(|l| l.strip_prefix("- "))
                .map(str::trim)
                .collect::<Vec<_>>()
                .join(" "),
            Purpose::Qa => "A".to_string(),
        }
    }

    pub fn default_score(req: &ScoreRequest) -> f64 {
        -(req.continuation.chars().count() as f64) / 10.0
    }
}

fn numbered_line(line: &str) -> Option<(u32, &str)> {
    let line = line.trim();
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let n = line[..digits].parse().ok()?;
    let rest = line[digits..].strip_prefix(". ")?;
    Some((n, rest))
}

impl LlmBackend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, LlmError> {
        self.generate_calls.fetch_add(1, Ordering::SeqCst);
        if let Some(r) = self.replies.get(&req.prompt) {
            return Ok(r.clone());
        }
        if let Some(r) = self.generate_rule.as_ref().and_then(|rule| rule(req)) {
            return Ok(r);
        }
        Ok(Self::default_reply(req))
    }

    fn score(&self, req: &ScoreRequest) -> Result<f64, LlmError> {
        if self.scoring_disabled {
            return Err(LlmError::ScoringUnsupported("mock scoring disabled".into()));
        }
        self.score_calls.fetch_add(1, Ordering::SeqCst);
        if let Some(s) = self
            .scores
            .get(&(req.prefix.clone(), req.continuation.clone()))
        {
            return Ok(*s);
        }
        if let Some(s) = self.score_rule.as_ref().and_then(|rule| rule(req)) {
            return Ok(s);
        }
        Ok(Self::default_score(req))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rules() {
        let m = MockBackend::new();
        let reph = GenerationRequest::new(
            Purpose::Rephrase,
            "Rewrite these.\n\n1. a | a'\n2. b | b' | b''\n",
            64,
        );
        assert_eq!(m.generate(&reph).unwrap(), "1. a\n2. b");
        let sum = GenerationRequest::new(Purpose::Summarize, "Lines:\n- x (x2)\n- y\nSummarize.", 64);
        assert_eq!(m.generate(&sum).unwrap(), "x (x2) y");
        let s = ScoreRequest {
            prefix: "q ".into(),
            continuation: "abcde".into(),
        };
        assert_eq!(m.score(&s).unwrap(), -0.5);
    }

    #[test]
    fn deterministic_across_instances() {
        let req = GenerationRequest::new(Purpose::Rephrase, "1. p | q\n2. r", 64);
        let a = MockBackend::new().generate(&req).unwrap();
        let b = MockBackend::new().generate(&req).unwrap();
        assert_eq!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn scoring_can_be_disabled() {
        let m = MockBackend::new().without_scoring();
        let s = ScoreRequest {
            prefix: "p".into(),
            continuation: "c".into(),
        };
        assert!(matches!(m.score(&s), Err(LlmError::ScoringUnsupported(_))));
    }
}
