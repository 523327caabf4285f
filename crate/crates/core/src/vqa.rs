//! Multiple-choice answering over read-out descriptions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{GenerationRequest, LlmClient, Purpose, ScoreRequest};
use crate::prompts::{
    render_qa_generative, render_qa_loglik, LoglikFormat, QaPromptInput, GENERATIVE_OPTION_COUNT,
};

/// Token budget for the generative reply; only a letter is expected.
pub const QA_MAX_TOKENS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub question_id: String,
    pub video_id: String,
    pub question: String,
    pub options: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_tag: Option<String>,
}

impl QaItem {
    pub fn validate(&self) -> Result<(), String> {
        if self.options.len() < 2 {
            return Err(format!(
                "question {} has {} options, need at least 2",
                self.question_id,
                self.options.len()
            ));
        }
        if let Some(a) = self.answer_index {
            if a >= self.options.len() {
                return Err(format!(
                    "question {} answer_index {a} is out of range for {} options",
                    self.question_id,
                    self.options.len()
                ));
            }
        }
        Ok(())
    }

    pub fn is_generative_compatible(&self) -> bool {
        self.options.len() == GENERATIVE_OPTION_COUNT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Generative,
    #[default]
    Loglik,
}

/// How option log-probabilities are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Raw sum over continuation tokens.
    #[default]
    Sum,
    /// Sum divided by the continuation length in characters.
    PerChar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub question_id: String,
    pub choice_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_option_scores: Option<Vec<f64>>,
    pub classifier: Classifier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_output: Option<String>,
    /// Set when no answer letter could be parsed and index 0 was substituted.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

impl Prediction {
    pub fn is_correct(&self, item: &QaItem) -> Option<bool> {
        item.answer_index.map(|a| a == self.choice_index)
    }
}

fn prompt_input(descriptions: &[String], item: &QaItem, duration_s: f64) -> QaPromptInput {
    QaPromptInput {
        description: descriptions.join("\n"),
        question: item.question.clone(),
        options: item.options.clone(),
        duration_s,
    }
}

/// First standalone letter A-E in `reply`, case-insensitive, as an index.
pub fn parse_answer_letter(reply: &str) -> Option<usize> {
    let chars: Vec<char> = reply.chars().collect();
    (0..chars.len()).find_map(|i| {
        let c = chars[i].to_ascii_uppercase();
        let before = i == 0 || !chars[i - 1].is_alphanumeric();
        let after = i + 1 == chars.len() || !chars[i + 1].is_alphanumeric();
        (('A'..='E').contains(&c) && before && after).then(|| (c as u8 - b'A') as usize)
    })
}

/// Generative classifier: asks for a letter, re-asks once, then falls back to 0.
pub fn answer_generative(
    descriptions: &[String],
    item: &QaItem,
    duration_s: f64,
    llm: &LlmClient,
) -> Result<Prediction> {
    let prompt = render_qa_generative(&prompt_input(descriptions, item, duration_s))?;
    let mut raw = String::new();
    for attempt in 0..2 {
        let req = GenerationRequest::new(Purpose::Qa, prompt.clone(), QA_MAX_TOKENS).with_attempt(attempt);
        raw = llm.generate(&req)?;
        if let Some(choice_index) = parse_answer_letter(&raw) {
            return Ok(Prediction {
                question_id: item.question_id.clone(),
                choice_index,
                per_option_scores: None,
                classifier: Classifier::Generative,
                raw_output: Some(raw),
                fallback: false,
            });
        }
    }
    log::warn!("question {}: no answer letter in {raw:?}, using option A", item.question_id);
    Ok(Prediction {
        question_id: item.question_id.clone(),
        choice_index: 0,
        per_option_scores: None,
        classifier: Classifier::Generative,
        raw_output: Some(raw),
        fallback: true,
    })
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Log-likelihood classifier with raw summed scores.
pub fn answer_loglik(
    descriptions: &[String],
    item: &QaItem,
    format: LoglikFormat,
    llm: &LlmClient,
) -> Result<Prediction> {
    answer_loglik_with(descriptions, item, format, Normalization::Sum, llm)
}

pub fn answer_loglik_with(
    descriptions: &[String],
    item: &QaItem,
    format: LoglikFormat,
    normalization: Normalization,
    llm: &LlmClient,
) -> Result<Prediction> {
    item.validate().map_err(Error::Config)?;
    let input = prompt_input(descriptions, item, 0.0);
    let scores = (0..item.options.len())
        .into_par_iter()
        .map(|i| {
            let (prefix, continuation) = render_qa_loglik(&input, i, format)?;
            let chars = continuation.chars().count().max(1) as f64;
            let s = llm.score(&ScoreRequest { prefix, continuation })?;
            Ok(match normalization {
                Normalization::Sum => s,
                Normalization::PerChar => s / chars,
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Prediction {
        question_id: item.question_id.clone(),
        choice_index: argmax(&scores),
        per_option_scores: Some(scores),
        classifier: Classifier::Loglik,
        raw_output: None,
        fallback: false,
    })
}

/// Dispatches to the configured classifier.
pub fn answer(
    descriptions: &[String],
    item: &QaItem,
    duration_s: f64,
    classifier: Classifier,
    format: LoglikFormat,
    llm: &LlmClient,
) -> Result<Prediction> {
    match classifier {
        Classifier::Generative => answer_generative(descriptions, item, duration_s, llm),
        Classifier::Loglik => answer_loglik(descriptions, item, format, llm),
    }
}
