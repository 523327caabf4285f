//! Prompt rendering and strict parsing of rephrase replies.
//!
//! Rephrase and summarize wording lives in versioned template assets
//! (`assets/prompts/*.txt`) so experiments can swap them. The two QA
//! prompts are fixed strings and rendered byte-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Joins the member texts of one group inside a rephrase list item.
pub const GROUP_MEMBER_SEPARATOR: &str = " | ";

const DEFAULT_REPHRASE: &str = include_str!("../assets/prompts/rephrase.txt");
const DEFAULT_SUMMARIZE: &str = include_str!("../assets/prompts/summarize.txt");

const QA_GENERATIVE: &str = "[INST] <<SYS>> You are a helpful expert in first person view video analysis. <</SYS>> Please provide a single-letter answer (A, B, C, D, E) to the following multiple-choice question, and your answer must be one of the letters (A, B, C, D, or E). You must not provide any other response or explanation. You are given some language descriptions of a first person view video. The video is ${duration} seconds long. Here are the descriptions: ${description}.\n You are going to answer a multiple choice question based on the descriptions, and your answer should be a single letter chosen from the choices.\n Here is the question: ${question}.\n Here are the choices.\n A: ${optionA}\n B: ${optionB}\n C: ${optionC}\n D: ${optionD}\n E: ${optionE}\n [/INST]";

/// Option count the generative prompt is written for.
pub const GENERATIVE_OPTION_COUNT: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("expected {expected} list items, found {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("reply is not a plain numbered list: {0}")]
    FormatError(String),
    #[error("expected {expected} answer options, got {actual}")]
    OptionCountError { expected: String, actual: usize },
    #[error("template {template} references unknown placeholder ${{{name}}}")]
    MissingVariable { template: String, name: String },
    #[error("malformed template: {0}")]
    MalformedTemplate(String),
}

/// A text template with `${name}` placeholders and an embedded version string.
///
/// Asset files start with a `version: <string>` line followed by a `---`
/// line; everything after is the body.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    version: String,
    body: String,
}

impl Template {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let (head, body) = text
            .split_once("\n---\n")
            .ok_or_else(|| PromptError::MalformedTemplate("missing `---` separator".into()))?;
        let version = head
            .trim()
            .strip_prefix("version:")
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| PromptError::MalformedTemplate("missing `version:` header".into()))?;
        Ok(Self {
            version: version.to_string(),
            body: body.strip_suffix('\n').unwrap_or(body).to_string(),
        })
    }

    pub fn from_body(version: &str, body: &str) -> Self {
        Self {
            version: version.to_string(),
            body: body.to_string(),
        }
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Substitutes placeholders in one pass; substituted values are never rescanned.
    pub fn render(&self, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.body.len() * 2);
        let mut rest = self.body.as_str();
        while let Some(start) = rest.find("${") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find('}') else {
                out.push_str(&rest[start..]);
                return Ok(out);
            };
            let name = &after[..end];
            let value = vars
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::MissingVariable {
                    template: self.version.clone(),
                    name: name.to_string(),
                })?;
            out.push_str(value);
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// The swappable write- and read-path templates.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub rephrase: Template,
    pub summarize: Template,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            rephrase: Template::parse(DEFAULT_REPHRASE).expect("bundled rephrase template"),
            summarize: Template::parse(DEFAULT_SUMMARIZE).expect("bundled summarize template"),
        }
    }
}

impl PromptSet {
    /// Loads `rephrase.txt` and `summarize.txt` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.as_ref().join(name);
            std::fs::read_to_string(&path)
                .map_err(|e| PromptError::MalformedTemplate(format!("{}: {e}", path.display())))
                .and_then(|t| Template::parse(&t))
        };
        Ok(Self {
            rephrase: read("rephrase.txt")?,
            summarize: read("summarize.txt")?,
        })
    }

    /// Combined version tag recorded in repository provenance.
    pub fn version(&self) -> String {
        format!("{}+{}", self.rephrase.version(), self.summarize.version())
    }

    /// Renders the rephrase prompt for a non-empty list of groups.
    pub fn render_rephrase(&self, input: &RephrasePromptInput) -> String {
        assert!(!input.groups.is_empty(), "rephrase needs at least one group");
        let items = number_list(input.groups.iter().map(|g| single_line(g)));
        let count = input.groups.len().to_string();
        self.rephrase
            .render(&[("count", &count), ("items", &items)])
            .expect("rephrase template placeholders")
    }

    /// Renders the summarize prompt; `question`, when given, is appended as context.
    pub fn render_summarize(&self, entry_lines: &[String], question: Option<&str>) -> String {
        assert!(!entry_lines.is_empty(), "summarize needs at least one line");
        let lines = entry_lines
            .iter()
            .map(|l| format!("- {}", single_line(l)))
            .collect::<Vec<_>>()
            .join("\n");
        let question_context = question
            .map(|q| {
                format!(
                    "\nThe summary will be used to answer the following question, so keep the details relevant to it: {q}"
                )
            })
            .unwrap_or_default();
        self.summarize
            .render(&[("lines", &lines), ("question_context", &question_context)])
            .expect("summarize template placeholders")
    }
}

fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical `1. a\n2. b` rendering.
pub fn number_list<I, S>(items: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    items
        .into_iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Input of the rephrase call: one string per group, members joined by `" | "`.
#[derive(Debug, Clone, PartialEq)]
pub struct RephrasePromptInput {
    pub groups: Vec<String>,
}

impl RephrasePromptInput {
    pub fn from_members<S: AsRef<str>>(groups: &[Vec<S>]) -> Self {
        Self {
            groups: groups
                .iter()
                .map(|members| {
                    members
                        .iter()
                        .map(AsRef::as_ref)
                        .collect::<Vec<_>>()
                        .join(GROUP_MEMBER_SEPARATOR)
                })
                .collect(),
        }
    }
}

/// Parses a reply that must be exactly `expected_n` numbered lines.
///
/// Accepts `N.` or `N)` numbering counting up from 1, and blank lines before
/// or after the list. Anything else is a [`PromptError::FormatError`].
pub fn parse_rephrase_output(text: &str, expected_n: usize) -> Result<Vec<String>, PromptError> {
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    let first = lines.iter().position(|l| !l.is_empty());
    let last = lines.iter().rposition(|l| !l.is_empty());
    let body = match (first, last) {
        (Some(a), Some(b)) => &lines[a..=b],
        _ => &[][..],
    };
    let mut items = Vec::with_capacity(body.len());
    for (i, line) in body.iter().enumerate() {
        let digits = line.chars().take_while(char::is_ascii_digit).count();
        if digits == 0 {
            return Err(PromptError::FormatError(format!("line {:?} is not numbered", line)));
        }
        let n: usize = line[..digits]
            .parse()
            .map_err(|_| PromptError::FormatError(format!("bad number in {line:?}")))?;
        if n != i + 1 {
            return Err(PromptError::FormatError(format!(
                "item {} is numbered {n}",
                i + 1
            )));
        }
        let rest = &line[digits..];
        let text = rest
            .strip_prefix('.')
            .or_else(|| rest.strip_prefix(')'))
            .ok_or_else(|| PromptError::FormatError(format!("line {line:?} lacks `.` or `)`")))?
            .trim();
        if text.is_empty() {
            return Err(PromptError::FormatError(format!("item {n} is empty")));
        }
        items.push(text.to_string());
    }
    if items.len() != expected_n {
        return Err(PromptError::CountMismatch {
            expected: expected_n,
            actual: items.len(),
        });
    }
    Ok(items)
}

/// Input shared by both QA classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct QaPromptInput {
    pub description: String,
    pub question: String,
    pub options: Vec<String>,
    pub duration_s: f64,
}

/// Log-likelihood prompt layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoglikFormat {
    /// `description question option`, for full-sentence answers.
    #[default]
    Plain,
    /// Enumerated choices ending in `The correct answer is, X: option`, for short answer phrases.
    Structured,
}

/// Letter for option `index`: A, B, ... Z, then AA, AB, ...
pub fn option_letter(index: usize) -> String {
    let mut n = index;
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (n % 26) as u8);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

fn format_seconds(s: f64) -> String {
    format!("{s}")
}

/// Renders the five-option generative prompt exactly.
pub fn render_qa_generative(input: &QaPromptInput) -> Result<String, PromptError> {
    if input.options.len() != GENERATIVE_OPTION_COUNT {
        return Err(PromptError::OptionCountError {
            expected: GENERATIVE_OPTION_COUNT.to_string(),
            actual: input.options.len(),
        });
    }
    let duration = format_seconds(input.duration_s);
    let o = &input.options;
    Template::from_body("qa-generative", QA_GENERATIVE).render(&[
        ("duration", &duration),
        ("description", &input.description),
        ("question", &input.question),
        ("optionA", &o[0]),
        ("optionB", &o[1]),
        ("optionC", &o[2]),
        ("optionD", &o[3]),
        ("optionE", &o[4]),
    ])
}

/// Splits the log-likelihood prompt for `option_index` into scored and unscored parts.
///
/// Only the returned continuation is scored; every option of one item shares
/// the same prefix within a format.
pub fn render_qa_loglik(
    input: &QaPromptInput,
    option_index: usize,
    format: LoglikFormat,
) -> Result<(String, String), PromptError> {
    if input.options.len() < 2 || option_index >= input.options.len() {
        return Err(PromptError::OptionCountError {
            expected: format!("at least 2 options and an index below {}", input.options.len()),
            actual: input.options.len(),
        });
    }
    let option = &input.options[option_index];
    Ok(match format {
        LoglikFormat::Plain => (
            format!("{} {} ", input.description, input.question),
            option.clone(),
        ),
        LoglikFormat::Structured => {
            let mut prefix = format!(
                "{} Based on the description above, answer the following question: {}? Select one of these choices as the answer:\n",
                input.description, input.question
            );
            for (i, o) in input.options.iter().enumerate() {
                prefix.push_str(&format!(" {}: {}\n", option_letter(i), o));
            }
            prefix.push_str(" The correct answer is, ");
            (prefix, format!("{}: {}", option_letter(option_index), option))
        }
    })
}
