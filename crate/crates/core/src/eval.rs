//! Dataset loading and accuracy evaluation for LangRepo and the caption-summary baselines.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{chunk_captions, load_captions, transform_rate, CaptionSet, RateFactor};
use crate::llm::{CallLedger, GenerationRequest, Purpose};
use crate::prompts::LoglikFormat;
use crate::repository::{build, read_from_repo, BuildConfig, Providers, Repository};
use crate::vqa::{answer, Classifier, Prediction, QaItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Build, read, then classify.
    Langrepo,
    /// One summary over every caption of the video.
    LloviWhole,
    /// One summary per first-scale chunk, without grouping.
    LloviChunked,
}

impl EvalMode {
    pub const ALL: [EvalMode; 3] = [EvalMode::Langrepo, EvalMode::LloviWhole, EvalMode::LloviChunked];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Langrepo => "langrepo",
            EvalMode::LloviWhole => "llovi-whole",
            EvalMode::LloviChunked => "llovi-chunked",
        }
    }
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?}, expected langrepo, llovi-whole or llovi-chunked"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub build: BuildConfig,
    pub classifier: Classifier,
    pub loglik_format: LoglikFormat,
    /// Processing order seed. Results do not depend on it.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    /// `n_correct / n_items`, or 0 when no item carries an answer.
    pub overall_accuracy: f64,
    pub per_split: BTreeMap<String, f64>,
    /// Items with a ground-truth answer.
    pub n_items: usize,
    pub n_correct: usize,
    /// Items without a ground-truth answer, predicted but not scored.
    pub n_unscored: usize,
    /// Predictions that used the generative fallback.
    pub n_fallback: usize,
    /// Backend calls made during this evaluation.
    pub ledger_snapshot: CallLedger,
    /// Whitespace tokens of description text handed to the classifier, over all items.
    pub description_tokens: u64,
    pub predictions: Vec<Prediction>,
}

#[derive(Deserialize)]
struct DatasetFile {
    items: Vec<QaItem>,
}

pub fn load_qa_dataset(path: impl AsRef<Path>) -> Result<Vec<QaItem>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_qa_dataset(&raw, &path.display().to_string())
}

pub fn parse_qa_dataset(raw: &str, origin: &str) -> Result<Vec<QaItem>> {
    let malformed = |reason: String| Error::MalformedFile {
        path: origin.to_string(),
        reason,
    };
    let file: DatasetFile = serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for item in &file.items {
        item.validate().map_err(malformed)?;
        if !seen.insert(item.question_id.as_str()) {
            return Err(malformed(format!("duplicate question_id {}", item.question_id)));
        }
    }
    Ok(file.items)
}

/// Loads `<dir>/<video_id>.json` for every video referenced by `items`.
pub fn load_captions_dir(dir: impl AsRef<Path>, items: &[QaItem]) -> Result<HashMap<String, CaptionSet>> {
    let dir = dir.as_ref();
    let videos: BTreeSet<&str> = items.iter().map(|i| i.video_id.as_str()).collect();
    videos
        .into_iter()
        .map(|v| {
            let path = dir.join(format!("{v}.json"));
            if !path.exists() {
                return Err(Error::MissingCaptions(v.to_string()));
            }
            Ok((v.to_string(), load_captions(&path)?))
        })
        .collect()
}

#[derive(Serialize)]
struct PredictionRecord<'a> {
    question_id: &'a str,
    choice_index: usize,
    classifier: Classifier,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<&'a [f64]>,
}

#[derive(Serialize)]
struct PredictionsFile<'a> {
    predictions: Vec<PredictionRecord<'a>>,
}

pub fn predictions_json(predictions: &[Prediction]) -> String {
    let file = PredictionsFile {
        predictions: predictions
            .iter()
            .map(|p| PredictionRecord {
                question_id: &p.question_id,
                choice_index: p.choice_index,
                classifier: p.classifier,
                scores: p.per_option_scores.as_deref(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("predictions serialize") + "\n"
}

fn seeded_order(items: &[QaItem], seed: Option<u64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    if let Some(seed) = seed {
        order.sort_by_cached_key(|&i| {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(items[i].question_id.as_bytes());
            h.finalize()
        });
    }
    order
}

fn count_tokens(descriptions: &[String]) -> u64 {
    descriptions.iter().map(|d| d.split_whitespace().count() as u64).sum()
}

fn summarize(lines: &[String], question: &str, cfg: &BuildConfig, providers: &Providers) -> Result<String> {
    let prompt = providers.prompts.render_summarize(lines, Some(question));
    let req = GenerationRequest::new(Purpose::Summarize, prompt, cfg.summarize_max_tokens);
    Ok(providers.llm.generate(&req)?)
}

fn descriptions_for(
    item: &QaItem,
    set: &CaptionSet,
    repo: Option<&Repository>,
    cfg: &BuildConfig,
    mode: EvalMode,
    providers: &Providers,
) -> Result<Vec<String>> {
    match mode {
        EvalMode::Langrepo => {
            let repo = repo.expect("repository built for every langrepo video");
            read_from_repo(repo, cfg, Some(&item.question), providers)
        }
        EvalMode::LloviWhole => {
            let lines: Vec<String> = set.captions.iter().map(|c| c.text.clone()).collect();
            Ok(vec![summarize(&lines, &item.question, cfg, providers)?])
        }
        EvalMode::LloviChunked => chunk_captions(set, cfg.chunk_schedule[0])
            .par_iter()
            .map(|chunk| {
                let lines: Vec<String> = chunk.items.iter().map(|c| c.text.clone()).collect();
                summarize(&lines, &item.question, cfg, providers)
            })
            .collect(),
    }
}

/// Runs one mode over `items` and scores the predictions.
///
/// In langrepo mode every video is built exactly once before any question
/// is answered.
pub fn evaluate(
    items: &[QaItem],
    captions: &HashMap<String, CaptionSet>,
    cfg: &EvalConfig,
    mode: EvalMode,
    providers: &Providers,
) -> Result<EvalReport> {
    cfg.build.validate()?;
    for item in items {
        item.validate().map_err(Error::Config)?;
        if !captions.contains_key(&item.video_id) {
            return Err(Error::MissingCaptions(item.video_id.clone()));
        }
    }
    if cfg.classifier == Classifier::Generative {
        let bad: Vec<&str> = items
            .iter()
            .filter(|i| !i.is_generative_compatible())
            .map(|i| i.question_id.as_str())
            .collect();
        if !bad.is_empty() {
            return Err(Error::Config(format!(
                "the generative classifier needs exactly 5 options; not compatible: {}",
                bad.join(", ")
            )));
        }
    }

    let before = providers.llm.ledger();
    let repos: HashMap<&str, Arc<Repository>> = if mode == EvalMode::Langrepo {
        let videos: BTreeSet<&str> = items.iter().map(|i| i.video_id.as_str()).collect();
        videos
            .into_par_iter()
            .map(|v| Ok((v, Arc::new(build(&captions[v], &cfg.build, providers)?))))
            .collect::<Result<_>>()?
    } else {
        HashMap::new()
    };

    let order = seeded_order(items, cfg.seed);
    let mut answered: Vec<(usize, Prediction, u64)> = order
        .par_iter()
        .map(|&i| {
            let item = &items[i];
            let set = &captions[&item.video_id];
            let repo = repos.get(item.video_id.as_str()).map(Arc::as_ref);
            let descriptions = descriptions_for(item, set, repo, &cfg.build, mode, providers)?;
            let p = answer(
                &descriptions,
                item,
                set.duration_s,
                cfg.classifier,
                cfg.loglik_format,
                &providers.llm,
            )?;
            Ok((i, p, count_tokens(&descriptions)))
        })
        .collect::<Result<_>>()?;
    answered.sort_by_key(|(i, _, _)| *i);

    let mut n_items = 0;
    let mut n_correct = 0;
    let mut splits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, p, _) in &answered {
        let item = &items[*i];
        let Some(correct) = p.is_correct(item) else {
            continue;
        };
        n_items += 1;
        n_correct += correct as usize;
        if let Some(tag) = &item.split_tag {
            let s = splits.entry(tag.clone()).or_default();
            s.0 += correct as usize;
            s.1 += 1;
        }
    }
    let ratio = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    Ok(EvalReport {
        mode,
        overall_accuracy: ratio(n_correct, n_items),
        per_split: splits.into_iter().map(|(k, (c, n))| (k, ratio(c, n))).collect(),
        n_items,
        n_correct,
        n_unscored: items.len() - n_items,
        n_fallback: answered.iter().filter(|(_, p, _)| p.fallback).count(),
        ledger_snapshot: providers.llm.ledger().since(&before),
        description_tokens: answered.iter().map(|(_, _, t)| t).sum(),
        predictions: answered.into_iter().map(|(_, p, _)| p).collect(),
    })
}

/// Evaluates once per caption-rate factor, in the order given.
pub fn run_length_ablation(
    items: &[QaItem],
    captions: &HashMap<String, CaptionSet>,
    factors: &[RateFactor],
    cfg: &EvalConfig,
    mode: EvalMode,
    providers: &Providers,
) -> Result<Vec<(RateFactor, EvalReport)>> {
    factors
        .iter()
        .map(|&f| {
            let scaled: HashMap<String, CaptionSet> = captions
                .iter()
                .map(|(v, set)| (v.clone(), transform_rate(set, f)))
                .collect();
            Ok((f, evaluate(items, &scaled, cfg, mode, providers)?))
        })
        .collect()
}

/// Plain-text table, one row per report.
pub fn render_table(rows: &[(String, &EvalReport)]) -> String {
    let splits: BTreeSet<&str> = rows
        .iter()
        .flat_map(|(_, r)| r.per_split.keys().map(String::as_str))
        .collect();
    let mut out = format!("{:<24} {:>8} {:>6}", "run", "accuracy", "items");
    for s in &splits {
        let _ = write!(out, " {s:>12}");
    }
    let _ = write!(out, " {:>10} {:>9}", "llm calls", "desc tok");
    out.push('\n');
    for (label, r) in rows {
        let _ = write!(out, "{label:<24} {:>8.4} {:>6}", r.overall_accuracy, r.n_items);
        for s in &splits {
            match r.per_split.get(*s) {
                Some(a) => {
                    let _ = write!(out, " {a:>12.4}");
                }
                None => {
                    let _ = write!(out, " {:>12}", "-");
                }
            }
        }
        let _ = write!(
            out,
            " {:>10} {:>9}",
            r.ledger_snapshot.total_calls(),
            r.description_tokens
        );
        out.push('\n');
    }
    out
}
