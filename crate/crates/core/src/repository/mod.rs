//! The language repository: iterative multi-scale write, read and persistence.

mod read;
mod store;
mod write;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Embedder;
use crate::ingest::{chunk_captions, Caption, CaptionSet, Chunk};
use crate::llm::LlmClient;
use crate::prompts::PromptSet;

pub use read::{read_from_repo, render_description_line};
pub use store::SCHEMA_VERSION;
pub use write::{re_chunk, write_to_repo, FALLBACK_SEPARATOR};

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("invalid build configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed repository file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
    #[error("repository file {path} has schema version {found}, expected {expected}")]
    VersionMismatch {
        path: String,
        found: u64,
        expected: u64,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One stored description: text, founding timestamp spans and occurrence count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoDescription {
    pub text: String,
    /// `[start_s, end_s]` spans, sorted and non-overlapping.
    pub timestamps: Vec<[f64; 2]>,
    pub occurrences: u64,
}

impl RepoDescription {
    pub fn from_caption(c: &Caption) -> Self {
        Self {
            text: c.text.clone(),
            timestamps: vec![[c.start_s, c.end_s]],
            occurrences: 1,
        }
    }

    pub fn earliest_start(&self) -> f64 {
        self.timestamps.first().map_or(0.0, |s| s[0])
    }

    pub fn latest_end(&self) -> f64 {
        self.timestamps.iter().map(|s| s[1]).fold(f64::MIN, f64::max)
    }
}

/// Sorts spans by start and coalesces any that overlap or touch.
pub fn merge_spans(spans: impl IntoIterator<Item = [f64; 2]>) -> Vec<[f64; 2]> {
    let mut spans: Vec<[f64; 2]> = spans.into_iter().collect();
    spans.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s[0] <= last[1] => last[1] = last[1].max(s[1]),
            _ => out.push(s),
        }
    }
    out
}

/// Descriptions written for one chunk at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoEntry {
    /// Implied by position in [`Repository::scales`]; not serialized.
    #[serde(skip)]
    pub scale: usize,
    pub chunk_index: usize,
    pub descriptions: Vec<RepoDescription>,
}

impl RepoEntry {
    pub fn occurrences(&self) -> u64 {
        self.descriptions.iter().map(|d| d.occurrences).sum()
    }
}

/// Settings that shape a repository build and how it is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Chunks per scale, strictly decreasing.
    pub chunk_schedule: Vec<usize>,
    /// Fraction of source descriptions merged per chunk.
    pub grouping_ratio: f64,
    /// Fraction of a chunk used as merge destinations.
    pub dst_ratio: f64,
    /// How many of the coarsest scales are summarized when reading.
    pub read_scales: usize,
    pub include_timestamps: bool,
    pub include_occurrences: bool,
    /// Pass the question into every summarize call.
    pub question_conditioning: bool,
    /// Re-asks after an unparseable rephrase reply before falling back.
    pub rephrase_retries: u32,
    pub rephrase_max_tokens: u32,
    pub summarize_max_tokens: u32,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            chunk_schedule: vec![4, 3, 2],
            grouping_ratio: 0.5,
            dst_ratio: 0.25,
            read_scales: 3,
            include_timestamps: false,
            include_occurrences: true,
            question_conditioning: false,
            rephrase_retries: 2,
            rephrase_max_tokens: 1024,
            summarize_max_tokens: 512,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), RepoError> {
        let bad = |m: String| Err(RepoError::InvalidConfig(m));
        if self.chunk_schedule.is_empty() {
            return bad("chunk_schedule must not be empty".into());
        }
        if self.chunk_schedule.contains(&0) {
            return bad("chunk_schedule entries must be positive".into());
        }
        if let Some(w) = self.chunk_schedule.windows(2).find(|w| w[1] >= w[0]) {
            return bad(format!(
                "chunk_schedule must be strictly decreasing, found {} then {}",
                w[0], w[1]
            ));
        }
        if !(0.0..=1.0).contains(&self.grouping_ratio) {
            return bad(format!("grouping_ratio {} outside [0, 1]", self.grouping_ratio));
        }
        if !(self.dst_ratio > 0.0 && self.dst_ratio < 1.0) {
            return bad(format!("dst_ratio {} outside (0, 1)", self.dst_ratio));
        }
        if self.read_scales == 0 {
            return bad("read_scales must be positive".into());
        }
        if self.rephrase_max_tokens == 0 || self.summarize_max_tokens == 0 {
            return bad("token limits must be positive".into());
        }
        Ok(())
    }
}

/// Where a repository came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub captioner: String,
    pub template_version: String,
    pub backend_id: String,
    pub embedder_id: String,
}

/// All scales of one video, plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Repository {
    pub video_id: String,
    pub duration_s: f64,
    /// `scales[k]` holds the entries of scale `k`, ordered by chunk index.
    pub scales: Vec<Vec<RepoEntry>>,
    pub config: BuildConfig,
    pub provenance: Provenance,
}

impl Repository {
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn chunk_counts(&self) -> Vec<usize> {
        self.scales.iter().map(Vec::len).collect()
    }

    pub fn description_counts(&self) -> Vec<usize> {
        self.scales
            .iter()
            .map(|s| s.iter().map(|e| e.descriptions.len()).sum())
            .collect()
    }

    pub fn occurrence_totals(&self) -> Vec<u64> {
        self.scales
            .iter()
            .map(|s| s.iter().map(RepoEntry::occurrences).sum())
            .collect()
    }
}

/// Model-backed services a build or read needs.
#[derive(Clone)]
pub struct Providers {
    pub llm: Arc<LlmClient>,
    pub embedder: Arc<Embedder>,
    pub prompts: PromptSet,
}

impl Providers {
    pub fn new(llm: Arc<LlmClient>, embedder: Arc<Embedder>) -> Self {
        Self {
            llm,
            embedder,
            prompts: PromptSet::default(),
        }
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }
}

/// Chunk count for the next scale.
///
/// Follows the schedule but never exceeds the available descriptions or the
/// previous count, and stays strictly below the previous count when it can.
fn next_chunk_count(scheduled: usize, previous: usize, descriptions: usize) -> usize {
    let mut m = scheduled.min(descriptions).min(previous).max(1);
    if previous > 1 && m >= previous {
        m = previous - 1;
    }
    m
}

fn write_scale(
    chunks: &[Chunk<RepoDescription>],
    scale: usize,
    cfg: &BuildConfig,
    providers: &Providers,
) -> crate::error::Result<Vec<RepoEntry>> {
    let mut entries = chunks
        .par_iter()
        .map(|c| write_to_repo(c, scale, cfg, providers))
        .collect::<crate::error::Result<Vec<_>>>()?;
    entries.sort_by_key(|e| e.chunk_index);
    Ok(entries)
}

/// Builds every scale of the repository for one video.
pub fn build(
    set: &CaptionSet,
    cfg: &BuildConfig,
    providers: &Providers,
) -> crate::error::Result<Repository> {
    cfg.validate()?;
    let first: Vec<Chunk<RepoDescription>> = chunk_captions(set, cfg.chunk_schedule[0])
        .into_iter()
        .map(|c| Chunk {
            index: c.index,
            items: c.items.iter().map(RepoDescription::from_caption).collect(),
        })
        .collect();
    let mut scales = vec![write_scale(&first, 0, cfg, providers)?];
    for (k, &scheduled) in cfg.chunk_schedule.iter().enumerate().skip(1) {
        let previous = scales.last().expect("at least one scale");
        let total: usize = previous.iter().map(|e| e.descriptions.len()).sum();
        let m = next_chunk_count(scheduled, previous.len(), total);
        if m != scheduled {
            log::info!(
                "video {}: scale {k} uses {m} chunks instead of {scheduled}",
                set.video_id
            );
        }
        let chunks = re_chunk(previous, m);
        let entries = write_scale(&chunks, k, cfg, providers)?;
        scales.push(entries);
    }
    Ok(Repository {
        video_id: set.video_id.clone(),
        duration_s: set.duration_s,
        scales,
        config: cfg.clone(),
        provenance: Provenance {
            captioner: set.captioner.clone().unwrap_or_else(|| "unknown".into()),
            template_version: providers.prompts.version(),
            backend_id: providers.llm.backend_id().to_string(),
            embedder_id: providers.embedder.id(),
        },
    })
}
