//! Caption loading, rate transforms and temporal chunking.
//!
//! A caption file holds one video:
//!
//! ```json
//! {"video_id": "v1", "duration_s": 180.0,
//!  "captions": [{"id": "c0", "start_s": 0.0, "end_s": 4.0, "text": "C picks a bag"}]}
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed caption file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
    #[error("caption set for video {0} has no captions")]
    EmptyInput(String),
    #[error("unsupported rate factor {0}; expected 0.5, 1.0 or 2.0")]
    UnsupportedFactor(f64),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One timestamped caption produced by an external captioner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caption {
    pub id: String,
    #[serde(default, skip_serializing)]
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

/// All captions of one video, sorted by `(start_s, id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionSet {
    pub video_id: String,
    pub duration_s: f64,
    /// Free-form tag naming the captioner that produced the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub captioner: Option<String>,
    pub captions: Vec<Caption>,
}

impl CaptionSet {
    /// Validates and sorts a caption set. `origin` names the source in error messages.
    pub fn new(mut set: CaptionSet, origin: &str) -> Result<Self, IngestError> {
        let malformed = |reason: String| IngestError::MalformedFile {
            path: origin.to_string(),
            reason,
        };
        if set.captions.is_empty() {
            return Err(IngestError::EmptyInput(set.video_id));
        }
        if !set.duration_s.is_finite() || set.duration_s < 0.0 {
            return Err(malformed(format!("invalid duration_s {}", set.duration_s)));
        }
        let mut seen = HashSet::new();
        for cap in &mut set.captions {
            if !cap.start_s.is_finite() || !cap.end_s.is_finite() || cap.start_s < 0.0 {
                return Err(malformed(format!("caption {} has invalid timestamps", cap.id)));
            }
            if cap.end_s < cap.start_s {
                return Err(malformed(format!("caption {} ends before it starts", cap.id)));
            }
            if cap.text.trim().is_empty() {
                return Err(malformed(format!("caption {} has empty text", cap.id)));
            }
            if !seen.insert(cap.id.clone()) {
                return Err(malformed(format!("duplicate caption id {}", cap.id)));
            }
            cap.video_id.clone_from(&set.video_id);
        }
        let max_end = set.captions.iter().map(|c| c.end_s).fold(0.0, f64::max);
        if set.duration_s < max_end {
            return Err(malformed(format!(
                "duration_s {} is shorter than the last caption end {}",
                set.duration_s, max_end
            )));
        }
        set.captions.sort_by(|a, b| {
            a.start_s
                .total_cmp(&b.start_s)
                .then_with(|| a.id.cmp(&b.id))
        });
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }
}

/// Reads and validates a caption file.
pub fn load_captions(path: impl AsRef<Path>) -> Result<CaptionSet, IngestError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: origin.clone(),
        source,
    })?;
    parse_captions(&raw, &origin)
}

/// Parses caption-file text; `origin` is used in error messages only.
pub fn parse_captions(raw: &str, origin: &str) -> Result<CaptionSet, IngestError> {
    let set: CaptionSet = serde_json::from_str(raw).map_err(|e| IngestError::MalformedFile {
        path: origin.to_string(),
        reason: e.to_string(),
    })?;
    CaptionSet::new(set, origin)
}

/// A contiguous, non-overlapping run of descriptions from one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk<T> {
    pub index: usize,
    pub items: Vec<T>,
}

/// Splits `items` into `n` contiguous parts whose sizes differ by at most one.
///
/// The remainder goes to the earliest parts. `n` is clamped to `items.len()`,
/// so no part is ever empty; an empty input yields no parts.
pub fn split_evenly<T: Clone>(items: &[T], n: usize) -> Vec<Vec<T>> {
    assert!(n >= 1, "chunk count must be positive");
    let n = n.min(items.len());
    if n == 0 {
        return Vec::new();
    }
    let base = items.len() / n;
    let extra = items.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let size = base + usize::from(i < extra);
        out.push(items[start..start + size].to_vec());
        start += size;
    }
    out
}

/// Splits a caption set into `n` chunks by caption count.
pub fn chunk_captions(set: &CaptionSet, n: usize) -> Vec<Chunk<Caption>> {
    split_evenly(&set.captions, n)
        .into_iter()
        .enumerate()
        .map(|(index, items)| Chunk { index, items })
        .collect()
}

/// Caption-rate change used by the input-length study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RateFactor {
    /// Keep every other caption, starting from the first.
    Half,
    Identity,
    /// Duplicate every caption in place.
    Double,
}

impl RateFactor {
    pub const ALL: [RateFactor; 3] = [RateFactor::Half, RateFactor::Identity, RateFactor::Double];

    pub fn as_f64(self) -> f64 {
        match self {
            RateFactor::Half => 0.5,
            RateFactor::Identity => 1.0,
            RateFactor::Double => 2.0,
        }
    }
}

impl TryFrom<f64> for RateFactor {
    type Error = IngestError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        if value == 0.5 {
            Ok(RateFactor::Half)
        } else if value == 1.0 {
            Ok(RateFactor::Identity)
        } else if value == 2.0 {
            Ok(RateFactor::Double)
        } else {
            Err(IngestError::UnsupportedFactor(value))
        }
    }
}

impl fmt::Display for RateFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x", self.as_f64())
    }
}

/// Suffix appended to the id of the second copy made by [`RateFactor::Double`].
pub const DUPLICATE_ID_SUFFIX: &str = "#dup";

/// Subsamples or replicates captions to change the input length.
pub fn transform_rate(set: &CaptionSet, factor: RateFactor) -> CaptionSet {
    let captions = match factor {
        RateFactor::Identity => set.captions.clone(),
        RateFactor::Half => set.captions.iter().step_by(2).cloned().collect(),
        RateFactor::Double => set
            .captions
            .iter()
            .flat_map(|c| {
                let mut copy = c.clone();
                copy.id.push_str(DUPLICATE_ID_SUFFIX);
                [c.clone(), copy]
            })
            .collect(),
    };
    CaptionSet {
        captions,
        ..set.clone()
    }
}
