//! Canonical JSON persistence.
//!
//! Keys are written in sorted order and floats in their shortest
//! round-trip form, so saving a loaded repository reproduces the file
//! byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{BuildConfig, Provenance, RepoEntry, RepoError, Repository};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct RepositoryFile {
    schema_version: u64,
    video_id: String,
    duration_s: f64,
    config: BuildConfig,
    provenance: Provenance,
    scales: Vec<Vec<RepoEntry>>,
}

fn canonicalize(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            let mut out = Map::new();
            for (k, v) in entries {
                out.insert(k, canonicalize(v));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

impl Repository {
    /// Serializes to the canonical document text.
    pub fn to_canonical_json(&self) -> String {
        let file = RepositoryFile {
            schema_version: SCHEMA_VERSION,
            video_id: self.video_id.clone(),
            duration_s: self.duration_s,
            config: self.config.clone(),
            provenance: self.provenance.clone(),
            scales: self.scales.clone(),
        };
        let value = canonicalize(serde_json::to_value(&file).expect("repository serializes"));
        let mut text = serde_json::to_string_pretty(&value).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, RepoError> {
        let malformed = |reason: String| RepoError::MalformedFile {
            path: origin.to_string(),
            reason,
        };
        let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
        let version = value
            .get("schema_version")
            .ok_or_else(|| malformed("missing schema_version".into()))?
            .as_u64()
            .ok_or_else(|| malformed("schema_version is not an unsigned integer".into()))?;
        if version != SCHEMA_VERSION {
            return Err(RepoError::VersionMismatch {
                path: origin.to_string(),
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let file: RepositoryFile =
            serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        let mut scales = file.scales;
        for (k, scale) in scales.iter_mut().enumerate() {
            for entry in scale.iter_mut() {
                entry.scale = k;
                if entry.descriptions.is_empty() {
                    return Err(malformed(format!(
                        "scale {k} chunk {} has no descriptions",
                        entry.chunk_index
                    )));
                }
                if entry.descriptions.iter().any(|d| d.occurrences == 0) {
                    return Err(malformed(format!(
                        "scale {k} chunk {} has a zero occurrence count",
                        entry.chunk_index
                    )));
                }
            }
        }
        Ok(Self {
            video_id: file.video_id,
            duration_s: file.duration_s,
            scales,
            config: file.config,
            provenance: file.provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RepoError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_canonical_json()).map_err(|source| RepoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RepoError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RepoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repository::build;
    use crate::repository::tests::{mock_providers, synthetic_captions};

    fn built() -> Repository {
        let (p, _) = mock_providers();
        build(&synthetic_captions(20), &BuildConfig::default(), &p).unwrap()
    }

    #[test]
    fn round_trip_is_lossless_and_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let repo = built();
        repo.save(&path).unwrap();
        let loaded = Repository::load(&path).unwrap();
        assert_eq!(loaded, repo);
        assert_eq!(loaded.to_canonical_json(), std::fs::read_to_string(&path).unwrap());
    }

    #[test]
    fn keys_sorted() {
        let text = built().to_canonical_json();
        let config_at = text.find("\"config\"").unwrap();
        let duration_at = text.find("\"duration_s\"").unwrap();
        let video_at = text.find("\"video_id\"").unwrap();
        assert!(config_at < duration_at && duration_at < video_at);
    }

    #[test]
    fn truncated_file_is_malformed() {
        let text = built().to_canonical_json();
        let cut = &text[..text.len() / 2];
        assert!(matches!(
            Repository::from_json(cut, "cut"),
            Err(RepoError::MalformedFile { .. })
        ));
    }

    #[test]
    fn future_schema_rejected() {
        let text = built()
            .to_canonical_json()
            .replace("\"schema_version\": 1", "\"schema_version\": 99");
        assert!(matches!(
            Repository::from_json(&text, "v99"),
            Err(RepoError::VersionMismatch { found: 99, .. })
        ));
    }
}
