//! Persistent data model: posts, labels, run manifests.
//!
//! Everything on disk is newline-delimited JSON (one record per line) plus a
//! JSON manifest per run. Label history is append-only; the effective label of
//! a post is a pure function of the log, see [`LabelLog::effective_labels`].

mod corpus;
mod fsio;
mod labels;
mod manifest;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{ingest_corpus, parse_corpus, Corpus, CohortMapping};
pub use fsio::{
    atomic_write, digest_bytes, digest_file, jsonl_bytes, read_jsonl, write_jsonl, write_jsonl_atomic,
};
pub use labels::{LabelFilter, LabelLog};
pub use manifest::{ArtifactDigest, RunManifest};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate post_id `{0}`")]
    DuplicatePost(String),
    #[error("{0}: file contains no records")]
    Empty(String),
    #[error("unknown post_id `{0}`")]
    UnknownPost(String),
    #[error("post `{0}` already has a manual label on this basis; propagated labels cannot override it")]
    PropagatedOverManual(String),
    #[error("label log line {line}: {reason}")]
    InvalidLabel { line: usize, reason: String },
}

impl StoreError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Control,
    TopicFlagged,
}

impl Cohort {
    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Control => "control",
            Cohort::TopicFlagged => "topic_flagged",
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A raw social-media text unit. `raw_text` is stored verbatim and never mutated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub raw_text: String,
    pub cohort: Cohort,
    #[serde(default)]
    pub source_hashtags: Vec<String>,
    #[serde(default)]
    pub created_at: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelValue {
    Yes,
    Unclear,
    No,
    Removed,
}

impl LabelValue {
    pub const ALL: [LabelValue; 4] = [
        LabelValue::Yes,
        LabelValue::Unclear,
        LabelValue::No,
        LabelValue::Removed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelValue::Yes => "yes",
            LabelValue::Unclear => "unclear",
            LabelValue::No => "no",
            LabelValue::Removed => "removed",
        }
    }
}

impl fmt::Display for LabelValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelValue::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown label value `{s}` (expected yes, unclear, no or removed)"))
    }
}

/// Which evidence a label judges: the post alone, or the post plus the poster's profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    PostOnly,
    PostPlusProfile,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::PostOnly => "post_only",
            Basis::PostPlusProfile => "post_plus_profile",
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "post_only" => Ok(Basis::PostOnly),
            "post_plus_profile" => Ok(Basis::PostPlusProfile),
            _ => Err(format!("unknown basis `{s}` (expected post_only or post_plus_profile)")),
        }
    }
}

/// Where a label came from. Ordering is precedence: `Manual` beats `Propagated` beats `Suggested`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Suggested,
    Propagated,
    Manual,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Suggested => "suggested",
            Source::Propagated => "propagated",
            Source::Manual => "manual",
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "manual" => Ok(Source::Manual),
            "propagated" => Ok(Source::Propagated),
            "suggested" => Ok(Source::Suggested),
            _ => Err(format!("unknown label source `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub post_id: String,
    pub rater_id: String,
    pub value: LabelValue,
    pub basis: Basis,
    pub source: Source,
    pub round: u32,
    pub created_at: String,
}

impl LabelRecord {
    pub fn new(post_id: impl Into<String>, rater_id: impl Into<String>, value: LabelValue, basis: Basis, source: Source, round: u32, created_at: impl Into<String>) -> Self {
        Self {
            post_id: post_id.into(),
            rater_id: rater_id.into(),
            value,
            basis,
            source,
            round,
            created_at: created_at.into(),
        }
    }
}

/// Current UTC time as RFC 3339 with second precision.
pub fn now_rfc3339() -> String {
    let t: chrono::DateTime<chrono::Utc> = std::time::SystemTime::now().into();
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
