//! Social-media text normalization.
//!
//! Eleven steps, applied in a configurable order (default shown):
//!
//! 1. remove `@username` tokens
//! 2. name emoji (`🥀` -> `wilted_flower`)
//! 3. unify apostrophe variants
//! 4. strip accents
//! 5. strip punctuation, keeping `- + $` and digits
//! 6. lowercase
//! 7. collapse runs of 3+ identical letters to 2
//! 8. drop the caption's author-name prefix
//! 9. expand contractions, then lowercase again
//! 10. flatten newlines so each post is one unit
//! 11. replace phone numbers with a fictitious one
//!
//! Apostrophes and underscores always survive step 5: contractions are
//! expanded later and emoji names are snake_case.

mod contractions;
mod emoji;
mod steps;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{KeyValues, KvError};
use crate::store::Post;

pub use steps::{
    collapse_repeats, expand_contractions, flatten_newlines, lowercase, normalize_apostrophes,
    redact_phone_numbers, remove_usernames, strip_accents, strip_author_prefix, strip_punctuation,
};

/// Emoji naming as a standalone operation (no overrides).
pub fn name_emojis(text: &str) -> (String, usize) {
    emoji::name_emojis(text, &BTreeMap::new())
}

pub const DEFAULT_FAKE_PHONE: &str = "555-555-0123";
pub const DEFAULT_AUTHOR_MARKER: &str = r"^\S+: ";
pub const EMOJI_UNKNOWN: &str = emoji::UNKNOWN;

/// Characters that step 5 never removes regardless of configuration.
const STRUCTURAL_KEPT: [char; 2] = ['\'', '_'];

#[derive(Debug, Error)]
pub enum CleanError {
    #[error("unknown cleaning step `{0}`")]
    UnknownStep(String),
    #[error("cleaning step `{0}` listed twice")]
    DuplicateStep(String),
    #[error("fake phone `{0}` is not in the fictitious NXX-555-01XX range")]
    FakePhone(String),
    #[error("author marker `{marker}` is not a valid regex: {reason}")]
    Marker { marker: String, reason: String },
    #[error("kept punctuation may not contain letters, digits or whitespace: `{0}`")]
    KeptPunctuation(String),
    #[error(transparent)]
    Config(#[from] KvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    RemoveUsernames,
    NameEmojis,
    NormalizeApostrophes,
    StripAccents,
    StripPunctuation,
    Lowercase,
    CollapseRepeats,
    StripAuthorPrefix,
    ExpandContractions,
    FlattenNewlines,
    RedactPhoneNumbers,
}

impl Step {
    pub const DEFAULT_ORDER: [Step; 11] = [
        Step::RemoveUsernames,
        Step::NameEmojis,
        Step::NormalizeApostrophes,
        Step::StripAccents,
        Step::StripPunctuation,
        Step::Lowercase,
        Step::CollapseRepeats,
        Step::StripAuthorPrefix,
        Step::ExpandContractions,
        Step::FlattenNewlines,
        Step::RedactPhoneNumbers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Step::RemoveUsernames => "remove_usernames",
            Step::NameEmojis => "name_emojis",
            Step::NormalizeApostrophes => "normalize_apostrophes",
            Step::StripAccents => "strip_accents",
            Step::StripPunctuation => "strip_punctuation",
            Step::Lowercase => "lowercase",
            Step::CollapseRepeats => "collapse_repeats",
            Step::StripAuthorPrefix => "strip_author_prefix",
            Step::ExpandContractions => "expand_contractions",
            Step::FlattenNewlines => "flatten_newlines",
            Step::RedactPhoneNumbers => "redact_phone_numbers",
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Step {
    type Err = CleanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Step::DEFAULT_ORDER
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| CleanError::UnknownStep(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningConfig {
    pub steps: Vec<Step>,
    pub fake_phone: String,
    /// Extra emoji sequence -> name entries, consulted before the bundled table.
    pub emoji_names: BTreeMap<String, String>,
    pub contractions: BTreeMap<String, String>,
    pub kept_punctuation: Vec<char>,
    pub author_marker: String,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            steps: Step::DEFAULT_ORDER.to_vec(),
            fake_phone: DEFAULT_FAKE_PHONE.to_string(),
            emoji_names: BTreeMap::new(),
            contractions: contractions::DEFAULT_CONTRACTIONS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            kept_punctuation: vec!['-', '+', '$'],
            author_marker: DEFAULT_AUTHOR_MARKER.to_string(),
        }
    }
}

const CONFIG_KEYS: &[&str] = &["steps", "fake_phone", "kept_punctuation", "author_marker", "contractions.builtin"];

impl CleaningConfig {
    /// Reads the flat key-value format:
    ///
    /// ```text
    /// steps = remove_usernames, name_emojis, ...
    /// fake_phone = 555-555-0123
    /// kept_punctuation = -+$
    /// author_marker = "^\S+: "
    /// contractions.builtin = true
    /// contraction.gotcha = got you
    /// emoji.🥀 = wilted_flower
    /// ```
    pub fn from_kv(kv: &KeyValues) -> Result<Self, CleanError> {
        kv.reject_unknown(CONFIG_KEYS, &["contraction.", "emoji."])?;
        let mut cfg = CleaningConfig::default();
        if let Some(steps) = kv.get("steps") {
            cfg.steps = steps
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(Step::from_str)
                .collect::<Result<_, _>>()?;
        }
        if let Some(p) = kv.get("fake_phone") {
            cfg.fake_phone = p.to_string();
        }
        if let Some(k) = kv.get("kept_punctuation") {
            cfg.kept_punctuation = k.chars().collect();
        }
        if let Some(m) = kv.get("author_marker") {
            cfg.author_marker = m.to_string();
        }
        if let Some(b) = kv.get("contractions.builtin") {
            if !crate::kv::parse_bool("contractions.builtin", b)? {
                cfg.contractions.clear();
            }
        }
        for (k, v) in kv.with_prefix("contraction.") {
            cfg.contractions.insert(k.to_lowercase(), v.to_lowercase());
        }
        for (k, v) in kv.with_prefix("emoji.") {
            cfg.emoji_names.insert(k.to_string(), v.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CleanError> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    /// Snapshot for run manifests.
    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let steps: Vec<&str> = self.steps.iter().map(|s| s.as_str()).collect();
        kv.insert("steps", &steps.join(", "));
        kv.insert("fake_phone", &self.fake_phone);
        kv.insert("kept_punctuation", &self.kept_punctuation.iter().collect::<String>());
        kv.insert("author_marker", &self.author_marker);
        let default = CleaningConfig::default();
        if self.contractions != default.contractions {
            kv.insert("contractions.builtin", "false");
            for (k, v) in &self.contractions {
                kv.insert(&format!("contraction.{k}"), v);
            }
        }
        for (k, v) in &self.emoji_names {
            kv.insert(&format!("emoji.{k}"), v);
        }
        kv
    }

    pub fn validate(&self) -> Result<(), CleanError> {
        let mut seen = std::collections::HashSet::new();
        for s in &self.steps {
            if !seen.insert(*s) {
                return Err(CleanError::DuplicateStep(s.to_string()));
            }
        }
        static FAKE: std::sync::LazyLock<Regex> =
            std::sync::LazyLock::new(|| Regex::new(r"^(\+1[ -]?)?\(?\d{3}\)?[ -.]?555[ -.]?01\d\d$").unwrap());
        if !FAKE.is_match(&self.fake_phone) {
            return Err(CleanError::FakePhone(self.fake_phone.clone()));
        }
        if self.kept_punctuation.iter().any(|c| c.is_alphanumeric() || c.is_whitespace()) {
            return Err(CleanError::KeptPunctuation(self.kept_punctuation.iter().collect()));
        }
        Regex::new(&self.author_marker).map_err(|e| CleanError::Marker {
            marker: self.author_marker.clone(),
            reason: e.to_string(),
        })?;
        Ok(())
    }
}

/// Per-step change counts for one document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanStats {
    pub steps: BTreeMap<String, usize>,
    pub empty: bool,
}

impl CleanStats {
    pub fn count(&self, step: Step) -> usize {
        self.steps.get(step.as_str()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanedDocument {
    pub post_id: String,
    pub tokens: Vec<String>,
    pub stats: CleanStats,
}

/// A validated, compiled cleaning pipeline.
#[derive(Debug, Clone)]
pub struct Cleaner {
    config: CleaningConfig,
    marker: Regex,
    contractions: HashMap<String, String>,
    kept: Vec<char>,
}

impl Cleaner {
    pub fn new(config: CleaningConfig) -> Result<Self, CleanError> {
        config.validate()?;
        let marker = Regex::new(&config.author_marker).expect("validated");
        let contractions = config
            .contractions
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut kept = config.kept_punctuation.clone();
        kept.extend(STRUCTURAL_KEPT);
        Ok(Self {
            config,
            marker,
            contractions,
            kept,
        })
    }

    pub fn config(&self) -> &CleaningConfig {
        &self.config
    }

    fn apply(&self, step: Step, text: &str) -> (String, usize) {
        match step {
            Step::RemoveUsernames => remove_usernames(text),
            Step::NameEmojis => emoji::name_emojis(text, &self.config.emoji_names),
            Step::NormalizeApostrophes => normalize_apostrophes(text),
            Step::StripAccents => strip_accents(text),
            Step::StripPunctuation => strip_punctuation(text, &self.kept),
            Step::Lowercase => lowercase(text),
            Step::CollapseRepeats => collapse_repeats(text),
            Step::StripAuthorPrefix => (text.to_string(), 0),
            Step::ExpandContractions => expand_contractions(text, &self.contractions),
            Step::FlattenNewlines => flatten_newlines(text),
            Step::RedactPhoneNumbers => redact_phone_numbers(text, &self.config.fake_phone),
        }
    }

    /// Cleans a raw text and returns the final string plus statistics.
    ///
    /// The author prefix is located on the raw text, where the marker is
    /// recognizable, and carried as a separate segment through the other steps;
    /// the author step then drops that segment. This lets the step run at any
    /// position in the order, including after punctuation removal.
    pub fn clean_text(&self, raw: &str) -> (String, CleanStats) {
        let mut stats = CleanStats::default();
        let (mut author, mut body) = match self.marker.find(raw) {
            Some(m) if m.start() == 0 && !m.is_empty() && self.config.steps.contains(&Step::StripAuthorPrefix) => {
                (Some(raw[..m.end()].to_string()), raw[m.end()..].to_string())
            }
            _ => (None, raw.to_string()),
        };
        for &step in &self.config.steps {
            let mut n = 0;
            if step == Step::StripAuthorPrefix {
                if author.take().is_some() {
                    n = 1;
                }
            } else {
                if let Some(a) = author.as_mut() {
                    let (t, c) = self.apply(step, a);
                    *a = t;
                    n += c;
                }
                let (t, c) = self.apply(step, &body);
                body = t;
                n += c;
            }
            stats.steps.insert(step.as_str().to_string(), n);
        }
        let text = match author {
            Some(a) if !a.is_empty() => format!("{a} {body}"),
            _ => body,
        };
        (text, stats)
    }

    pub fn clean(&self, post: &Post) -> CleanedDocument {
        self.clean_raw(&post.post_id, &post.raw_text)
    }

    pub fn clean_raw(&self, post_id: &str, raw: &str) -> CleanedDocument {
        let (text, mut stats) = self.clean_text(raw);
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        stats.empty = tokens.is_empty();
        CleanedDocument {
            post_id: post_id.to_string(),
            tokens,
            stats,
        }
    }

    /// Cleans posts in parallel; output order matches input order.
    pub fn clean_all(&self, posts: &[Post]) -> Vec<CleanedDocument> {
        posts.par_iter().map(|p| self.clean(p)).collect()
    }
}

impl Default for Cleaner {
    fn default() -> Self {
        Cleaner::new(CleaningConfig::default()).expect("default config is valid")
    }
}
