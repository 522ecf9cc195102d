//! Word and document embeddings.
//!
//! Three trainers share one negative-sampling kernel:
//!
//! - `cbow`: the mean of the context predicts the center word
//! - `skipgram`: the center word predicts each context word
//! - `pvdm`: a per-document vector joins the context mean (paragraph vectors)
//!
//! CBOW and skip-gram represent a token as the mean of its own input row (when
//! in the vocabulary) and the rows of its hashed character n-grams, so every
//! string, including unseen misspellings, has a vector. The bag-of-words
//! baseline lives in [`bow`].

pub mod bow;
pub mod kernel;
mod model;
mod subword;
mod train;
mod vocab;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bow::{bow_vectorize, BowVector};
pub use model::{DocEmbedding, EmbeddingModel, Neighbor};
pub use subword::{fnv1a, SubwordIndex, DEFAULT_BUCKETS};
pub use train::train;
pub use vocab::{build_vocab, Vocabulary};

#[derive(Debug, Error)]
pub enum VectorizeError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("no token reaches min_count = {0}")]
    EmptyVocabulary(u64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch} (learning rate {lr}): loss is {loss}")]
    NonFinite { epoch: usize, lr: f64, loss: f64 },
    #[error("operation requires a {expected} model, got {got}")]
    WrongKind { expected: &'static str, got: ModelKind },
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("none of the document's tokens are in the vocabulary")]
    NoKnownTokens,
    #[error("token `{0}` has no representation in this model")]
    Unrepresentable(String),
    #[error("requested {requested} neighbors but only {available} candidates exist")]
    TooManyNeighbors { requested: usize, available: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cbow,
    Skipgram,
    Pvdm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cbow => "cbow",
            ModelKind::Skipgram => "skipgram",
            ModelKind::Pvdm => "pvdm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cbow" => Ok(ModelKind::Cbow),
            "skipgram" | "skip-gram" => Ok(ModelKind::Skipgram),
            "pvdm" | "doc2vec" => Ok(ModelKind::Pvdm),
            _ => Err(format!("unknown model kind `{s}` (expected cbow, skipgram or pvdm)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub dim: usize,
    /// Maximum context half-width; each position draws its width from `1..=window`.
    pub window: usize,
    pub min_count: u64,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub negative: usize,
    pub seed: u64,
    /// Single worker and fixed streams: same seed gives bit-identical matrices.
    pub deterministic: bool,
    /// Worker count outside deterministic mode; 0 means all cores.
    pub threads: usize,
    /// Hashed n-grams for cbow/skipgram; `buckets = 0` disables them.
    pub subwords: SubwordIndex,
}

impl TrainingConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            dim: 100,
            window: 5,
            min_count: 5,
            epochs: if kind == ModelKind::Pvdm { 20 } else { 5 },
            lr_start: 0.05,
            lr_end: 0.0001,
            negative: 5,
            seed: 1,
            deterministic: true,
            threads: 0,
            subwords: SubwordIndex::default(),
        }
    }

    pub fn validate(&self) -> Result<(), VectorizeError> {
        let bad = |m: &str| Err(VectorizeError::Config(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be > 0");
        }
        if self.window == 0 {
            return bad("window must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be > 0");
        }
        if !(self.lr_start > 0.0 && self.lr_start.is_finite()) || self.lr_end < 0.0 || self.lr_end > self.lr_start {
            return bad("learning rate must satisfy 0 <= lr_end <= lr_start, lr_start > 0");
        }
        if self.subwords.buckets > 0 && (self.subwords.n_min == 0 || self.subwords.n_min > self.subwords.n_max) {
            return bad("subword range must satisfy 1 <= n_min <= n_max");
        }
        Ok(())
    }

    pub(crate) fn workers(&self) -> usize {
        if self.deterministic {
            1
        } else if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
