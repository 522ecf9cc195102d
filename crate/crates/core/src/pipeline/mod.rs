//! The iterative labeling cycle: clean, embed, cluster, propagate, score,
//! then queue posts for manual review. Each round writes into a staging
//! directory that is renamed into place only once every artifact is on disk.

mod config;
mod cycle;
mod report;
mod state;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{AgreementError, Suggestion};
use crate::clean::CleanError;
use crate::cluster::ClusterError;
use crate::kv::KvError;
use crate::projection::ProjectionError;
use crate::propagate::{Decision, PropagateError};
use crate::store::StoreError;
use crate::vectorize::{ModelKind, VectorizeError};

pub use config::{CycleConfig, ProjectionChoice};
pub use cycle::{doc_vectors, run_cycle_round, DocVector, RunOptions, PROPAGATION_RATER, RUBRIC_RATER};
pub use report::{build_report, render_report, CycleReport, ReportRow};
pub use state::{queue_view, StateDir};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] KvError),
    #[error("invalid cycle config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Clean(#[from] CleanError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error("state directory {0} has no corpus; run `ingest` first")]
    NoCorpus(String),
    #[error("no completed rounds in {0}")]
    NoRounds(String),
    #[error("a cycle round is already running")]
    RoundActive,
    #[error("round {round}: {reason}")]
    Corrupt { round: u32, reason: String },
    #[error("only {usable} of {total} posts have a usable document vector; need at least {needed}")]
    TooFewDocuments { usable: usize, total: usize, needed: usize },
}

impl PipelineError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// False for I/O failures and races; true when the inputs are at fault.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            PipelineError::Io { .. } | PipelineError::Store(StoreError::Io { .. }) | PipelineError::RoundActive
        )
    }
}

/// Progress of one round. Stages only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Cleaned,
    Trained,
    Clustered,
    Propagated,
    AwaitingLabels,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Cleaned => "cleaned",
            Stage::Trained => "trained",
            Stage::Clustered => "clustered",
            Stage::Propagated => "propagated",
            Stage::AwaitingLabels => "awaiting_labels",
        }
    }

    /// A new round may start after a round that reached this stage.
    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::Propagated | Stage::AwaitingLabels)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cleaned" => Ok(Stage::Cleaned),
            "trained" => Ok(Stage::Trained),
            "clustered" => Ok(Stage::Clustered),
            "propagated" => Ok(Stage::Propagated),
            "awaiting_labels" => Ok(Stage::AwaitingLabels),
            _ => Err(format!("unknown stage `{s}`")),
        }
    }
}

/// One post offered for manual labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub post_id: String,
    pub cluster: usize,
    /// Position of the cluster in the size ranking, 0 = largest.
    pub cluster_rank: usize,
    pub cluster_size: usize,
    pub cluster_labeled: usize,
    pub decision: Decision,
    pub suggestion: Option<Suggestion>,
}

/// Model/k combination evaluated in a round. The first one configured is the
/// primary pair: its propagated labels are kept and its clusters feed the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairKey {
    pub model: ModelKind,
    pub k: usize,
}

impl PairKey {
    pub fn dir_name(&self) -> String {
        format!("{}-k{}", self.model, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    pub round: u32,
    pub run_id: String,
    pub stage: Stage,
    /// Relative artifact path → SHA-256, for the stages finished so far.
    pub artifacts: BTreeMap<String, String>,
    pub primary: PairKey,
    pub pairs: Vec<PairKey>,
    pub queue: Vec<QueueItem>,
    /// Posts left out of clustering because cleaning emptied them.
    pub unembedded: Vec<String>,
    /// Posts with no effective label after this round.
    pub residual_unlabeled: usize,
}

impl CycleState {
    pub(crate) fn advance(&mut self, stage: Stage) {
        assert!(stage > self.stage, "stage moved backwards: {} -> {}", self.stage, stage);
        self.stage = stage;
    }
}
