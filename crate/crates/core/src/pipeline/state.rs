use std::fs;
use std::path::{Path, PathBuf};

use super::{CycleConfig, CycleState, PairKey, PipelineError, QueueItem};
use crate::agreement::{load_lexicon, parse_strata, HashtagLexicon, Strata};
use crate::cluster::Assignment;
use crate::projection::{parse_projection_csv, ProjectionRow};
use crate::propagate::{CvReport, PropagationReport};
use crate::store::{digest_bytes, ingest_corpus, read_jsonl, Basis, CohortMapping, Corpus, LabelLog, LabelRecord, RunManifest};

pub(crate) const CORPUS: &str = "corpus.jsonl";
pub(crate) const LABELS: &str = "labels.jsonl";
pub(crate) const CONFIG: &str = "cycle.conf";
pub(crate) const LEXICON: &str = "lexicon.csv";
pub(crate) const STRATA: &str = "strata.json";
pub(crate) const ROUNDS: &str = "rounds";

pub(crate) const STATE: &str = "state.json";
pub(crate) const MANIFEST: &str = "manifest.json";
pub(crate) const CLEANED: &str = "cleaned.jsonl";
pub(crate) const MANUAL: &str = "manual.jsonl";
pub(crate) const PROPAGATED: &str = "propagated.jsonl";
pub(crate) const SUGGESTED: &str = "suggested.jsonl";
pub(crate) const QUEUE: &str = "queue.json";
pub(crate) const PROJECTION: &str = "projection.csv";

/// On-disk layout of a labeling project:
///
/// ```text
/// corpus.jsonl  labels.jsonl  cycle.conf  lexicon.csv  strata.json
/// rounds/round-0000/{state.json, manifest.json, cleaned.jsonl, ...}
/// rounds/round-0001.partial/   (a round in progress, or one that crashed)
/// ```
///
/// Only directories without the `.partial` suffix count as rounds.
#[derive(Debug, Clone)]
pub struct StateDir {
    root: PathBuf,
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        PipelineError::Store(crate::store::StoreError::Malformed {
            path: path.display().to_string(),
            line: e.line(),
            reason: e.to_string(),
        })
    })
}

impl StateDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn round_dir(&self, round: u32) -> PathBuf {
        self.root.join(ROUNDS).join(format!("round-{round:04}"))
    }

    pub(crate) fn partial_dir(&self, round: u32) -> PathBuf {
        self.root.join(ROUNDS).join(format!("round-{round:04}.partial"))
    }

    pub fn create(&self) -> Result<(), PipelineError> {
        let dir = self.root.join(ROUNDS);
        fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))
    }

    pub fn load_corpus(&self) -> Result<Corpus, PipelineError> {
        let p = self.path(CORPUS);
        if !p.exists() {
            return Err(PipelineError::NoCorpus(self.root.display().to_string()));
        }
        Ok(ingest_corpus(&p, &CohortMapping::default())?)
    }

    pub fn save_corpus(&self, corpus: &Corpus) -> Result<(), PipelineError> {
        self.create()?;
        Ok(corpus.save(&self.path(CORPUS))?)
    }

    /// The file-backed manual/suggested label log.
    pub fn open_labels(&self) -> Result<LabelLog, PipelineError> {
        Ok(LabelLog::open(&self.path(LABELS))?)
    }

    pub(crate) fn labels_digest(&self) -> Result<String, PipelineError> {
        let p = self.path(LABELS);
        if !p.exists() {
            return Ok(digest_bytes(b""));
        }
        let bytes = fs::read(&p).map_err(|e| PipelineError::io(&p, e))?;
        Ok(digest_bytes(&bytes))
    }

    /// `cycle.conf` when present, defaults otherwise.
    pub fn load_config(&self) -> Result<CycleConfig, PipelineError> {
        let p = self.path(CONFIG);
        if !p.exists() {
            return Ok(CycleConfig::default());
        }
        let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        CycleConfig::parse(&text)
    }

    /// `lexicon.csv` when present, otherwise an empty lexicon (no suggestions).
    pub fn load_lexicon(&self) -> Result<HashtagLexicon, PipelineError> {
        let p = self.path(LEXICON);
        if !p.exists() {
            return Ok(HashtagLexicon::default());
        }
        Ok(load_lexicon(&p)?)
    }

    /// `strata.json` when present, otherwise one stratum per cohort.
    pub fn load_strata(&self, corpus: &Corpus) -> Result<Strata, PipelineError> {
        let p = self.path(STRATA);
        if p.exists() {
            let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
            return Ok(parse_strata(&text)?);
        }
        let mut s = Strata::new();
        for post in corpus.posts() {
            s.entry(post.cohort.as_str().to_string()).or_default().insert(post.post_id.clone());
        }
        Ok(s)
    }

    /// Committed rounds in ascending order.
    pub fn rounds(&self) -> Result<Vec<u32>, PipelineError> {
        let dir = self.root.join(ROUNDS);
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| PipelineError::io(&dir, e))? {
            let entry = entry.map_err(|e| PipelineError::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(n) = name.strip_prefix("round-").and_then(|n| n.parse::<u32>().ok()) {
                if entry.path().join(STATE).exists() {
                    out.push(n);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn latest_round(&self) -> Result<Option<u32>, PipelineError> {
        Ok(self.rounds()?.last().copied())
    }

    /// Round number the next cycle run (and newly submitted manual labels) belong to.
    pub fn next_round(&self) -> Result<u32, PipelineError> {
        Ok(self.latest_round()?.map_or(0, |r| r + 1))
    }

    pub fn load_state(&self, round: u32) -> Result<CycleState, PipelineError> {
        read_json(&self.round_dir(round).join(STATE))
    }

    pub fn latest_state(&self) -> Result<Option<CycleState>, PipelineError> {
        self.latest_round()?.map(|r| self.load_state(r)).transpose()
    }

    pub fn load_manifest(&self, round: u32) -> Result<RunManifest, PipelineError> {
        Ok(RunManifest::load(&self.round_dir(round).join(MANIFEST))?)
    }

    /// Re-hashes a committed round; errors if any artifact is missing or changed.
    pub fn verify_round(&self, round: u32) -> Result<RunManifest, PipelineError> {
        let m = self.load_manifest(round)?;
        let bad = m.verify(&self.round_dir(round))?;
        if !bad.is_empty() {
            return Err(PipelineError::Corrupt {
                round,
                reason: format!("artifacts changed or missing: {}", bad.join(", ")),
            });
        }
        Ok(m)
    }

    pub fn load_assignment(&self, round: u32, pair: PairKey) -> Result<Assignment, PipelineError> {
        let p = self.round_dir(round).join(pair_path(pair, "assignment.jsonl"));
        let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        Ok(Assignment::from_jsonl(&text)?)
    }

    pub fn load_propagation(&self, round: u32, pair: PairKey) -> Result<PropagationReport, PipelineError> {
        read_json(&self.round_dir(round).join(pair_path(pair, "propagation.json")))
    }

    pub fn load_cv(&self, round: u32, pair: PairKey) -> Result<Option<CvReport>, PipelineError> {
        read_json(&self.round_dir(round).join(pair_path(pair, "cv.json")))
    }

    pub fn load_round_labels(&self, round: u32, file: &str) -> Result<Vec<LabelRecord>, PipelineError> {
        Ok(read_jsonl(&self.round_dir(round).join(file))?)
    }

    pub fn load_projection(&self, round: u32) -> Result<Option<Vec<ProjectionRow>>, PipelineError> {
        let p = self.round_dir(round).join(PROJECTION);
        if !p.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&p).map_err(|e| PipelineError::io(&p, e))?;
        Ok(Some(parse_projection_csv(&text)?))
    }

    /// Manual and suggested labels from the log plus the latest round's
    /// propagated labels, which live in that round's directory.
    pub fn label_view(&self) -> Result<LabelLog, PipelineError> {
        let mut log = self.open_labels()?;
        if let Some(r) = self.latest_round()? {
            log.extend_derived(self.load_round_labels(r, PROPAGATED)?);
            log.extend_derived(self.load_round_labels(r, SUGGESTED)?);
        }
        Ok(log)
    }

    /// Removes staging directories left by interrupted rounds.
    pub(crate) fn clear_partials(&self) -> Result<(), PipelineError> {
        let dir = self.root.join(ROUNDS);
        if !dir.exists() {
            return Ok(());
        }
        for entry in fs::read_dir(&dir).map_err(|e| PipelineError::io(&dir, e))? {
            let entry = entry.map_err(|e| PipelineError::io(&dir, e))?;
            if entry.file_name().to_string_lossy().ends_with(".partial") {
                log::warn!("removing interrupted round {}", entry.path().display());
                fs::remove_dir_all(entry.path()).map_err(|e| PipelineError::io(entry.path(), e))?;
            }
        }
        Ok(())
    }
}

pub(crate) fn pair_path(pair: PairKey, file: &str) -> String {
    format!("pairs/{}/{file}", pair.dir_name())
}

/// The stored queue minus posts that have since received a manual label on
/// `basis`, truncated to `limit`.
pub fn queue_view(state: &CycleState, labels: &LabelLog, basis: Basis, limit: usize) -> Vec<QueueItem> {
    state
        .queue
        .iter()
        .filter(|q| !labels.has_manual(&q.post_id, basis))
        .take(limit)
        .cloned()
        .collect()
}
