use std::collections::{BTreeMap, HashMap};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::corpus::Corpus;
use super::fsio::read_jsonl;
use super::{Basis, LabelRecord, LabelValue, Source, StoreError};

/// Which records participate in an effective-label view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFilter {
    pub sources: Vec<Source>,
    pub rater: Option<String>,
}

impl LabelFilter {
    pub fn all() -> Self {
        Self {
            sources: vec![Source::Manual, Source::Propagated, Source::Suggested],
            rater: None,
        }
    }

    pub fn manual_only() -> Self {
        Self {
            sources: vec![Source::Manual],
            rater: None,
        }
    }

    pub fn sources(sources: &[Source]) -> Self {
        Self {
            sources: sources.to_vec(),
            rater: None,
        }
    }

    pub fn with_rater(mut self, rater: impl Into<String>) -> Self {
        self.rater = Some(rater.into());
        self
    }

    fn admits(&self, r: &LabelRecord) -> bool {
        self.sources.contains(&r.source) && self.rater.as_ref().is_none_or(|id| *id == r.rater_id)
    }
}

/// Append-only label history.
///
/// The optional backing file receives every accepted record before it becomes
/// visible in memory, so replaying the file reproduces the same view.
#[derive(Debug, Default)]
pub struct LabelLog {
    records: Vec<LabelRecord>,
    path: Option<PathBuf>,
}

impl LabelLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) a file-backed log. A missing file is an empty log.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let records = if path.exists() {
            read_jsonl(path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            records,
            path: Some(path.to_path_buf()),
        })
    }

    /// Builds a log from already-validated records (no persistence).
    pub fn replay(records: Vec<LabelRecord>) -> Self {
        Self {
            records,
            path: None,
        }
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Validates and appends one record.
    pub fn record(&mut self, corpus: &Corpus, label: LabelRecord) -> Result<&LabelRecord, StoreError> {
        if !corpus.contains(&label.post_id) {
            return Err(StoreError::UnknownPost(label.post_id));
        }
        if label.source == Source::Propagated && self.has_manual(&label.post_id, label.basis) {
            return Err(StoreError::PropagatedOverManual(label.post_id));
        }
        if let Some(path) = &self.path {
            let mut line = serde_json::to_vec(&label).expect("label serializes");
            line.push(b'\n');
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| StoreError::io(path, e))?;
            f.write_all(&line)
                .and_then(|_| f.sync_data())
                .map_err(|e| StoreError::io(path, e))?;
        }
        self.records.push(label);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Appends in memory only: used for derived records (propagated, suggested)
    /// whose durable copy lives in a round directory.
    pub fn extend_derived(&mut self, records: impl IntoIterator<Item = LabelRecord>) {
        self.records.extend(records);
    }

    /// True if the post carries a non-removed effective manual label on `basis`.
    pub fn has_manual(&self, post_id: &str, basis: Basis) -> bool {
        self.effective_record(post_id, basis, &LabelFilter::manual_only())
            .is_some()
    }

    fn effective_record(&self, post_id: &str, basis: Basis, filter: &LabelFilter) -> Option<&LabelRecord> {
        let mut tiers: [Option<(usize, &LabelRecord)>; 3] = [None, None, None];
        for (pos, r) in self.records.iter().enumerate() {
            if r.post_id != post_id || r.basis != basis || !filter.admits(r) {
                continue;
            }
            consider(&mut tiers, pos, r);
        }
        resolve(&tiers)
    }

    /// Effective full records per post on `basis`.
    ///
    /// Within one source tier the highest round wins, then the later log entry.
    /// A tier whose winner is `removed` counts as empty; the highest non-empty
    /// tier (manual, then propagated, then suggested) is the effective label.
    pub fn effective_records(&self, basis: Basis, filter: &LabelFilter) -> BTreeMap<String, &LabelRecord> {
        let mut per_post: HashMap<&str, [Option<(usize, &LabelRecord)>; 3]> = HashMap::new();
        for (pos, r) in self.records.iter().enumerate() {
            if r.basis != basis || !filter.admits(r) {
                continue;
            }
            let tiers = per_post.entry(r.post_id.as_str()).or_default();
            consider(tiers, pos, r);
        }
        per_post
            .into_iter()
            .filter_map(|(id, tiers)| resolve(&tiers).map(|r| (id.to_string(), r)))
            .collect()
    }

    pub fn effective_labels(&self, basis: Basis, filter: &LabelFilter) -> BTreeMap<String, LabelValue> {
        self.effective_records(basis, filter)
            .into_iter()
            .map(|(id, r)| (id, r.value))
            .collect()
    }
}

fn tier(source: Source) -> usize {
    match source {
        Source::Manual => 0,
        Source::Propagated => 1,
        Source::Suggested => 2,
    }
}

fn consider<'a>(tiers: &mut [Option<(usize, &'a LabelRecord)>; 3], pos: usize, r: &'a LabelRecord) {
    let slot = &mut tiers[tier(r.source)];
    let newer = match slot {
        None => true,
        Some((old_pos, old)) => (r.round, pos) > (old.round, *old_pos),
    };
    if newer {
        *slot = Some((pos, r));
    }
}

fn resolve<'a>(tiers: &[Option<(usize, &'a LabelRecord)>; 3]) -> Option<&'a LabelRecord> {
    tiers
        .iter()
        .flatten()
        .map(|(_, r)| *r)
        .find(|r| r.value != LabelValue::Removed)
}
