use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ProjectionChoice;
use super::state::{pair_path, StateDir, CLEANED, MANIFEST, MANUAL, PROJECTION, PROPAGATED, QUEUE, STATE, SUGGESTED};
use super::{CycleConfig, CycleState, PairKey, PipelineError, QueueItem, Stage};
use crate::agreement::{suggest_label, HashtagLexicon};
use crate::clean::{CleanedDocument, Cleaner};
use crate::cluster::{kmeans, Assignment, KMeansConfig};
use crate::projection::{export_projection, pca, tsne, Method, Projection2D, TsneConfig, MAX_TSNE_POINTS};
use crate::propagate::{ambiguous_clusters, cross_validate, propagate, PropagateError};
use crate::store::{jsonl_bytes, now_rfc3339, Basis, Corpus, LabelFilter, LabelRecord, LabelValue, RunManifest, Source};
use crate::vectorize::{train, EmbeddingModel, ModelKind};

/// Rater id stamped on propagated labels.
pub const PROPAGATION_RATER: &str = "propagation";
/// Rater id stamped on rubric suggestions.
pub const RUBRIC_RATER: &str = "rubric";
const EPOCH: &str = "1970-01-01T00:00:00Z";

type StageHook<'a> = &'a (dyn Fn(Stage, &Path) + Sync);

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Called after each stage is checkpointed, with the staging directory.
    /// The last call happens before the round is committed.
    pub on_stage: Option<StageHook<'a>>,
}

/// One line of a `vectors/*.jsonl` artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVector {
    pub post_id: String,
    pub vector: Vec<f32>,
}

/// Writes artifacts into the staging directory and records their digests.
struct Staging {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Staging {
    fn put(&mut self, stage: Stage, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        let mut f = File::create(&path).map_err(|e| PipelineError::io(&path, e))?;
        f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| PipelineError::io(&path, e))?;
        self.manifest.record_file(stage.as_str(), &self.dir, rel)?;
        Ok(())
    }

    fn put_json<T: Serialize>(&mut self, stage: Stage, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
        bytes.push(b'\n');
        self.put(stage, rel, &bytes)
    }

    fn checkpoint(&self, state: &mut CycleState, opts: &RunOptions) -> Result<(), PipelineError> {
        state.artifacts = self.manifest.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect();
        let mut bytes = serde_json::to_vec_pretty(state).expect("state serializes");
        bytes.push(b'\n');
        let path = self.dir.join(STATE);
        fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        if let Some(hook) = opts.on_stage {
            hook(state.stage, &self.dir);
        }
        Ok(())
    }
}

fn model_path(kind: ModelKind) -> String {
    format!("models/{kind}.bin")
}

fn vectors_path(kind: ModelKind) -> String {
    format!("vectors/{kind}.jsonl")
}

/// Document vectors for every post the model can represent. Posts whose
/// cleaned text is empty (or, without subwords, entirely out of vocabulary)
/// get none.
pub fn doc_vectors(model: &EmbeddingModel, docs: &[CleanedDocument]) -> Result<Vec<DocVector>, PipelineError> {
    let mut out = Vec::with_capacity(docs.len());
    for d in docs {
        if d.tokens.is_empty() {
            continue;
        }
        let vector = if model.kind() == ModelKind::Pvdm {
            match model.doc_vector_for(&d.post_id) {
                Some(v) => v.to_vec(),
                None => continue,
            }
        } else {
            let known: Vec<&str> = d.tokens.iter().map(String::as_str).filter(|t| model.token_vector(t).is_ok()).collect();
            if known.is_empty() {
                continue;
            }
            model.embed_document(&known)?.vector
        };
        out.push(DocVector { post_id: d.post_id.clone(), vector });
    }
    Ok(out)
}

fn obtain_model(dir: &StateDir, prev: Option<u32>, config: &CycleConfig, kind: ModelKind, docs: &[CleanedDocument]) -> Result<EmbeddingModel, PipelineError> {
    if config.reuse_model {
        if let Some(r) = prev {
            let p = dir.round_dir(r).join(model_path(kind));
            if p.exists() {
                log::info!("reusing {kind} model from round {r}");
                return Ok(EmbeddingModel::load(&p)?);
            }
            log::warn!("round {r} has no {kind} model; training a new one");
        }
    }
    Ok(train(docs, &config.training(kind), kind)?)
}

/// Interleaves the clusters' candidate lists: one post from each cluster in
/// rank order, then the next from each, until `limit` items are taken.
fn round_robin(lists: &[Vec<QueueItem>], limit: usize) -> Vec<QueueItem> {
    let mut out = Vec::new();
    let longest = lists.iter().map(Vec::len).max().unwrap_or(0);
    'outer: for i in 0..longest {
        for l in lists {
            if let Some(item) = l.get(i) {
                if out.len() == limit {
                    break 'outer;
                }
                out.push(item.clone());
            }
        }
    }
    out
}

fn stamp(config: &CycleConfig, manual: &BTreeMap<String, LabelRecord>) -> String {
    if config.deterministic {
        manual.values().map(|r| r.created_at.as_str()).max().unwrap_or(EPOCH).to_string()
    } else {
        now_rfc3339()
    }
}

fn project(config: &CycleConfig, vectors: &[DocVector]) -> Result<Option<Projection2D>, PipelineError> {
    if config.projection == ProjectionChoice::None || vectors.len() < 2 {
        return Ok(None);
    }
    let ids: Vec<String> = vectors.iter().map(|v| v.post_id.clone()).collect();
    let pts: Vec<Vec<f64>> = vectors.iter().map(|v| v.vector.iter().map(|&x| x as f64).collect()).collect();
    let n = pts.len();
    let tsne_ok = (4..=MAX_TSNE_POINTS).contains(&n) && config.perplexity < n as f64 / 3.0;
    if config.projection == ProjectionChoice::Tsne && !tsne_ok {
        log::warn!("t-SNE is not feasible for {n} points at perplexity {}; using PCA", config.perplexity);
    }
    let mut params = BTreeMap::new();
    params.insert("seed".to_string(), config.seed.to_string());
    if config.projection == ProjectionChoice::Tsne && tsne_ok {
        let cfg = TsneConfig {
            perplexity: config.perplexity,
            iters: config.tsne_iters,
            seed: config.seed,
            ..TsneConfig::default()
        };
        params.insert("perplexity".into(), cfg.perplexity.to_string());
        params.insert("iters".into(), cfg.iters.to_string());
        let r = tsne(&pts, &cfg)?;
        return Ok(Some(Projection2D::new(Method::Tsne, &ids, &r.coords, params, None)?));
    }
    let p = pca(&pts, 2.min(pts[0].len()))?;
    params.insert("components".into(), "2".into());
    Ok(Some(Projection2D::new(Method::Pca, &ids, &p.coords, params, Some(p.explained_ratio))?))
}

/// Runs one full round and commits it as `rounds/round-NNNN`.
///
/// Uses the state directory's corpus, label log and lexicon. Nothing outside
/// the staging directory is touched until the final rename, so a failure or
/// a killed process leaves every earlier round as it was.
pub fn run_cycle_round(dir: &StateDir, config: &CycleConfig, opts: &RunOptions) -> Result<CycleState, PipelineError> {
    config.validate()?;
    let corpus = dir.load_corpus()?;
    let log = dir.open_labels()?;
    let lexicon = dir.load_lexicon()?;
    dir.create()?;
    dir.clear_partials()?;
    let prev = dir.latest_round()?;
    let round = dir.next_round()?;
    let staging_dir = dir.partial_dir(round);
    fs::create_dir_all(&staging_dir).map_err(|e| PipelineError::io(&staging_dir, e))?;
    let basis = config.basis;

    let mut st = Staging {
        dir: staging_dir.clone(),
        manifest: RunManifest::new(round, config.snapshot(), corpus.digest(), dir.labels_digest()?),
    };
    let pairs = config.pairs();
    let mut state = CycleState {
        round,
        run_id: st.manifest.run_id.clone(),
        stage: Stage::Cleaned,
        artifacts: BTreeMap::new(),
        primary: pairs[0],
        pairs: pairs.clone(),
        queue: Vec::new(),
        unembedded: Vec::new(),
        residual_unlabeled: 0,
    };

    let cleaner = Cleaner::new(config.cleaning.clone())?;
    let docs = cleaner.clean_all(corpus.posts());
    st.put(Stage::Cleaned, CLEANED, &jsonl_bytes(&docs))?;
    let manual_records: BTreeMap<String, LabelRecord> = log
        .effective_records(basis, &LabelFilter::manual_only())
        .into_iter()
        .map(|(id, r)| (id, r.clone()))
        .collect();
    st.put(Stage::Cleaned, MANUAL, &jsonl_bytes(&manual_records.values().collect::<Vec<_>>()))?;
    st.checkpoint(&mut state, opts)?;

    let mut vectors: BTreeMap<ModelKind, Vec<DocVector>> = BTreeMap::new();
    for &kind in &config.models {
        let model = obtain_model(dir, prev, config, kind, &docs)?;
        st.put(Stage::Trained, &model_path(kind), &model.to_bytes())?;
        let v = doc_vectors(&model, &docs)?;
        st.put(Stage::Trained, &vectors_path(kind), &jsonl_bytes(&v))?;
        vectors.insert(kind, v);
    }
    let primary_vectors = &vectors[&state.primary.model];
    let embedded: BTreeSet<&str> = primary_vectors.iter().map(|v| v.post_id.as_str()).collect();
    state.unembedded = corpus.posts().iter().filter(|p| !embedded.contains(p.post_id.as_str())).map(|p| p.post_id.clone()).collect();
    state.advance(Stage::Trained);
    st.checkpoint(&mut state, opts)?;

    let mut assignments: BTreeMap<PairKey, Assignment> = BTreeMap::new();
    for &pair in &pairs {
        let v = &vectors[&pair.model];
        if v.len() < pair.k.max(2) {
            return Err(PipelineError::TooFewDocuments {
                usable: v.len(),
                total: corpus.len(),
                needed: pair.k.max(2),
            });
        }
        let pts: Vec<Vec<f64>> = v.iter().map(|d| d.vector.iter().map(|&x| x as f64).collect()).collect();
        let ids: Vec<String> = v.iter().map(|d| d.post_id.clone()).collect();
        let km = kmeans(
            &pts,
            &KMeansConfig {
                restarts: config.restarts,
                seed: config.seed,
                ..KMeansConfig::new(pair.k)
            },
        )?;
        let a = Assignment::new(&ids, &km.labels, pair.k)?;
        st.put(Stage::Clustered, &pair_path(pair, "assignment.jsonl"), a.to_jsonl().as_bytes())?;
        st.put_json(Stage::Clustered, &pair_path(pair, "clusters.json"), &km.model)?;
        assignments.insert(pair, a);
    }
    state.advance(Stage::Clustered);
    st.checkpoint(&mut state, opts)?;

    let created_at = stamp(config, &manual_records);
    let mut primary_manual = BTreeMap::new();
    let mut primary_labels = Vec::new();
    for &pair in &pairs {
        let a = &assignments[&pair];
        let manual: BTreeMap<String, LabelValue> = manual_records
            .iter()
            .filter(|(id, _)| a.cluster_of(id).is_some())
            .map(|(id, r)| (id.clone(), r.value))
            .collect();
        let prop = propagate(a, &manual, &config.policy)?;
        st.put_json(Stage::Propagated, &pair_path(pair, "propagation.json"), &prop.report)?;
        let cv = match cross_validate(a, &manual, &config.policy, config.folds, config.seed) {
            Ok(r) => Some(r),
            Err(PropagateError::TooFewLabels { labels, folds }) => {
                log::info!("{}: {labels} manual labels is fewer than {folds} folds; CV skipped", pair.dir_name());
                None
            }
            Err(e) => return Err(e.into()),
        };
        st.put_json(Stage::Propagated, &pair_path(pair, "cv.json"), &cv)?;
        if pair == state.primary {
            primary_labels = prop.to_records(PROPAGATION_RATER, basis, round, &created_at);
            primary_manual = manual;
        }
    }
    st.put(Stage::Propagated, PROPAGATED, &jsonl_bytes(&primary_labels))?;
    state.advance(Stage::Propagated);
    st.checkpoint(&mut state, opts)?;

    let suggestions = suggestions(&corpus, &lexicon, &manual_records, basis, round, &created_at);
    st.put(Stage::Propagated, SUGGESTED, &jsonl_bytes(&suggestions))?;
    state.queue = build_queue(&corpus, &lexicon, &assignments[&state.primary], &primary_manual, config)?;
    st.put_json(Stage::Propagated, QUEUE, &state.queue)?;
    if let Some(p) = project(config, primary_vectors)? {
        let mut labels: BTreeMap<String, LabelValue> = primary_manual.clone();
        labels.extend(primary_labels.iter().map(|r| (r.post_id.clone(), r.value)));
        let csv = export_projection(&p, Some(&assignments[&state.primary]), &labels)?;
        st.put(Stage::Propagated, PROJECTION, csv.as_bytes())?;
    }
    let labeled: BTreeSet<&str> = manual_records
        .iter()
        .filter(|(_, r)| r.value != LabelValue::Removed)
        .map(|(id, _)| id.as_str())
        .chain(primary_labels.iter().map(|r| r.post_id.as_str()))
        .collect();
    state.residual_unlabeled = corpus.len() - labeled.len();
    if !state.queue.is_empty() {
        state.advance(Stage::AwaitingLabels);
    }
    st.manifest.save(&staging_dir.join(MANIFEST))?;
    st.checkpoint(&mut state, opts)?;
    commit(&staging_dir, &dir.round_dir(round))?;
    log::info!(
        "round {round} committed: stage {}, {} propagated, {} queued, {} unlabeled",
        state.stage,
        primary_labels.len(),
        state.queue.len(),
        state.residual_unlabeled
    );
    Ok(state)
}

fn commit(staging: &Path, target: &Path) -> Result<(), PipelineError> {
    if let Ok(f) = File::open(staging) {
        let _ = f.sync_all();
    }
    fs::rename(staging, target).map_err(|e| PipelineError::io(target, e))?;
    if let Some(parent) = target.parent() {
        if let Ok(f) = File::open(parent) {
            let _ = f.sync_all();
        }
    }
    Ok(())
}

fn suggestions(corpus: &Corpus, lexicon: &HashtagLexicon, manual: &BTreeMap<String, LabelRecord>, basis: Basis, round: u32, created_at: &str) -> Vec<LabelRecord> {
    if lexicon.is_empty() {
        return Vec::new();
    }
    corpus
        .posts()
        .iter()
        .filter(|p| !manual.contains_key(&p.post_id))
        .filter_map(|p| {
            suggest_label(p, lexicon).map(|s| LabelRecord::new(p.post_id.clone(), RUBRIC_RATER, s.value, basis, Source::Suggested, round, created_at))
        })
        .collect()
}

fn build_queue(corpus: &Corpus, lexicon: &HashtagLexicon, assignment: &Assignment, manual: &BTreeMap<String, LabelValue>, config: &CycleConfig) -> Result<Vec<QueueItem>, PipelineError> {
    let ambiguous = ambiguous_clusters(assignment, manual, &config.policy, usize::MAX)?;
    let lists: Vec<Vec<QueueItem>> = ambiguous
        .iter()
        .enumerate()
        .map(|(rank, c)| {
            let items = c.sample.iter().map(|id| QueueItem {
                post_id: id.clone(),
                cluster: c.cluster,
                cluster_rank: rank,
                cluster_size: c.size,
                cluster_labeled: c.labeled,
                decision: c.decision,
                suggestion: corpus.get(id).and_then(|p| suggest_label(p, lexicon)),
            });
            // Posts the rubric has an opinion on go first within their cluster.
            let (mut with, without): (Vec<_>, Vec<_>) = items.partition(|q| q.suggestion.is_some());
            with.extend(without);
            with
        })
        .collect();
    Ok(round_robin(&lists, config.queue_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagate::Decision;

    fn item(id: &str, cluster: usize) -> QueueItem {
        QueueItem {
            post_id: id.into(),
            cluster,
            cluster_rank: cluster,
            cluster_size: 1,
            cluster_labeled: 0,
            decision: Decision::BelowMinimum,
            suggestion: None,
        }
    }

    #[test]
    fn round_robin_interleaves_by_rank() {
        let lists = vec![vec![item("a1", 0), item("a2", 0), item("a3", 0)], vec![item("b1", 1)], vec![item("c1", 2), item("c2", 2)]];
        let ids: Vec<String> = round_robin(&lists, 5).into_iter().map(|q| q.post_id).collect();
        assert_eq!(ids, ["a1", "b1", "c1", "a2", "c2"]);
        assert_eq!(round_robin(&lists, 100).len(), 6);
        assert!(round_robin(&[], 3).is_empty());
    }
}
