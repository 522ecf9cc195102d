//! JSON API for the labeling console. There is no authentication: bind it to
//! a loopback address.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use semilabel_core::agreement::{compute_irr, default_rubric, load_lexicon, AgreementError, HashtagLexicon, LexiconClass, RoundedSplit, Suggestion};
use semilabel_core::clean::CleanedDocument;
use semilabel_core::pipeline::{build_report, queue_view, run_cycle_round, CycleConfig, CycleState, PairKey, PipelineError, RunOptions, StateDir, PROPAGATION_RATER, RUBRIC_RATER};
use semilabel_core::propagate::{ClusterOutcome, Decision};
use semilabel_core::store::{now_rfc3339, read_jsonl, Basis, Corpus, LabelFilter, LabelLog, LabelRecord, LabelValue, Source, StoreError};
use semilabel_core::Error as CoreError;

use crate::error::CliError;

/// JSON error body `{code, message}` with its status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

impl<E: Into<CoreError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        let e: CoreError = e.into();
        let msg = e.to_string();
        let (status, code) = match &e {
            CoreError::Store(StoreError::UnknownPost(_)) => (StatusCode::NOT_FOUND, "unknown_post"),
            CoreError::Store(StoreError::PropagatedOverManual(_)) => (StatusCode::CONFLICT, "manual_label_exists"),
            CoreError::Pipeline(PipelineError::NoRounds(_)) => (StatusCode::NOT_FOUND, "no_rounds"),
            CoreError::Pipeline(PipelineError::NoCorpus(_)) => (StatusCode::NOT_FOUND, "no_corpus"),
            CoreError::Pipeline(PipelineError::RoundActive) => (StatusCode::CONFLICT, "round_active"),
            CoreError::Agreement(AgreementError::NoComparablePairs) => (StatusCode::UNPROCESSABLE_ENTITY, "no_comparable_labels"),
            e if e.is_data_error() => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_data"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, msg)
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Per-round data the queue view needs, loaded once per round.
struct RoundCache {
    round: u32,
    state: CycleState,
    cleaned: BTreeMap<String, Vec<String>>,
    clusters: BTreeMap<usize, ClusterOutcome>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RoundStatus {
    pub active: bool,
    pub latest_round: Option<u32>,
    pub last_error: Option<String>,
}

pub struct AppState {
    dir: StateDir,
    config: CycleConfig,
    corpus: Arc<Corpus>,
    lexicon: HashtagLexicon,
    /// Manual/suggested log plus the latest round's derived labels. Writers
    /// take the write lock, so submissions are serialized.
    labels: RwLock<LabelLog>,
    cache: RwLock<Option<Arc<RoundCache>>>,
    round_active: AtomicBool,
    last_error: Mutex<Option<String>>,
}

impl AppState {
    pub fn load(dir: StateDir, config: CycleConfig) -> Result<Arc<Self>, CoreError> {
        config.validate()?;
        let corpus = dir.load_corpus()?;
        let lexicon = dir.load_lexicon()?;
        // a round that crashed before committing left only a staging dir; the
        // committed rounds must still verify
        if let Some(r) = dir.latest_round()? {
            dir.verify_round(r)?;
        }
        let labels = dir.label_view()?;
        Ok(Arc::new(Self {
            dir,
            config,
            corpus: Arc::new(corpus),
            lexicon,
            labels: RwLock::new(labels),
            cache: RwLock::new(None),
            round_active: AtomicBool::new(false),
            last_error: Mutex::new(None),
        }))
    }

    fn round_cache(&self) -> ApiResult<Option<Arc<RoundCache>>> {
        let Some(latest) = self.dir.latest_round()? else {
            return Ok(None);
        };
        if let Some(c) = self.cache.read().expect("cache lock").as_ref() {
            if c.round == latest {
                return Ok(Some(c.clone()));
            }
        }
        let state = self.dir.load_state(latest)?;
        let docs: Vec<CleanedDocument> = read_jsonl(&self.dir.round_dir(latest).join("cleaned.jsonl"))?;
        let report = self.dir.load_propagation(latest, state.primary)?;
        let cache = Arc::new(RoundCache {
            round: latest,
            cleaned: docs.into_iter().map(|d| (d.post_id, d.tokens)).collect(),
            clusters: report.clusters.into_iter().map(|c| (c.cluster, c)).collect(),
            state,
        });
        *self.cache.write().expect("cache lock") = Some(cache.clone());
        Ok(Some(cache))
    }

    fn status(&self) -> ApiResult<RoundStatus> {
        Ok(RoundStatus {
            active: self.round_active.load(Ordering::SeqCst),
            latest_round: self.dir.latest_round()?,
            last_error: self.last_error.lock().expect("error lock").clone(),
        })
    }

    fn reload_labels(&self) -> Result<(), PipelineError> {
        let view = self.dir.label_view()?;
        *self.labels.write().expect("label lock") = view;
        Ok(())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/clusters", get(clusters))
        .route("/api/queue", get(queue))
        .route("/api/labels", get(list_labels).post(submit_label))
        .route("/api/irr", get(irr))
        .route("/api/projection", get(projection))
        .route("/api/report", get(report))
        .route("/api/rubric", get(rubric))
        .route("/api/rounds", get(round_status).post(start_round))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: &str) -> Result<(), CliError> {
    let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| CliError::io(bind, e))?;
    let addr = listener.local_addr().map_err(|e| CliError::io(bind, e))?;
    log::warn!("serving {} on http://{addr}/api without authentication", state.dir.root().display());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::io(addr.to_string(), e))
}

fn basis_or(state: &AppState, basis: Option<Basis>) -> Basis {
    basis.unwrap_or(state.config.basis)
}

#[derive(Debug, Default, Deserialize)]
struct ClustersQuery {
    model: Option<String>,
    k: Option<usize>,
}

async fn clusters(State(st): State<Arc<AppState>>, Query(q): Query<ClustersQuery>) -> ApiResult<Json<Value>> {
    let Some(cache) = st.round_cache()? else {
        return Err(PipelineError::NoRounds(st.dir.root().display().to_string()).into());
    };
    let pair = match (q.model, q.k) {
        (None, None) => cache.state.primary,
        (m, k) => PairKey {
            model: match m {
                Some(m) => m.parse().map_err(ApiError::bad_request)?,
                None => cache.state.primary.model,
            },
            k: k.unwrap_or(cache.state.primary.k),
        },
    };
    if !cache.state.pairs.contains(&pair) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "unknown_pair", format!("round {} has no {} clustering", cache.round, pair.dir_name())));
    }
    let report = st.dir.load_propagation(cache.round, pair)?;
    let cv = st.dir.load_cv(cache.round, pair)?;
    Ok(Json(json!({
        "round": cache.round,
        "model": pair.model,
        "k": pair.k,
        "primary": pair == cache.state.primary,
        "pairs": cache.state.pairs,
        "decided_clusters": report.decided_clusters,
        "newly_labeled": report.newly_labeled,
        "clusters": report.clusters,
        "cv": cv,
    })))
}

#[derive(Debug, Deserialize)]
struct QueueQuery {
    limit: Option<usize>,
    basis: Option<Basis>,
}

#[derive(Debug, Serialize)]
struct TagView {
    tag: String,
    class: Option<LexiconClass>,
}

#[derive(Debug, Serialize)]
struct QueueItemView {
    post_id: String,
    raw_text: String,
    cleaned_text: String,
    hashtags: Vec<TagView>,
    cluster: usize,
    cluster_rank: usize,
    cluster_size: usize,
    histogram: BTreeMap<LabelValue, usize>,
    decision: Decision,
    suggestion: Option<Suggestion>,
}

async fn queue(State(st): State<Arc<AppState>>, Query(q): Query<QueueQuery>) -> ApiResult<Json<Value>> {
    let basis = basis_or(&st, q.basis);
    let limit = q.limit.unwrap_or(st.config.queue_size);
    let Some(cache) = st.round_cache()? else {
        return Ok(Json(json!({ "round": null, "basis": basis, "items": [] })));
    };
    let items = {
        let labels = st.labels.read().expect("label lock");
        queue_view(&cache.state, &labels, basis, limit)
    };
    let views: Vec<QueueItemView> = items
        .into_iter()
        .filter_map(|item| {
            let post = st.corpus.get(&item.post_id)?;
            Some(QueueItemView {
                raw_text: post.raw_text.clone(),
                cleaned_text: cache.cleaned.get(&item.post_id).map(|t| t.join(" ")).unwrap_or_default(),
                hashtags: post
                    .source_hashtags
                    .iter()
                    .map(|t| TagView {
                        tag: t.clone(),
                        class: st.lexicon.class_of(&HashtagLexicon::normalize(t)),
                    })
                    .collect(),
                histogram: cache.clusters.get(&item.cluster).map(|c| c.histogram.clone()).unwrap_or_default(),
                post_id: item.post_id,
                cluster: item.cluster,
                cluster_rank: item.cluster_rank,
                cluster_size: item.cluster_size,
                decision: item.decision,
                suggestion: item.suggestion,
            })
        })
        .collect();
    Ok(Json(json!({ "round": cache.round, "basis": basis, "items": views })))
}

#[derive(Debug, Deserialize)]
struct LabelsQuery {
    post_id: Option<String>,
    rater_id: Option<String>,
    basis: Option<Basis>,
}

async fn list_labels(State(st): State<Arc<AppState>>, Query(q): Query<LabelsQuery>) -> ApiResult<Json<Value>> {
    if let Some(id) = &q.post_id {
        if !st.corpus.contains(id) {
            return Err(StoreError::UnknownPost(id.clone()).into());
        }
    }
    let labels = st.labels.read().expect("label lock");
    let records: Vec<&LabelRecord> = labels
        .records()
        .iter()
        .filter(|r| q.post_id.as_ref().is_none_or(|p| &r.post_id == p))
        .filter(|r| q.rater_id.as_ref().is_none_or(|p| &r.rater_id == p))
        .filter(|r| q.basis.is_none_or(|b| r.basis == b))
        .collect();
    let effective = q.post_id.as_ref().map(|id| {
        [Basis::PostOnly, Basis::PostPlusProfile]
            .into_iter()
            .filter_map(|b| labels.effective_records(b, &LabelFilter::all()).remove(id).cloned())
            .collect::<Vec<_>>()
    });
    Ok(Json(json!({ "records": records, "effective": effective })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelSubmission {
    post_id: String,
    rater_id: String,
    value: LabelValue,
    basis: Option<Basis>,
    source: Option<Source>,
    round: Option<u32>,
    created_at: Option<String>,
}

async fn submit_label(State(st): State<Arc<AppState>>, body: Result<Json<LabelSubmission>, axum::extract::rejection::JsonRejection>) -> ApiResult<(StatusCode, Json<LabelRecord>)> {
    let Json(sub) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let rater = sub.rater_id.trim();
    if rater.is_empty() {
        return Err(ApiError::bad_request("rater_id must not be empty"));
    }
    if rater == PROPAGATION_RATER || rater == RUBRIC_RATER {
        return Err(ApiError::bad_request(format!("rater_id `{rater}` is reserved")));
    }
    let source = sub.source.unwrap_or(Source::Manual);
    if source == Source::Propagated {
        return Err(ApiError::bad_request("propagated labels are produced by cycle rounds, not submitted"));
    }
    if let Some(t) = &sub.created_at {
        chrono::DateTime::parse_from_rfc3339(t).map_err(|e| ApiError::bad_request(format!("created_at: {e}")))?;
    }
    let round = match sub.round {
        Some(r) => r,
        None => st.dir.next_round()?,
    };
    let record = LabelRecord::new(sub.post_id, rater, sub.value, basis_or(&st, sub.basis), source, round, sub.created_at.unwrap_or_else(now_rfc3339));
    let mut labels = st.labels.write().expect("label lock");
    let stored = labels.record(&st.corpus, record)?.clone();
    Ok((StatusCode::CREATED, Json(stored)))
}

#[derive(Debug, Deserialize)]
struct IrrQuery {
    rater_a: Option<String>,
    rater_b: Option<String>,
    basis: Option<Basis>,
}

/// The two raters with the most manual labels on `basis`, ties by id.
fn default_raters(log: &LabelLog, basis: Basis) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in log.records() {
        if r.source == Source::Manual && r.basis == basis {
            *counts.entry(&r.rater_id).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(2).map(|(r, _)| r.to_string()).collect()
}

async fn irr(State(st): State<Arc<AppState>>, Query(q): Query<IrrQuery>) -> ApiResult<Json<Value>> {
    let basis = basis_or(&st, q.basis);
    let labels = st.labels.read().expect("label lock");
    let (a, b) = match (q.rater_a, q.rater_b) {
        (Some(a), Some(b)) => (a, b),
        (None, None) => {
            let top = default_raters(&labels, basis);
            if top.len() < 2 {
                return Err(ApiError::new(StatusCode::NOT_FOUND, "not_enough_raters", format!("{} rater(s) have manual labels on {basis}", top.len())));
            }
            (top[0].clone(), top[1].clone())
        }
        _ => return Err(ApiError::bad_request("give both rater_a and rater_b, or neither")),
    };
    let la = labels.effective_labels(basis, &LabelFilter::manual_only().with_rater(&a));
    let lb = labels.effective_labels(basis, &LabelFilter::manual_only().with_rater(&b));
    drop(labels);
    let strata = st.dir.load_strata(&st.corpus)?;
    let report = compute_irr(&la, &lb, &strata)?;
    let rounded: BTreeMap<String, Option<RoundedSplit>> = std::iter::once(("overall".to_string(), report.overall.rounded_tenths()))
        .chain(report.strata.iter().map(|(k, s)| (k.clone(), s.rounded_tenths())))
        .collect();
    Ok(Json(json!({ "rater_a": a, "rater_b": b, "basis": basis, "report": report, "rounded_tenths": rounded })))
}

async fn projection(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let missing = || ApiError::new(StatusCode::NOT_FOUND, "no_projection", "no projection yet; run a cycle round or `project`");
    let round = st.dir.latest_round()?.ok_or_else(missing)?;
    let mut rows = st.dir.load_projection(round)?.ok_or_else(missing)?;
    let live = st.labels.read().expect("label lock").effective_labels(st.config.basis, &LabelFilter::all());
    for r in &mut rows {
        r.label = live.get(&r.post_id).copied();
    }
    Ok(Json(json!({ "round": round, "basis": st.config.basis, "points": rows })))
}

async fn report(State(st): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let r = build_report(&st.dir)?;
    Ok(Json(serde_json::to_value(r).expect("report serializes")))
}

async fn rubric(State(st): State<Arc<AppState>>) -> Json<Value> {
    let lexicon = match st.dir.path("lexicon.csv") {
        p if p.exists() => load_lexicon(&p).ok().map(|l| l.len()),
        _ => None,
    };
    Json(json!({ "rules": default_rubric(), "lexicon_entries": lexicon.unwrap_or(st.lexicon.len()) }))
}

async fn round_status(State(st): State<Arc<AppState>>) -> ApiResult<Json<RoundStatus>> {
    Ok(Json(st.status()?))
}

/// Clears the active flag even if the round panics.
struct ActiveGuard(Arc<AppState>);

impl Drop for ActiveGuard {
    fn drop(&mut self) {
        self.0.round_active.store(false, Ordering::SeqCst);
    }
}

async fn start_round(State(st): State<Arc<AppState>>) -> ApiResult<(StatusCode, Json<Value>)> {
    if st.round_active.swap(true, Ordering::SeqCst) {
        return Err(PipelineError::RoundActive.into());
    }
    let guard = ActiveGuard(st.clone());
    let round = match st.dir.next_round() {
        Ok(r) => r,
        Err(e) => return Err(e.into()),
    };
    tokio::task::spawn_blocking(move || {
        let st = guard.0.clone();
        let outcome = run_cycle_round(&st.dir, &st.config, &RunOptions::default()).and_then(|_| st.reload_labels());
        *st.last_error.lock().expect("error lock") = outcome.err().map(|e| {
            log::error!("cycle round failed: {e}");
            e.to_string()
        });
        drop(guard);
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "round": round }))))
}
