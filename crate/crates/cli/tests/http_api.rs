use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use semilabel::api::{router, AppState};
use semilabel_core::agreement::compute_irr;
use semilabel_core::pipeline::{build_report, run_cycle_round, CycleConfig, RunOptions, StateDir};
use semilabel_core::store::{Basis, Corpus, LabelFilter, LabelRecord, LabelValue};
use semilabel_core::synthetic::{topic_corpus, SyntheticCorpus, TopicCorpusSpec};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

struct Fixture {
    _tmp: TempDir,
    dir: StateDir,
    syn: SyntheticCorpus,
    app: Router,
}

fn config() -> CycleConfig {
    CycleConfig { queue_size: 20, ..CycleConfig::default() }
}

/// 400 posts, rater-a labels 5%, rater-b relabels the same posts with every
/// fifth value flipped; one round when `with_round`.
fn fixture(with_round: bool) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let dir = StateDir::new(tmp.path());
    let syn = topic_corpus(&TopicCorpusSpec { docs: 400, ..TopicCorpusSpec::default() });
    let corpus = Corpus::from_posts(syn.posts.clone()).unwrap();
    dir.save_corpus(&corpus).unwrap();
    let mut log = dir.open_labels().unwrap();
    for (i, r) in syn.stratified_labels(0.05, 3, "rater-a", Basis::PostOnly).into_iter().enumerate() {
        let mut b = r.clone();
        b.rater_id = "rater-b".into();
        if i % 5 == 0 {
            b.value = if r.value == LabelValue::Yes { LabelValue::No } else { LabelValue::Yes };
        }
        log.record(&corpus, r).unwrap();
        log.record(&corpus, b).unwrap();
    }
    if with_round {
        run_cycle_round(&dir, &config(), &RunOptions::default()).unwrap();
    }
    let app = router(AppState::load(dir.clone(), config()).unwrap());
    Fixture { _tmp: tmp, dir, syn, app }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

fn assert_error(v: &Value, code: &str) {
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn queue_items_carry_text_cluster_and_suggestion() {
    let f = fixture(true);
    let (s, v) = get(&f.app, "/api/queue?limit=10").await;
    assert_eq!(s, StatusCode::OK);
    let items = v["items"].as_array().unwrap();
    assert!(!items.is_empty() && items.len() <= 10);
    for it in items {
        let id = it["post_id"].as_str().unwrap();
        let post = f.syn.posts.iter().find(|p| p.post_id == id).unwrap();
        assert_eq!(it["raw_text"], post.raw_text.as_str());
        assert!(it["cluster"].is_u64());
        assert!(it.get("suggestion").is_some());
        assert!(it["histogram"].is_object());
        assert!(!it["cleaned_text"].as_str().unwrap().is_empty());
    }
}

#[tokio::test]
async fn submitted_label_round_trips_and_leaves_the_queue() {
    let f = fixture(true);
    let (_, q) = get(&f.app, "/api/queue?limit=100").await;
    let first = q["items"][0]["post_id"].as_str().unwrap().to_string();
    let before = q["items"].as_array().unwrap().len();

    let body = json!({ "post_id": first, "rater_id": "rater-a", "value": "yes", "basis": "post_only" });
    let (s, rec) = call(&f.app, Method::POST, "/api/labels", Some(body)).await;
    assert_eq!(s, StatusCode::CREATED, "{rec}");
    assert_eq!(rec["source"], "manual");
    assert_eq!(rec["round"], 1);

    let (s, v) = get(&f.app, &format!("/api/labels?post_id={first}")).await;
    assert_eq!(s, StatusCode::OK);
    let recs = v["records"].as_array().unwrap();
    assert!(recs.iter().any(|r| r == &rec));
    assert_eq!(v["effective"][0]["value"], "yes");

    let (_, q2) = get(&f.app, "/api/queue?limit=100").await;
    let ids: Vec<&str> = q2["items"].as_array().unwrap().iter().map(|i| i["post_id"].as_str().unwrap()).collect();
    assert!(!ids.contains(&first.as_str()));
    assert_eq!(ids.len(), before - 1);

    // persisted to the log file, not just memory
    let log = f.dir.open_labels().unwrap();
    assert!(log.records().iter().any(|r| r.post_id == first && r.rater_id == "rater-a" && r.value == LabelValue::Yes && r.round == 1));
}

#[tokio::test]
async fn label_errors_are_json() {
    let f = fixture(true);
    let (s, v) = call(&f.app, Method::POST, "/api/labels", Some(json!({ "post_id": "nope", "rater_id": "r", "value": "yes" }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "unknown_post");

    let id = f.syn.posts[0].post_id.clone();
    for bad in [
        json!({ "post_id": id, "rater_id": "r", "value": "maybe" }),
        json!({ "post_id": id, "value": "yes" }),
        json!({ "post_id": id, "rater_id": "", "value": "yes" }),
        json!({ "post_id": id, "rater_id": "propagation", "value": "yes" }),
        json!({ "post_id": id, "rater_id": "r", "value": "yes", "source": "propagated" }),
        json!({ "post_id": id, "rater_id": "r", "value": "yes", "created_at": "yesterday" }),
        json!({ "post_id": id, "rater_id": "r", "value": "yes", "extra": 1 }),
    ] {
        let (s, v) = call(&f.app, Method::POST, "/api/labels", Some(bad.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{bad}");
        assert_error(&v, "bad_request");
    }
    let (s, v) = get(&f.app, "/api/labels?post_id=nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "unknown_post");
    let (s, v) = get(&f.app, "/api/nowhere").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_found");
}

#[tokio::test]
async fn irr_matches_direct_computation() {
    let f = fixture(true);
    let log = f.dir.open_labels().unwrap();
    let a = log.effective_labels(Basis::PostOnly, &LabelFilter::manual_only().with_rater("rater-a"));
    let b = log.effective_labels(Basis::PostOnly, &LabelFilter::manual_only().with_rater("rater-b"));
    let strata = f.dir.load_strata(&f.dir.load_corpus().unwrap()).unwrap();
    let expected = serde_json::to_value(compute_irr(&a, &b, &strata).unwrap()).unwrap();

    for uri in ["/api/irr", "/api/irr?rater_a=rater-a&rater_b=rater-b&basis=post_only"] {
        let (s, v) = get(&f.app, uri).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(v["report"], expected);
        let r = &v["rounded_tenths"]["overall"];
        assert_eq!(r["same"].as_u64().unwrap() + r["different"].as_u64().unwrap(), 1000);
        assert_eq!(r["completely_incorrect"].as_u64().unwrap() + r["partially_incorrect"].as_u64().unwrap(), r["different"].as_u64().unwrap());
    }
    let (s, v) = get(&f.app, "/api/irr?basis=post_plus_profile").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "not_enough_raters");
    let (s, v) = get(&f.app, "/api/irr?rater_a=rater-a&rater_b=ghost").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "no_comparable_labels");
    let (s, _) = get(&f.app, "/api/irr?rater_a=rater-a").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn projection_report_rubric_and_clusters() {
    let f = fixture(true);
    let (s, p) = get(&f.app, "/api/projection").await;
    assert_eq!(s, StatusCode::OK);
    let points = p["points"].as_array().unwrap();
    assert_eq!(points.len(), 400);
    let unlabeled = points.iter().find(|pt| pt["label"].is_null()).unwrap()["post_id"].as_str().unwrap().to_string();
    call(&f.app, Method::POST, "/api/labels", Some(json!({ "post_id": unlabeled, "rater_id": "rater-a", "value": "unclear" }))).await;
    let (_, p2) = get(&f.app, "/api/projection").await;
    let pt = p2["points"].as_array().unwrap().iter().find(|pt| pt["post_id"] == unlabeled.as_str()).unwrap().clone();
    assert_eq!(pt["label"], "unclear");

    let (s, r) = get(&f.app, "/api/report").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r, serde_json::to_value(build_report(&f.dir).unwrap()).unwrap());

    let (s, rub) = get(&f.app, "/api/rubric").await;
    assert_eq!(s, StatusCode::OK);
    assert!(rub["rules"].as_array().unwrap().len() >= 5);

    let (s, c) = get(&f.app, "/api/clusters").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((c["model"].as_str(), c["k"].as_u64(), c["primary"].as_bool()), (Some("cbow"), Some(6), Some(true)));
    let clusters = c["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 6);
    assert_eq!(clusters.iter().map(|c| c["size"].as_u64().unwrap()).sum::<u64>(), 400);
    assert!(clusters.iter().all(|c| c.get("decision").is_some()));
    let (s, v) = get(&f.app, "/api/clusters?k=9").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "unknown_pair");
}

#[tokio::test]
async fn empty_state_before_the_first_round() {
    let f = fixture(false);
    let (s, v) = get(&f.app, "/api/report").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "no_rounds");
    let (s, v) = get(&f.app, "/api/projection").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error(&v, "no_projection");
    let (s, v) = get(&f.app, "/api/queue").await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["items"].as_array().unwrap().is_empty());
    let (s, _) = get(&f.app, "/api/clusters").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    // labels submitted now belong to round 0
    let id = f.syn.posts[0].post_id.clone();
    let (s, rec) = call(&f.app, Method::POST, "/api/labels", Some(json!({ "post_id": id, "rater_id": "rater-c", "value": "no" }))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(rec["round"], 0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn only_one_round_runs_at_a_time() {
    let f = fixture(true);
    let (s, v) = call(&f.app, Method::POST, "/api/rounds", None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(v["round"], 1);
    let (s, v) = call(&f.app, Method::POST, "/api/rounds", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_error(&v, "round_active");

    let mut status = Value::Null;
    for _ in 0..600 {
        status = get(&f.app, "/api/rounds").await.1;
        if status["active"] == false {
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    assert_eq!(status["active"], false);
    assert_eq!(status["latest_round"], 1);
    assert!(status["last_error"].is_null(), "{status}");

    // the label view now includes round 1's propagated labels
    let propagated: Vec<LabelRecord> = f.dir.load_round_labels(1, "propagated.jsonl").unwrap();
    if let Some(p) = propagated.first() {
        let (_, v) = get(&f.app, &format!("/api/labels?post_id={}", p.post_id)).await;
        assert!(v["records"].as_array().unwrap().iter().any(|r| r["source"] == "propagated" && r["round"] == 1));
    }
    let (_, r) = get(&f.app, "/api/report").await;
    assert_eq!(r["latest_round"], 1);
}
