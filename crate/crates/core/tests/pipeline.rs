use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use semilabel_core::cluster::Assignment;
use semilabel_core::pipeline::{build_report, queue_view, render_report, run_cycle_round, CycleConfig, RunOptions, Stage, StateDir};
use semilabel_core::propagate::propagate;
use semilabel_core::store::{read_jsonl, Basis, Corpus, LabelRecord, LabelValue, Source};
use semilabel_core::synthetic::{topic_corpus, SyntheticCorpus, TopicCorpusSpec};
use tempfile::TempDir;

fn setup(spec: &TopicCorpusSpec, fraction: f64) -> (TempDir, StateDir, SyntheticCorpus) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = StateDir::new(tmp.path());
    let syn = topic_corpus(spec);
    let corpus = Corpus::from_posts(syn.posts.clone()).unwrap();
    dir.save_corpus(&corpus).unwrap();
    let mut log = dir.open_labels().unwrap();
    for r in syn.stratified_labels(fraction, 3, "rater-a", Basis::PostOnly) {
        log.record(&corpus, r).unwrap();
    }
    (tmp, dir, syn)
}

fn config() -> CycleConfig {
    CycleConfig { queue_size: 20, ..CycleConfig::default() }
}

#[test]
fn two_topic_round_labels_a_fifth_of_the_corpus_accurately() {
    let (_tmp, dir, syn) = setup(&TopicCorpusSpec::default(), 0.05);
    let start = Instant::now();
    let state = run_cycle_round(&dir, &config(), &RunOptions::default()).unwrap();
    assert!(start.elapsed().as_secs() < 300);
    assert_eq!(state.round, 0);

    let cv = dir.load_cv(0, state.primary).unwrap().expect("cv report");
    assert!(cv.mean_accuracy.unwrap() >= 0.95, "{cv:?}");
    let propagated: Vec<LabelRecord> = dir.load_round_labels(0, "propagated.jsonl").unwrap();
    assert!(propagated.len() as f64 >= 0.2 * syn.posts.len() as f64, "{} propagated", propagated.len());
    let wrong = propagated.iter().filter(|r| syn.truth[&r.post_id] != r.value).count();
    assert!(wrong as f64 <= 0.05 * propagated.len() as f64);
    assert!(propagated.iter().all(|r| r.source == Source::Propagated && r.round == 0));

    let prop = dir.load_propagation(0, state.primary).unwrap();
    let undecided = prop.clusters.iter().any(|c| c.decision.value().is_none());
    assert_eq!(!state.queue.is_empty(), undecided);
    assert_eq!(state.stage, if undecided { Stage::AwaitingLabels } else { Stage::Propagated });
    dir.verify_round(0).unwrap();
}

#[test]
fn zero_labels_halt_at_awaiting_labels_with_suggestions() {
    let (_tmp, dir, syn) = setup(&TopicCorpusSpec { docs: 400, ..TopicCorpusSpec::default() }, 0.0);
    let mut lex = String::from("hashtag,class,note\n");
    for w in &syn.topic_a {
        lex.push_str(&format!("{w},yes,\n"));
    }
    std::fs::write(dir.path("lexicon.csv"), lex).unwrap();
    let state = run_cycle_round(&dir, &config(), &RunOptions::default()).unwrap();
    assert_eq!(state.stage, Stage::AwaitingLabels);
    assert_eq!(state.queue.len(), 20);
    assert!(state.queue.iter().any(|q| q.suggestion.is_some()));
    assert!(dir.load_cv(0, state.primary).unwrap().is_none());
    assert!(dir.load_round_labels(0, "propagated.jsonl").unwrap().is_empty());
    let suggested = dir.load_round_labels(0, "suggested.jsonl").unwrap();
    assert!(!suggested.is_empty() && suggested.iter().all(|r| r.source == Source::Suggested && r.value == LabelValue::Yes));
    // every cluster is represented before any cluster repeats
    let k = state.queue.iter().map(|q| q.cluster).collect::<std::collections::BTreeSet<_>>().len();
    let first: Vec<usize> = state.queue.iter().take(k).map(|q| q.cluster_rank).collect();
    assert_eq!(first, (0..k).collect::<Vec<_>>());
}

#[test]
fn identical_inputs_give_identical_digests() {
    let spec = TopicCorpusSpec { docs: 600, ..TopicCorpusSpec::default() };
    let (_a, da, _) = setup(&spec, 0.05);
    let (_b, db, _) = setup(&spec, 0.05);
    let cfg = CycleConfig { projection: semilabel_core::pipeline::ProjectionChoice::Tsne, tsne_iters: 300, ..config() };
    let sa = run_cycle_round(&da, &cfg, &RunOptions::default()).unwrap();
    let sb = run_cycle_round(&db, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(da.load_manifest(0).unwrap(), db.load_manifest(0).unwrap());
    assert!(sa.artifacts.contains_key("projection.csv") && sa.artifacts.contains_key("models/cbow.bin"));
}

#[test]
fn interrupted_round_leaves_previous_round_intact() {
    let (_tmp, dir, _) = setup(&TopicCorpusSpec { docs: 400, ..TopicCorpusSpec::default() }, 0.05);
    let cfg = config();
    run_cycle_round(&dir, &cfg, &RunOptions::default()).unwrap();
    let before = dir.load_manifest(0).unwrap();
    let hook = |stage: Stage, _: &std::path::Path| {
        if stage == Stage::Clustered {
            panic!("simulated crash");
        }
    };
    let crashed = catch_unwind(AssertUnwindSafe(|| run_cycle_round(&dir, &cfg, &RunOptions { on_stage: Some(&hook) })));
    assert!(crashed.is_err());
    assert!(dir.path("rounds/round-0001.partial").exists());
    assert_eq!(dir.rounds().unwrap(), vec![0]);
    assert_eq!(dir.verify_round(0).unwrap(), before);
    build_report(&dir).unwrap();

    let next = run_cycle_round(&dir, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(next.round, 1);
    assert!(!dir.path("rounds/round-0001.partial").exists());
}

#[test]
fn queue_never_offers_manually_labeled_posts() {
    let (_tmp, dir, syn) = setup(&TopicCorpusSpec { docs: 400, mixed: true, ..TopicCorpusSpec::default() }, 0.05);
    let state = run_cycle_round(&dir, &config(), &RunOptions::default()).unwrap();
    let mut log = dir.open_labels().unwrap();
    let manual = log.effective_labels(Basis::PostOnly, &semilabel_core::store::LabelFilter::manual_only());
    assert!(state.queue.iter().all(|q| !manual.contains_key(&q.post_id)));

    let corpus = dir.load_corpus().unwrap();
    let first = state.queue[0].post_id.clone();
    log.record(&corpus, LabelRecord::new(&first, "rater-a", syn.truth[&first], Basis::PostOnly, Source::Manual, 1, "2020-01-02T00:00:00Z")).unwrap();
    let view = queue_view(&state, &dir.label_view().unwrap(), Basis::PostOnly, 100);
    assert_eq!(view.len(), state.queue.len() - 1);
    assert!(view.iter().all(|q| q.post_id != first));
    // a label on the other basis does not remove the post
    let second = view[0].post_id.clone();
    log.record(&corpus, LabelRecord::new(&second, "rater-a", LabelValue::Yes, Basis::PostPlusProfile, Source::Manual, 1, "2020-01-02T00:00:00Z")).unwrap();
    assert!(queue_view(&state, &dir.label_view().unwrap(), Basis::PostOnly, 100).iter().any(|q| q.post_id == second));
}

#[test]
fn mixed_corpus_reports_not_applicable() {
    let (_tmp, dir, _) = setup(&TopicCorpusSpec { mixed: true, ..TopicCorpusSpec::default() }, 0.05);
    let cfg = CycleConfig { ks: vec![6, 3], ..config() };
    run_cycle_round(&dir, &cfg, &RunOptions::default()).unwrap();
    let report = build_report(&dir).unwrap();
    assert_eq!(report.rows.len(), 2);
    for row in &report.rows {
        assert_eq!(row.newly_labeled, 0);
        assert!(row.cv_accuracy.is_none());
    }
    let text = render_report(&report);
    assert_eq!(text.lines().filter(|l| l.contains("N/A")).count(), 2);
}

#[test]
fn report_matches_artifacts_and_text() {
    let (_tmp, dir, _) = setup(&TopicCorpusSpec { docs: 800, ..TopicCorpusSpec::default() }, 0.05);
    let cfg = CycleConfig { ks: vec![6, 4], ..config() };
    run_cycle_round(&dir, &cfg, &RunOptions::default()).unwrap();
    let report = build_report(&dir).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows[0].primary && !report.rows[1].primary);

    // recompute from the stored assignment and manual snapshot
    let manual: Vec<LabelRecord> = read_jsonl(&dir.round_dir(0).join("manual.jsonl")).unwrap();
    for row in &report.rows {
        let pair = semilabel_core::pipeline::PairKey { model: row.model, k: row.k };
        let a: Assignment = dir.load_assignment(0, pair).unwrap();
        let m: BTreeMap<String, LabelValue> = manual.iter().map(|r| (r.post_id.clone(), r.value)).collect();
        let p = propagate(&a, &m, &cfg.policy).unwrap();
        assert_eq!(p.report.newly_labeled, row.newly_labeled);
        assert_eq!(row.manual_labels, m.len());
    }
    assert_eq!(report.corpus_size, 800);
    assert_eq!(report.manual_labeled + report.propagated_labeled + report.residual_unlabeled, 800);

    let json: serde_json::Value = serde_json::to_value(&report).unwrap();
    let text = render_report(&report);
    for (row, line) in json["rows"].as_array().unwrap().iter().zip(text.lines().skip(1)) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells[0], row["round"].to_string());
        assert_eq!(cells[1].trim_end_matches('*'), row["model"].as_str().unwrap());
        assert_eq!(cells[2], row["k"].to_string());
        let acc = row["cv_accuracy"].as_f64().map_or("N/A".to_string(), |v| format!("{:.1}%", v * 100.0));
        assert_eq!(cells[3], acc);
        assert_eq!(cells[6], row["manual_labels"].to_string());
        assert_eq!(cells[7], row["newly_labeled"].to_string());
        assert_eq!(cells[8], row["decided_clusters"].to_string());
    }
}

#[test]
fn reuse_model_keeps_previous_embeddings() {
    let (_tmp, dir, _) = setup(&TopicCorpusSpec { docs: 400, ..TopicCorpusSpec::default() }, 0.05);
    let s0 = run_cycle_round(&dir, &config(), &RunOptions::default()).unwrap();
    let s1 = run_cycle_round(&dir, &CycleConfig { reuse_model: true, seed: 99, ..config() }, &RunOptions::default()).unwrap();
    assert_eq!(s0.artifacts["models/cbow.bin"], s1.artifacts["models/cbow.bin"]);
    assert_eq!(build_report(&dir).unwrap().rows.len(), 2);
}

#[test]
fn report_needs_a_round() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(build_report(&StateDir::new(tmp.path())).is_err());
}
