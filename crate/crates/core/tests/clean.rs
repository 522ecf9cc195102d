use std::path::Path;
use std::time::Instant;

use proptest::prelude::*;
use semilabel_core::clean::{Cleaner, CleaningConfig, Step, DEFAULT_FAKE_PHONE};
use semilabel_core::store::{ingest_corpus, jsonl_bytes, CohortMapping};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn cleaned(raw: &str) -> String {
    Cleaner::default().clean_raw("p", raw).tokens.join(" ")
}

#[test]
fn golden_fixture_is_byte_identical() {
    let start = Instant::now();
    let corpus = ingest_corpus(&fixture("cleaning_posts.jsonl"), &CohortMapping::default()).unwrap();
    assert!(corpus.len() >= 30);
    let expected = std::fs::read(fixture("cleaning_expected.jsonl")).unwrap();
    let cleaner = Cleaner::default();
    for _ in 0..2 {
        let docs = cleaner.clean_all(corpus.posts());
        assert_eq!(jsonl_bytes(&docs), expected);
    }
    assert!(start.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn golden_fixture_exercises_every_step() {
    let corpus = ingest_corpus(&fixture("cleaning_posts.jsonl"), &CohortMapping::default()).unwrap();
    let docs = Cleaner::default().clean_all(corpus.posts());
    for step in Step::DEFAULT_ORDER {
        let hits: usize = docs.iter().map(|d| d.stats.count(step)).sum();
        assert!(hits > 0, "{step} never fired");
    }
}

#[test]
fn literal_examples() {
    assert_eq!(cleaned("awwwwwww"), "aww");
    assert_eq!(cleaned("awwww"), "aww");
    assert_eq!(cleaned("I looooooove it!"), "i loove it");
    assert_eq!(cleaned("\u{1F940}"), "wilted_flower");
    assert_eq!(cleaned("café"), "cafe");
    assert_eq!(cleaned("don't"), "do not");
    assert_eq!(cleaned("don\u{2019}t"), "do not");
    assert_eq!(cleaned("call 212-555-7788"), format!("call {DEFAULT_FAKE_PHONE}"));
    assert_eq!(cleaned("#dog “dog?” dog!"), "dog dog dog");
}

#[test]
fn step_order_is_configurable() {
    // lowercasing after expansion is a no-op; dropping expansion keeps the apostrophe
    let cfg = CleaningConfig {
        steps: Step::DEFAULT_ORDER.into_iter().filter(|s| *s != Step::ExpandContractions).collect(),
        ..CleaningConfig::default()
    };
    assert_eq!(Cleaner::new(cfg).unwrap().clean_raw("p", "Don't").tokens, ["don't"]);
}

fn word() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-zA-Z]{1,9}",
        "[a-z]{1,3}(e|o|w){3,6}",
        "@[a-z_]{1,8}",
        "#[a-z]{1,8}",
        "(don't|I'm|we'll|can't|it\u{2019}s)",
        "[!:;=?.#]{1,3}",
        "(café|naïve|piñata)",
        "\u{1F940}|\u{1F600}",
        "[0-9]{1,3}",
        "\\$[0-9]{1,4}",
    ]
}

fn post() -> impl Strategy<Value = String> {
    proptest::collection::vec((word(), prop_oneof![" ", "\n", "  "]), 0..25).prop_map(|ws| ws.into_iter().map(|(w, s)| w + &s).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cleaning_is_idempotent(raw in post()) {
        let once = cleaned(&raw);
        prop_assert_eq!(cleaned(&once), once);
    }

    #[test]
    fn output_alphabet_is_restricted(raw in post()) {
        let out = cleaned(&raw);
        for c in out.chars() {
            prop_assert!(!"!:;=?.\\#@\n\r".contains(c), "{c:?} in {out:?}");
            prop_assert!(!c.is_uppercase(), "{c:?} in {out:?}");
            prop_assert!(c.is_ascii(), "{c:?} in {out:?}");
        }
    }

    #[test]
    fn no_letter_repeats_three_times(raw in post()) {
        let out: Vec<char> = cleaned(&raw).chars().collect();
        for w in out.windows(3) {
            prop_assert!(!(w[0].is_alphabetic() && w[0] == w[1] && w[1] == w[2]), "{:?}", w);
        }
    }

    #[test]
    fn every_phone_number_becomes_the_fake_one(words in proptest::collection::vec("[a-z]{1,8}", 0..10), phones in proptest::collection::vec("[2-9][0-9]{2}-[0-9]{3}-[0-9]{4}", 0..4)) {
        let raw = words.iter().chain(&phones).cloned().collect::<Vec<_>>().join(" ");
        let out = cleaned(&raw);
        prop_assert_eq!(out.matches(DEFAULT_FAKE_PHONE).count(), phones.len());
        for p in &phones {
            if p != DEFAULT_FAKE_PHONE {
                prop_assert!(!out.contains(p.as_str()));
            }
        }
    }
}
