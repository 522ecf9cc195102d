//! Deterministic synthetic data for tests, demos and benchmarks.
//!
//! - [`topic_corpus`]: social-media-like posts drawn from two disjoint topic
//!   lexicons plus a shared control pool, with known ground-truth labels.
//! - [`same_context_corpus`]: token streams where designated word pairs are
//!   interchangeable, for embedding sanity checks.
//! - [`gaussian_blobs`] and [`uniform_points`]: point clouds for clustering
//!   and projection.

use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::rng;
use crate::store::{Basis, Cohort, LabelRecord, LabelValue, Post, Source};

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Generator for [`pseudo_words`].
pub fn word_rng(seed: u64) -> ChaCha8Rng {
    rng::stream(seed, 0x3017)
}

/// `n` distinct pronounceable lowercase words, none in `taken`.
pub fn pseudo_words(n: usize, taken: &mut HashSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*CONSONANTS.choose(rng).expect("non-empty") as char);
            w.push(*VOWELS.choose(rng).expect("non-empty") as char);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TopicCorpusSpec {
    pub docs: usize,
    pub topic_words: usize,
    pub control_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token comes from the post's topic lexicon rather than the control pool.
    pub topic_share: f64,
    /// Every post mixes both lexicons and its label is a coin flip.
    pub mixed: bool,
    pub seed: u64,
}

impl Default for TopicCorpusSpec {
    fn default() -> Self {
        Self {
            docs: 2000,
            topic_words: 60,
            control_words: 80,
            min_len: 8,
            max_len: 16,
            topic_share: 0.7,
            mixed: false,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub posts: Vec<Post>,
    /// Ground-truth value per post: topic A is `yes`, topic B is `no`.
    pub truth: BTreeMap<String, LabelValue>,
    pub topic_a: Vec<String>,
    pub topic_b: Vec<String>,
    pub control: Vec<String>,
}

impl SyntheticCorpus {
    /// Manual labels for a class-stratified sample of `fraction` of the posts.
    ///
    /// Each truth class contributes `round(fraction * class size)` posts.
    pub fn stratified_labels(&self, fraction: f64, seed: u64, rater: &str, basis: Basis) -> Vec<LabelRecord> {
        let mut by_class: BTreeMap<LabelValue, Vec<&String>> = BTreeMap::new();
        for (id, v) in &self.truth {
            by_class.entry(*v).or_default().push(id);
        }
        let mut r = rng::stream(seed, 0x5747);
        let mut out = Vec::new();
        for (value, mut ids) in by_class {
            ids.shuffle(&mut r);
            let take = (fraction * ids.len() as f64).round() as usize;
            let mut picked: Vec<&String> = ids.into_iter().take(take).collect();
            picked.sort();
            out.extend(picked.into_iter().map(|id| {
                LabelRecord::new(id.clone(), rater, value, basis, Source::Manual, 0, "2020-01-01T00:00:00Z")
            }));
        }
        out.sort_by(|a, b| a.post_id.cmp(&b.post_id));
        out
    }
}

/// Posts with light social-media noise: mentions, hashtags, capitals and
/// punctuation that the cleaner removes again.
pub fn topic_corpus(spec: &TopicCorpusSpec) -> SyntheticCorpus {
    let mut r = rng::stream(spec.seed, 0x7091);
    let mut taken = HashSet::new();
    let topic_a = pseudo_words(spec.topic_words, &mut taken, &mut r);
    let topic_b = pseudo_words(spec.topic_words, &mut taken, &mut r);
    let control = pseudo_words(spec.control_words, &mut taken, &mut r);
    let mut posts = Vec::with_capacity(spec.docs);
    let mut truth = BTreeMap::new();
    for i in 0..spec.docs {
        let is_a = if spec.mixed { r.random_bool(0.5) } else { i % 2 == 0 };
        let len = r.random_range(spec.min_len..=spec.max_len);
        let mut words = Vec::with_capacity(len + 2);
        let mut hashtags = Vec::new();
        if r.random_bool(0.3) {
            words.push(format!("@user{}", r.random_range(0..500)));
        }
        for _ in 0..len {
            let lexicon = if r.random_bool(spec.topic_share) {
                let from_a = if spec.mixed { r.random_bool(0.5) } else { is_a };
                if from_a {
                    &topic_a
                } else {
                    &topic_b
                }
            } else {
                &control
            };
            let w = lexicon.choose(&mut r).expect("non-empty lexicon");
            let mut token = match r.random_range(0..20) {
                0 => {
                    hashtags.push(w.clone());
                    format!("#{w}")
                }
                1 => capitalize(w),
                2 => format!("{w}!"),
                _ => w.clone(),
            };
            if r.random_range(0..40) == 0 {
                token.push(',');
            }
            words.push(token);
        }
        hashtags.sort();
        hashtags.dedup();
        let id = format!("p{i:05}");
        truth.insert(id.clone(), if is_a { LabelValue::Yes } else { LabelValue::No });
        posts.push(Post {
            post_id: id,
            raw_text: words.join(" "),
            cohort: if is_a { Cohort::TopicFlagged } else { Cohort::Control },
            source_hashtags: hashtags,
            created_at: None,
        });
    }
    SyntheticCorpus {
        posts,
        truth,
        topic_a,
        topic_b,
        control,
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Debug, Clone)]
pub struct SameContextCorpus {
    pub docs: Vec<Vec<String>>,
    /// Word pairs that always occur in identical contexts.
    pub pairs: Vec<(String, String)>,
    pub vocab_size: usize,
}

/// `groups` topics of `context_words` words each plus one interchangeable
/// pair per topic. Every document stays within one topic; each slot for the
/// pair is filled by either member with equal probability.
pub fn same_context_corpus(groups: usize, context_words: usize, docs: usize, seed: u64) -> SameContextCorpus {
    let mut r = rng::stream(seed, 0xC0E7);
    let mut taken = HashSet::new();
    let mut lexicons = Vec::with_capacity(groups);
    let mut pairs = Vec::with_capacity(groups);
    for _ in 0..groups {
        lexicons.push(pseudo_words(context_words, &mut taken, &mut r));
        let p = pseudo_words(2, &mut taken, &mut r);
        pairs.push((p[0].clone(), p[1].clone()));
    }
    let out = (0..docs)
        .map(|_| {
            let g = r.random_range(0..groups);
            let len = r.random_range(8..=14);
            (0..len)
                .map(|_| {
                    if r.random_bool(0.25) {
                        let (a, b) = &pairs[g];
                        if r.random_bool(0.5) { a.clone() } else { b.clone() }
                    } else {
                        lexicons[g].choose(&mut r).expect("non-empty").clone()
                    }
                })
                .collect()
        })
        .collect();
    SameContextCorpus {
        docs: out,
        pairs,
        vocab_size: groups * (context_words + 2),
    }
}

/// `per` points around each center with isotropic noise `sigma`; returns points and blob ids.
pub fn gaussian_blobs(centers: &[Vec<f64>], per: usize, sigma: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng::stream(seed, 0xB10B);
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let mut points = Vec::with_capacity(centers.len() * per);
    let mut ids = Vec::with_capacity(centers.len() * per);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            points.push(center.iter().map(|&x| x + normal.sample(&mut r)).collect());
            ids.push(c);
        }
    }
    (points, ids)
}

/// `n` points uniform on `[0, 1)^dim`.
pub fn uniform_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, 0x0F1A);
    (0..n).map(|_| (0..dim).map(|_| r.random::<f64>()).collect()).collect()
}
