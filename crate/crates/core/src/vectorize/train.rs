//! SGD trainers over the shared negative-sampling kernel.
//!
//! Update rule: for a hidden vector `h` that is the mean of several input
//! rows, every contributing row is stepped by the full `-lr·dL/dh`. The mean
//! therefore moves by exactly `-lr·dL/dh`, independent of how many rows feed
//! it (the exact per-row gradient would be `dL/dh / n`, i.e. a step scaled by
//! `n`). This is the usual subword-embedding convention.
//!
//! Parallel mode shards documents across workers that write the shared
//! matrices without locks. Races only lose or blend individual updates.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernel::{self, Rows};
use super::model::{init_row, EmbeddingModel, BUCKET_KEY, DOC_KEY, INFER_KEY, WORD_KEY};
use super::{build_vocab, fnv1a, ModelKind, TrainingConfig, VectorizeError};
use crate::clean::CleanedDocument;
use crate::rng;

/// Anything with an id and a token sequence.
pub trait Document {
    fn doc_id(&self) -> &str;
    fn tokens(&self) -> &[String];
}

impl Document for CleanedDocument {
    fn doc_id(&self) -> &str {
        &self.post_id
    }
    fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl Document for (String, Vec<String>) {
    fn doc_id(&self) -> &str {
        &self.0
    }
    fn tokens(&self) -> &[String] {
        &self.1
    }
}

impl Document for Vec<String> {
    fn doc_id(&self) -> &str {
        ""
    }
    fn tokens(&self) -> &[String] {
        self
    }
}

/// A matrix written concurrently by training workers.
struct Shared {
    ptr: *mut f32,
    len: usize,
    dim: usize,
}

// SAFETY: workers write disjoint-or-racing f32 cells through raw pointers; a
// torn or lost update is the accepted cost of lock-free training. No thread
// holds a row slice across another thread's synchronization point, and the
// backing Vec outlives every worker (scoped threads).
unsafe impl Sync for Shared {}
unsafe impl Send for Shared {}

impl Shared {
    fn new(v: &mut [f32], dim: usize) -> Self {
        Self {
            ptr: v.as_mut_ptr(),
            len: v.len(),
            dim,
        }
    }

    #[allow(clippy::mut_from_ref)]
    fn row(&self, r: usize) -> &mut [f32] {
        assert!((r + 1) * self.dim <= self.len, "row {r} out of range");
        // SAFETY: bounds checked above; aliasing discussed on the Sync impl.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.add(r * self.dim), self.dim) }
    }
}

struct SharedRows<'a>(&'a Shared);

impl Rows<f32> for SharedRows<'_> {
    fn row_mut(&mut self, i: usize) -> &mut [f32] {
        self.0.row(i)
    }
}

/// Unigram^0.75 noise distribution.
pub(crate) struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    pub(crate) fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

fn draw_examples(target: usize, negative: usize, noise: &NoiseTable, rng: &mut ChaCha8Rng, out: &mut Vec<(usize, bool)>) {
    out.clear();
    out.push((target, true));
    if noise.cumulative.len() < 2 {
        return;
    }
    while out.len() <= negative {
        let n = noise.sample(rng);
        if n != target {
            out.push((n, false));
        }
    }
}

struct Ctx<'a> {
    kind: ModelKind,
    cfg: &'a TrainingConfig,
    docs: &'a [Vec<u32>],
    /// Input rows feeding each word's vector.
    units: &'a [Vec<usize>],
    input: Shared,
    output: Shared,
    doc_vecs: Shared,
    noise: NoiseTable,
    progress: AtomicU64,
    planned: f64,
}

impl Ctx<'_> {
    fn lr(&self) -> f64 {
        let p = (self.progress.load(Ordering::Relaxed) as f64 / self.planned).min(1.0);
        self.cfg.lr_start - (self.cfg.lr_start - self.cfg.lr_end) * p
    }

    fn mean_into(&self, rows: &[usize], weight: f32, h: &mut [f32]) {
        for &r in rows {
            let row = self.input.row(r);
            for (a, b) in h.iter_mut().zip(row.iter()) {
                *a += weight * b;
            }
        }
    }

    fn step_rows(&self, rows: &[usize], lr: f32, grad: &[f32]) {
        for &r in rows {
            let row = self.input.row(r);
            for (a, g) in row.iter_mut().zip(grad) {
                *a -= lr * g;
            }
        }
    }

    /// Processes a shard of documents; returns (loss sum, examples).
    fn run_shard(&self, shard: &[usize], rng: &mut ChaCha8Rng) -> (f64, u64) {
        let dim = self.cfg.dim;
        let mut h = vec![0.0f32; dim];
        let mut grad = vec![0.0f32; dim];
        let mut examples = Vec::with_capacity(self.cfg.negative + 1);
        let mut ctx_words: Vec<u32> = Vec::new();
        let mut loss_sum = 0.0f64;
        let mut n = 0u64;
        for &d in shard {
            let doc = &self.docs[d];
            for t in 0..doc.len() {
                let lr = self.lr() as f32;
                self.progress.fetch_add(1, Ordering::Relaxed);
                let b = rng.random_range(1..=self.cfg.window);
                let lo = t.saturating_sub(b);
                let hi = (t + b + 1).min(doc.len());
                ctx_words.clear();
                ctx_words.extend((lo..hi).filter(|&j| j != t).map(|j| doc[j]));
                let center = doc[t] as usize;
                match self.kind {
                    ModelKind::Cbow => {
                        if ctx_words.is_empty() {
                            continue;
                        }
                        h.fill(0.0);
                        let cw = 1.0 / ctx_words.len() as f32;
                        for &c in &ctx_words {
                            let units = &self.units[c as usize];
                            self.mean_into(units, cw / units.len() as f32, &mut h);
                        }
                        grad.fill(0.0);
                        draw_examples(center, self.cfg.negative, &self.noise, rng, &mut examples);
                        loss_sum += kernel::ns_example(&h, &examples, &mut SharedRows(&self.output), lr, &mut grad) as f64;
                        n += 1;
                        for &c in &ctx_words {
                            self.step_rows(&self.units[c as usize], lr, &grad);
                        }
                    }
                    ModelKind::Skipgram => {
                        let units = &self.units[center];
                        for &c in &ctx_words {
                            h.fill(0.0);
                            self.mean_into(units, 1.0 / units.len() as f32, &mut h);
                            grad.fill(0.0);
                            draw_examples(c as usize, self.cfg.negative, &self.noise, rng, &mut examples);
                            loss_sum += kernel::ns_example(&h, &examples, &mut SharedRows(&self.output), lr, &mut grad) as f64;
                            n += 1;
                            self.step_rows(units, lr, &grad);
                        }
                    }
                    ModelKind::Pvdm => {
                        let w = 1.0 / (ctx_words.len() + 1) as f32;
                        h.copy_from_slice(self.doc_vecs.row(d));
                        h.iter_mut().for_each(|x| *x *= w);
                        for &c in &ctx_words {
                            self.mean_into(&[c as usize], w, &mut h);
                        }
                        grad.fill(0.0);
                        draw_examples(center, self.cfg.negative, &self.noise, rng, &mut examples);
                        loss_sum += kernel::ns_example(&h, &examples, &mut SharedRows(&self.output), lr, &mut grad) as f64;
                        n += 1;
                        let dv = self.doc_vecs.row(d);
                        for (a, g) in dv.iter_mut().zip(&grad) {
                            *a -= lr * g;
                        }
                        for &c in &ctx_words {
                            self.step_rows(&[c as usize], lr, &grad);
                        }
                    }
                }
            }
        }
        (loss_sum, n)
    }
}

/// Trains a model of the given kind on tokenized documents.
///
/// Tokens below `min_count` are dropped from the training stream (they stay
/// reachable through subwords at query time). Documents with no remaining
/// tokens still get a PV-DM vector, left at its initial value.
pub fn train<D: Document>(docs: &[D], config: &TrainingConfig, kind: ModelKind) -> Result<EmbeddingModel, VectorizeError> {
    config.validate()?;
    let token_lists: Vec<&[String]> = docs.iter().map(|d| d.tokens()).collect();
    let vocab = build_vocab(&token_lists, config.min_count)?;
    if vocab.is_empty() {
        return Err(VectorizeError::EmptyVocabulary(config.min_count));
    }
    let dim = config.dim;
    let v = vocab.len();
    let encoded: Vec<Vec<u32>> = token_lists
        .iter()
        .map(|ts| ts.iter().filter_map(|t| vocab.id(t)).collect())
        .collect();

    let use_subwords = kind != ModelKind::Pvdm && config.subwords.buckets > 0;
    let word_buckets: Vec<Vec<u32>> = if use_subwords {
        vocab.tokens().iter().map(|t| config.subwords.buckets_for(t)).collect()
    } else {
        vec![Vec::new(); v]
    };
    let bucket_ids: Vec<u32> = word_buckets
        .iter()
        .flatten()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let bucket_pos: HashMap<u32, usize> = bucket_ids.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let units: Vec<Vec<usize>> = word_buckets
        .iter()
        .enumerate()
        .map(|(w, bs)| std::iter::once(w).chain(bs.iter().map(|b| v + bucket_pos[b])).collect())
        .collect();

    let mut input = Vec::with_capacity((v + bucket_ids.len()) * dim);
    for w in 0..v {
        input.extend(init_row(config.seed, WORD_KEY | w as u64, dim));
    }
    for &b in &bucket_ids {
        input.extend(init_row(config.seed, BUCKET_KEY | b as u64, dim));
    }
    let mut output = vec![0.0f32; v * dim];
    let (doc_ids, mut doc_vecs) = if kind == ModelKind::Pvdm {
        let ids: Vec<String> = docs.iter().map(|d| d.doc_id().to_string()).collect();
        let mut m = Vec::with_capacity(ids.len() * dim);
        for i in 0..ids.len() {
            m.extend(init_row(config.seed, DOC_KEY | i as u64, dim));
        }
        (ids, m)
    } else {
        (Vec::new(), Vec::new())
    };

    let train_tokens: u64 = encoded.iter().map(|d| d.len() as u64).sum();
    let workers = config.workers().max(1);
    let ctx = Ctx {
        kind,
        cfg: config,
        docs: &encoded,
        units: &units,
        input: Shared::new(&mut input, dim),
        output: Shared::new(&mut output, dim),
        doc_vecs: Shared::new(&mut doc_vecs, dim),
        noise: NoiseTable::new(vocab.counts()),
        progress: AtomicU64::new(0),
        planned: (train_tokens.max(1) * config.epochs as u64) as f64,
    };
    let mut losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng::stream(config.seed, (epoch as u64) << 32));
        let chunk = order.len().div_ceil(workers).max(1);
        let results: Vec<(f64, u64)> = std::thread::scope(|s| {
            let handles: Vec<_> = order
                .chunks(chunk)
                .enumerate()
                .map(|(w, shard)| {
                    let ctx = &ctx;
                    s.spawn(move || {
                        let mut r = rng::stream(config.seed, ((epoch as u64) << 32) | (w as u64 + 1));
                        ctx.run_shard(shard, &mut r)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training worker panicked")).collect()
        });
        let (sum, n) = results.iter().fold((0.0, 0u64), |a, b| (a.0 + b.0, a.1 + b.1));
        let mean = if n == 0 { 0.0 } else { sum / n as f64 };
        if !mean.is_finite() {
            return Err(VectorizeError::NonFinite {
                epoch,
                lr: ctx.lr(),
                loss: mean,
            });
        }
        log::debug!("{kind} epoch {epoch}: loss {mean:.5} lr {:.5}", ctx.lr());
        losses.push(mean);
    }
    drop(ctx);

    let model = EmbeddingModel {
        kind,
        config: config.clone(),
        vocab,
        input,
        bucket_ids,
        bucket_pos,
        output,
        doc_ids,
        docs: doc_vecs,
        losses,
    };
    if !model.is_finite() {
        return Err(VectorizeError::NonFinite {
            epoch: config.epochs,
            lr: config.lr_end,
            loss: f64::NAN,
        });
    }
    Ok(model)
}

impl EmbeddingModel {
    /// Fits a fresh document vector for `tokens` with word and output rows frozen.
    ///
    /// The starting vector and the sampling stream are keyed by the token
    /// sequence, so identical documents infer identical vectors.
    pub fn infer_doc_vector<S: AsRef<str>>(&self, tokens: &[S], epochs: usize) -> Result<Vec<f32>, VectorizeError> {
        if self.kind != ModelKind::Pvdm {
            return Err(VectorizeError::WrongKind {
                expected: "pvdm",
                got: self.kind,
            });
        }
        if tokens.is_empty() {
            return Err(VectorizeError::EmptyDocument);
        }
        let ids: Vec<u32> = tokens.iter().filter_map(|t| self.vocab.id(t.as_ref())).collect();
        if ids.is_empty() {
            return Err(VectorizeError::NoKnownTokens);
        }
        let joined: Vec<&str> = tokens.iter().map(|t| t.as_ref()).collect();
        let key = INFER_KEY | fnv1a(joined.join(" ").as_bytes()) as u64;
        let cfg = &self.config;
        let dim = cfg.dim;
        let mut d = init_row(cfg.seed, key, dim);
        let mut rng = rng::stream(cfg.seed, key ^ 1);
        let noise = NoiseTable::new(self.vocab.counts());
        let mut h = vec![0.0f32; dim];
        let mut grad = vec![0.0f32; dim];
        let mut examples = Vec::new();
        let planned = (epochs.max(1) * ids.len()) as f64;
        let mut step = 0usize;
        for _ in 0..epochs.max(1) {
            for t in 0..ids.len() {
                let lr = (cfg.lr_start - (cfg.lr_start - cfg.lr_end) * (step as f64 / planned)) as f32;
                step += 1;
                let b = rng.random_range(1..=cfg.window);
                let lo = t.saturating_sub(b);
                let hi = (t + b + 1).min(ids.len());
                let ctx: Vec<u32> = (lo..hi).filter(|&j| j != t).map(|j| ids[j]).collect();
                let w = 1.0 / (ctx.len() + 1) as f32;
                for i in 0..dim {
                    h[i] = w * d[i];
                }
                for &c in &ctx {
                    for (hi, x) in h.iter_mut().zip(self.input_row(c as usize)) {
                        *hi += w * x;
                    }
                }
                grad.fill(0.0);
                draw_examples(ids[t] as usize, cfg.negative, &noise, &mut rng, &mut examples);
                kernel::ns_example_frozen(&h, &examples, &self.output, dim, &mut grad);
                for (x, g) in d.iter_mut().zip(&grad) {
                    *x -= lr * g;
                }
            }
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<String>> {
        let s = ["the cat sat on the mat", "the dog sat on the rug", "a cat and a dog"];
        (0..40)
            .map(|i| s[i % 3].split(' ').map(str::to_string).collect())
            .collect()
    }

    fn small(kind: ModelKind) -> TrainingConfig {
        TrainingConfig {
            dim: 16,
            epochs: 3,
            min_count: 1,
            subwords: crate::vectorize::SubwordIndex { buckets: 1024, ..Default::default() },
            ..TrainingConfig::for_kind(kind)
        }
    }

    #[test]
    fn deterministic_mode_is_bit_identical() {
        for kind in [ModelKind::Cbow, ModelKind::Skipgram, ModelKind::Pvdm] {
            let a = train(&corpus(), &small(kind), kind).unwrap();
            let b = train(&corpus(), &small(kind), kind).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes(), "{kind}");
        }
    }

    #[test]
    fn parallel_mode_trains_finite_vectors() {
        let cfg = TrainingConfig {
            deterministic: false,
            threads: 4,
            ..small(ModelKind::Cbow)
        };
        let m = train(&corpus(), &cfg, ModelKind::Cbow).unwrap();
        assert!(m.is_finite());
    }

    #[test]
    fn model_file_round_trip() {
        let m = train(&corpus(), &small(ModelKind::Pvdm), ModelKind::Pvdm).unwrap();
        let back = EmbeddingModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), m.to_bytes());
        assert!(EmbeddingModel::from_bytes(b"nope").is_err());
    }

    #[test]
    fn pvdm_rejects_embed_and_infer_empty() {
        let m = train(&corpus(), &small(ModelKind::Pvdm), ModelKind::Pvdm).unwrap();
        assert!(m.embed_document(&["cat"]).is_err());
        assert!(matches!(m.infer_doc_vector::<&str>(&[], 5), Err(VectorizeError::EmptyDocument)));
        assert!(matches!(m.infer_doc_vector(&["zzz"], 5), Err(VectorizeError::NoKnownTokens)));
        assert_eq!(m.infer_doc_vector(&["cat", "sat"], 5).unwrap(), m.infer_doc_vector(&["cat", "sat"], 5).unwrap());
    }

    #[test]
    fn embed_document_basics() {
        let m = train(&corpus(), &small(ModelKind::Cbow), ModelKind::Cbow).unwrap();
        let one = m.embed_document(&["cat"]).unwrap();
        assert_eq!(one.vector, m.token_vector("cat").unwrap());
        let e = m.embed_document::<&str>(&[]).unwrap();
        assert!(e.empty && e.vector.iter().all(|&x| x == 0.0));
        let ab = m.embed_document(&["cat", "dog"]).unwrap().vector;
        let ba = m.embed_document(&["dog", "cat"]).unwrap().vector;
        assert_eq!(ab, ba);
        assert!(m.token_vector("catz").unwrap().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn neighbors_exclude_query_and_bound_n() {
        let m = train(&corpus(), &small(ModelKind::Skipgram), ModelKind::Skipgram).unwrap();
        let v = m.vocab().len();
        let nn = m.nearest_neighbors("cat", v - 1).unwrap();
        assert!(nn.iter().all(|n| n.token != "cat"));
        assert!(matches!(m.nearest_neighbors("cat", v), Err(VectorizeError::TooManyNeighbors { .. })));
    }

    #[test]
    fn noise_table_never_returns_out_of_range() {
        let t = NoiseTable::new(&[5, 1, 0, 3]);
        let mut r = rng::stream(1, 2);
        for _ in 0..1000 {
            let s = t.sample(&mut r);
            assert!(s < 4 && s != 2);
        }
    }
}
