use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelKind, TrainingConfig, VectorizeError, Vocabulary};
use crate::linalg::cosine;
use crate::rng;

const MAGIC: &[u8; 8] = b"SEMILBL\0";
const VERSION: u32 = 1;

/// Stream tags for per-row initialization.
pub(crate) const WORD_KEY: u64 = 1 << 60;
pub(crate) const BUCKET_KEY: u64 = 2 << 60;
pub(crate) const DOC_KEY: u64 = 3 << 60;
pub(crate) const INFER_KEY: u64 = 4 << 60;

/// Deterministic `uniform(-1/dim, 1/dim)` row for a parameter key. A bucket
/// that training never touched therefore reads back exactly as initialized,
/// without storing all buckets.
pub(crate) fn init_row(seed: u64, key: u64, dim: usize) -> Vec<f32> {
    let mut r = rng::stream(seed, key);
    let bound = 1.0 / dim as f32;
    (0..dim).map(|_| r.random_range(-bound..bound)).collect()
}

/// A trained embedding model. Immutable once built and safe to share.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub(crate) kind: ModelKind,
    pub(crate) config: TrainingConfig,
    pub(crate) vocab: Vocabulary,
    /// `(V + U) × dim`: word rows first, then the U bucket rows listed in `bucket_ids`.
    pub(crate) input: Vec<f32>,
    pub(crate) bucket_ids: Vec<u32>,
    pub(crate) bucket_pos: HashMap<u32, usize>,
    /// `V × dim`
    pub(crate) output: Vec<f32>,
    pub(crate) doc_ids: Vec<String>,
    /// `D × dim`, PV-DM only.
    pub(crate) docs: Vec<f32>,
    pub(crate) losses: Vec<f64>,
}

/// A document vector and whether the document had no tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEmbedding {
    pub vector: Vec<f32>,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub token: String,
    pub cosine: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    config: TrainingConfig,
    vocab: Vocabulary,
    bucket_ids: Vec<u32>,
    doc_ids: Vec<String>,
    losses: Vec<f64>,
}

enum Unit {
    Row(usize),
    Lazy(u32),
}

impl EmbeddingModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Mean training loss per prediction, one entry per epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    /// Number of hashed n-gram buckets that carry trained rows.
    pub fn trained_buckets(&self) -> usize {
        self.bucket_ids.len()
    }

    pub fn input_row(&self, row: usize) -> &[f32] {
        let d = self.dim();
        &self.input[row * d..(row + 1) * d]
    }

    pub fn output_row(&self, word: u32) -> &[f32] {
        let d = self.dim();
        &self.output[word as usize * d..(word as usize + 1) * d]
    }

    /// Stored PV-DM vector of the i-th training document.
    pub fn doc_vector(&self, i: usize) -> Option<&[f32]> {
        let d = self.dim();
        self.docs.get(i * d..(i + 1) * d)
    }

    pub fn doc_vector_for(&self, doc_id: &str) -> Option<&[f32]> {
        let i = self.doc_ids.iter().position(|d| d == doc_id)?;
        self.doc_vector(i)
    }

    fn uses_subwords(&self) -> bool {
        self.kind != ModelKind::Pvdm && self.config.subwords.buckets > 0
    }

    fn units(&self, token: &str) -> Vec<Unit> {
        let mut units = Vec::new();
        if let Some(id) = self.vocab.id(token) {
            units.push(Unit::Row(id as usize));
        }
        if self.uses_subwords() {
            let v = self.vocab.len();
            for b in self.config.subwords.buckets_for(token) {
                units.push(match self.bucket_pos.get(&b) {
                    Some(&p) => Unit::Row(v + p),
                    None => Unit::Lazy(b),
                });
            }
        }
        units
    }

    /// Mean of the token's own row (if in vocabulary) and its n-gram rows.
    pub fn token_vector(&self, token: &str) -> Result<Vec<f32>, VectorizeError> {
        let units = self.units(token);
        if units.is_empty() {
            return Err(VectorizeError::Unrepresentable(token.to_string()));
        }
        let d = self.dim();
        let mut v = vec![0.0f32; d];
        for u in &units {
            match *u {
                Unit::Row(r) => add(&mut v, self.input_row(r)),
                Unit::Lazy(b) => add(&mut v, &init_row(self.config.seed, BUCKET_KEY | b as u64, d)),
            }
        }
        let inv = 1.0 / units.len() as f32;
        v.iter_mut().for_each(|x| *x *= inv);
        Ok(v)
    }

    /// Arithmetic mean of the token vectors. An empty document yields the zero
    /// vector with `empty` set. PV-DM models use stored or inferred vectors instead.
    pub fn embed_document<S: AsRef<str>>(&self, tokens: &[S]) -> Result<DocEmbedding, VectorizeError> {
        if self.kind == ModelKind::Pvdm {
            return Err(VectorizeError::WrongKind {
                expected: "cbow or skipgram",
                got: self.kind,
            });
        }
        let d = self.dim();
        let mut v = vec![0.0f32; d];
        if tokens.is_empty() {
            return Ok(DocEmbedding { vector: v, empty: true });
        }
        let mut cache: HashMap<&str, Vec<f32>> = HashMap::new();
        for t in tokens {
            let t = t.as_ref();
            if !cache.contains_key(t) {
                cache.insert(t, self.token_vector(t)?);
            }
            add(&mut v, &cache[t]);
        }
        let inv = 1.0 / tokens.len() as f32;
        v.iter_mut().for_each(|x| *x *= inv);
        Ok(DocEmbedding { vector: v, empty: false })
    }

    /// Top-`n` vocabulary tokens by cosine similarity to `token`, excluding `token` itself.
    pub fn nearest_neighbors(&self, token: &str, n: usize) -> Result<Vec<Neighbor>, VectorizeError> {
        let query = self.token_vector(token)?;
        let q: Vec<f64> = query.iter().map(|&x| x as f64).collect();
        let mut scored: Vec<Neighbor> = Vec::with_capacity(self.vocab.len());
        for cand in self.vocab.tokens() {
            if cand == token {
                continue;
            }
            let v: Vec<f64> = self.token_vector(cand)?.iter().map(|&x| x as f64).collect();
            scored.push(Neighbor {
                token: cand.clone(),
                cosine: cosine(&q, &v),
            });
        }
        if n > scored.len() {
            return Err(VectorizeError::TooManyNeighbors {
                requested: n,
                available: scored.len(),
            });
        }
        scored.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.token.cmp(&b.token)));
        scored.truncate(n);
        Ok(scored)
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).chain(&self.docs).all(|x| x.is_finite())
    }

    /// Versioned binary file: magic, version, JSON header, then little-endian
    /// f32 input, output and document matrices.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            bucket_ids: self.bucket_ids.clone(),
            doc_ids: self.doc_ids.clone(),
            losses: self.losses.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(24 + json.len() + 4 * (self.input.len() + self.output.len() + self.docs.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for m in [&self.input, &self.output, &self.docs] {
            for x in m.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, VectorizeError> {
        let fmt = |m: &str| VectorizeError::Format(m.to_string());
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| fmt("truncated"))?;
        if &magic != MAGIC {
            return Err(fmt("not a semilabel model file"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(|_| fmt("truncated"))?;
        let version = u32::from_le_bytes(b4);
        if version != VERSION {
            return Err(VectorizeError::Format(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(|_| fmt("truncated"))?;
        let hlen = u64::from_le_bytes(b8) as usize;
        if r.len() < hlen {
            return Err(fmt("truncated header"));
        }
        let header: Header = serde_json::from_slice(&r[..hlen]).map_err(|e| VectorizeError::Format(e.to_string()))?;
        r = &r[hlen..];
        let mut vocab = header.vocab;
        vocab.reindex()?;
        let d = header.config.dim;
        let v = vocab.len();
        let n_in = (v + header.bucket_ids.len()) * d;
        let n_out = v * d;
        let n_docs = if header.kind == ModelKind::Pvdm { header.doc_ids.len() * d } else { 0 };
        if r.len() != 4 * (n_in + n_out + n_docs) {
            return Err(fmt("matrix section has the wrong length"));
        }
        let mut floats = r.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let input: Vec<f32> = floats.by_ref().take(n_in).collect();
        let output: Vec<f32> = floats.by_ref().take(n_out).collect();
        let docs: Vec<f32> = floats.collect();
        let bucket_pos = header.bucket_ids.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        Ok(Self {
            kind: header.kind,
            config: header.config,
            vocab,
            input,
            bucket_ids: header.bucket_ids,
            bucket_pos,
            output,
            doc_ids: header.doc_ids,
            docs,
            losses: header.losses,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), VectorizeError> {
        crate::store::atomic_write(path, &self.to_bytes()).map_err(|e| VectorizeError::Format(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, VectorizeError> {
        let bytes = std::fs::read(path).map_err(|e| VectorizeError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}

fn add(acc: &mut [f32], x: &[f32]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}
