use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use super::{PairKey, PipelineError};
use crate::clean::CleaningConfig;
use crate::kv::{parse_bool, KeyValues};
use crate::propagate::PropagationPolicy;
use crate::store::{Basis, LabelValue};
use crate::vectorize::{ModelKind, TrainingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionChoice {
    None,
    Pca,
    Tsne,
}

impl FromStr for ProjectionChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "pca" => Ok(Self::Pca),
            "tsne" => Ok(Self::Tsne),
            _ => Err(format!("unknown projection `{s}` (expected none, pca or tsne)")),
        }
    }
}

impl ProjectionChoice {
    fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Pca => "pca",
            Self::Tsne => "tsne",
        }
    }
}

/// Everything a round depends on besides the corpus and the label log.
///
/// Read from the same `key = value` format as the cleaning config; cleaning
/// keys go under a `clean.` prefix (`clean.fake_phone = ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct CycleConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub basis: Basis,
    pub models: Vec<ModelKind>,
    pub ks: Vec<usize>,
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    /// `None` keeps the per-model default.
    pub epochs: Option<usize>,
    pub negative: usize,
    pub lr: f64,
    pub buckets: u32,
    pub restarts: usize,
    pub policy: PropagationPolicy,
    pub folds: usize,
    pub queue_size: usize,
    pub projection: ProjectionChoice,
    pub perplexity: f64,
    pub tsne_iters: usize,
    /// Reuse the previous round's embedding models instead of retraining.
    pub reuse_model: bool,
    pub cleaning: CleaningConfig,
}

impl Default for CycleConfig {
    fn default() -> Self {
        let t = TrainingConfig::for_kind(ModelKind::Cbow);
        Self {
            seed: 1,
            deterministic: true,
            basis: Basis::PostOnly,
            models: vec![ModelKind::Cbow],
            ks: vec![6],
            dim: t.dim,
            window: t.window,
            min_count: t.min_count,
            epochs: None,
            negative: t.negative,
            lr: t.lr_start,
            buckets: t.subwords.buckets,
            restarts: 10,
            policy: PropagationPolicy::default(),
            folds: 10,
            queue_size: 50,
            projection: ProjectionChoice::Pca,
            perplexity: 30.0,
            tsne_iters: 1000,
            reuse_model: false,
            cleaning: CleaningConfig::default(),
        }
    }
}

const KEYS: &[&str] = &[
    "seed", "deterministic", "basis", "models", "k", "dim", "window", "min_count", "epochs", "negative", "lr", "buckets", "restarts", "min_labeled",
    "unanimity", "eligible", "folds", "queue_size", "projection", "perplexity", "tsne_iters", "reuse_model",
];

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, PipelineError>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| PipelineError::InvalidConfig(format!("{key}: {e}"))))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(PipelineError::InvalidConfig(format!("{key} must not be empty")));
    }
    Ok(items)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

impl CycleConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self, PipelineError> {
        kv.reject_unknown(KEYS, &["clean."])?;
        let mut c = Self::default();
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.get_parsed($key)? {
                    $field = v;
                }
            };
        }
        set!("seed", c.seed);
        set!("dim", c.dim);
        set!("window", c.window);
        set!("min_count", c.min_count);
        set!("negative", c.negative);
        set!("lr", c.lr);
        set!("buckets", c.buckets);
        set!("restarts", c.restarts);
        set!("min_labeled", c.policy.min_labeled);
        set!("unanimity", c.policy.unanimity);
        set!("folds", c.folds);
        set!("queue_size", c.queue_size);
        set!("perplexity", c.perplexity);
        set!("tsne_iters", c.tsne_iters);
        if let Some(v) = kv.get("deterministic") {
            c.deterministic = parse_bool("deterministic", v)?;
        }
        if let Some(v) = kv.get("reuse_model") {
            c.reuse_model = parse_bool("reuse_model", v)?;
        }
        if let Some(v) = kv.get("basis") {
            c.basis = v.parse().map_err(PipelineError::InvalidConfig)?;
        }
        if let Some(v) = kv.get("projection") {
            c.projection = v.parse().map_err(PipelineError::InvalidConfig)?;
        }
        if let Some(v) = kv.get("epochs") {
            c.epochs = Some(v.parse().map_err(|e| PipelineError::InvalidConfig(format!("epochs: {e}")))?);
        }
        if let Some(v) = kv.get("models") {
            c.models = list("models", v)?;
        }
        if let Some(v) = kv.get("k") {
            c.ks = list("k", v)?;
        }
        if let Some(v) = kv.get("eligible") {
            c.policy.eligible = list::<LabelValue>("eligible", v)?.into_iter().collect::<BTreeSet<_>>();
        }
        let mut clean = KeyValues::default();
        for (k, v) in kv.with_prefix("clean.") {
            clean.insert(k, v);
        }
        c.cleaning = CleaningConfig::from_kv(&clean)?;
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.models.is_empty() || self.ks.is_empty() {
            return bad("at least one model and one k are required".into());
        }
        if self.ks.contains(&0) {
            return bad("k must be at least 1".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.queue_size == 0 {
            return bad("queue_size must be at least 1".into());
        }
        self.policy.validate()?;
        self.cleaning.validate()?;
        for &m in &self.models {
            self.training(m).validate()?;
        }
        Ok(())
    }

    pub fn training(&self, kind: ModelKind) -> TrainingConfig {
        let mut t = TrainingConfig::for_kind(kind);
        t.dim = self.dim;
        t.window = self.window;
        t.min_count = self.min_count;
        if let Some(e) = self.epochs {
            t.epochs = e;
        }
        t.negative = self.negative;
        t.lr_start = self.lr;
        t.lr_end = t.lr_end.min(self.lr);
        t.subwords.buckets = self.buckets;
        t.seed = self.seed;
        t.deterministic = self.deterministic;
        t
    }

    /// Model/k pairs in evaluation order; the first is the primary pair.
    pub fn pairs(&self) -> Vec<PairKey> {
        let mut out = Vec::new();
        for &model in &self.models {
            for &k in &self.ks {
                let p = PairKey { model, k };
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Flat snapshot for run manifests. `reuse_model` is left out: it changes
    /// how a round gets its model, not what the round means.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        put("deterministic", self.deterministic.to_string());
        put("basis", self.basis.to_string());
        put("models", join(&self.models));
        put("k", join(&self.ks));
        put("dim", self.dim.to_string());
        put("window", self.window.to_string());
        put("min_count", self.min_count.to_string());
        put("epochs", self.epochs.map_or("default".into(), |e| e.to_string()));
        put("negative", self.negative.to_string());
        put("lr", self.lr.to_string());
        put("buckets", self.buckets.to_string());
        put("restarts", self.restarts.to_string());
        put("min_labeled", self.policy.min_labeled.to_string());
        put("unanimity", self.policy.unanimity.to_string());
        put("eligible", join(&self.policy.eligible.iter().collect::<Vec<_>>()));
        put("folds", self.folds.to_string());
        put("queue_size", self.queue_size.to_string());
        put("projection", self.projection.as_str().to_string());
        put("perplexity", self.perplexity.to_string());
        put("tsne_iters", self.tsne_iters.to_string());
        let clean = self.cleaning.to_kv();
        for k in clean.keys() {
            put(&format!("clean.{k}"), clean.get(k).unwrap_or_default().to_string());
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = CycleConfig::parse("models = cbow, skipgram\nk = 4, 6\nmin_labeled = 3\nclean.fake_phone = 555-555-0199\n").unwrap();
        assert_eq!(c.pairs().len(), 4);
        assert_eq!(c.pairs()[0], PairKey { model: ModelKind::Cbow, k: 4 });
        assert_eq!(c.policy.min_labeled, 3);
        assert_eq!(c.cleaning.fake_phone, "555-555-0199");
        assert_eq!(c.snapshot()["clean.fake_phone"], "555-555-0199");
        assert_eq!(CycleConfig::parse("").unwrap(), CycleConfig::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(CycleConfig::parse("bogus = 1"), Err(PipelineError::Config(_))));
        assert!(CycleConfig::parse("k = 0").is_err());
        assert!(CycleConfig::parse("folds = 1").is_err());
        assert!(CycleConfig::parse("models = word2vec").is_err());
        assert!(CycleConfig::parse("eligible = removed").is_err());
    }
}
