use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::VectorizeError;

/// Tokens seen at least `min_count` times, densely indexed.
///
/// Indices are ordered by descending count, ties broken by the token string,
/// so the same corpus always yields the same indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
    min_count: u64,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_parts(tokens: Vec<String>, counts: Vec<u64>, total_tokens: u64, min_count: u64) -> Result<Self, VectorizeError> {
        if tokens.len() != counts.len() {
            return Err(VectorizeError::Format("vocabulary token/count length mismatch".into()));
        }
        let mut v = Self {
            tokens,
            counts,
            total_tokens,
            min_count,
            index: HashMap::new(),
        };
        v.reindex()?;
        Ok(v)
    }

    pub(crate) fn reindex(&mut self) -> Result<(), VectorizeError> {
        self.index = HashMap::with_capacity(self.tokens.len());
        for (i, t) in self.tokens.iter().enumerate() {
            if self.index.insert(t.clone(), i as u32).is_some() {
                return Err(VectorizeError::Format(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Corpus size in tokens, including those below `min_count`.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }
}

/// Counts tokens over all documents and keeps those with count ≥ `min_count`.
pub fn build_vocab<D: AsRef<[String]>>(docs: &[D], min_count: u64) -> Result<Vocabulary, VectorizeError> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total = 0u64;
    for d in docs {
        for t in d.as_ref() {
            *counts.entry(t.as_str()).or_default() += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(VectorizeError::EmptyCorpus);
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (tokens, counts) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Vocabulary::from_parts(tokens, counts, total, min_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(spec: &[(&str, usize)]) -> Vec<Vec<String>> {
        vec![spec
            .iter()
            .flat_map(|&(t, n)| std::iter::repeat_n(t.to_string(), n))
            .collect()]
    }

    #[test]
    fn threshold() {
        let v = build_vocab(&docs(&[("four", 4), ("five", 5)]), 5).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.id("four").is_none());
        assert_eq!(v.id("five"), Some(0));
        assert_eq!(v.total_tokens(), 9);
    }

    #[test]
    fn single_repeated_token() {
        let v = build_vocab(&docs(&[("x", 10)]), 5).unwrap();
        assert_eq!((v.len(), v.total_tokens()), (1, 10));
    }

    #[test]
    fn empty_corpus() {
        let empty: Vec<Vec<String>> = vec![vec![]];
        assert!(matches!(build_vocab(&empty, 1), Err(VectorizeError::EmptyCorpus)));
    }

    #[test]
    fn ordering_is_by_count_then_token() {
        let v = build_vocab(&docs(&[("b", 2), ("a", 2), ("c", 3)]), 1).unwrap();
        assert_eq!(v.tokens(), ["c", "a", "b"]);
    }
}
