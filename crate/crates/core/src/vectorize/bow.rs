use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Vocabulary;

/// Sparse bag-of-words counts keyed by vocabulary index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowVector {
    pub counts: BTreeMap<u32, u32>,
}

impl BowVector {
    pub fn l1(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Dense counts in vocabulary order.
    pub fn dense(&self, vocab: &Vocabulary) -> Vec<f32> {
        let mut v = vec![0.0; vocab.len()];
        for (&i, &c) in &self.counts {
            v[i as usize] = c as f32;
        }
        v
    }
}

/// Counts in-vocabulary tokens; out-of-vocabulary tokens are ignored.
pub fn bow_vectorize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> BowVector {
    let mut counts = BTreeMap::new();
    for t in tokens {
        if let Some(id) = vocab.id(t.as_ref()) {
            *counts.entry(id).or_insert(0) += 1;
        }
    }
    BowVector { counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorize::build_vocab;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn empty_and_oov() {
        let vocab = build_vocab(&[toks("a b")], 1).unwrap();
        assert!(bow_vectorize::<String>(&[], &vocab).is_empty());
        assert!(bow_vectorize(&toks("zz yy"), &vocab).is_empty());
        assert_eq!(bow_vectorize(&toks("a a zz"), &vocab).l1(), 2);
    }
}
