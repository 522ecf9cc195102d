use serde::{Deserialize, Serialize};

pub const DEFAULT_BUCKETS: u32 = 1 << 21;

/// 32-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u32 {
    let mut h: u32 = 0x811C_9DC5;
    for &b in bytes {
        h ^= b as u32;
        h = h.wrapping_mul(0x0100_0193);
    }
    h
}

/// Hashes boundary-marked character n-grams (`<word>`) into a fixed number of buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordIndex {
    pub n_min: usize,
    pub n_max: usize,
    pub buckets: u32,
}

impl Default for SubwordIndex {
    fn default() -> Self {
        Self {
            n_min: 3,
            n_max: 6,
            buckets: DEFAULT_BUCKETS,
        }
    }
}

impl SubwordIndex {
    /// All n-grams of `<token>` with length in `n_min..=n_max`, in order of
    /// start position then length. Never empty for a non-empty range, since
    /// the marked token has at least three characters.
    pub fn ngrams(&self, token: &str) -> Vec<String> {
        let marked: Vec<char> = std::iter::once('<').chain(token.chars()).chain(std::iter::once('>')).collect();
        let mut out = Vec::new();
        for start in 0..marked.len() {
            for n in self.n_min..=self.n_max {
                if start + n > marked.len() {
                    break;
                }
                out.push(marked[start..start + n].iter().collect());
            }
        }
        if out.is_empty() {
            out.push(marked.iter().collect());
        }
        out
    }

    /// Bucket ids for the token's n-grams, duplicates kept (repeated n-grams weigh more).
    pub fn buckets_for(&self, token: &str) -> Vec<u32> {
        if self.buckets == 0 {
            return Vec::new();
        }
        self.ngrams(token)
            .iter()
            .map(|g| fnv1a(g.as_bytes()) % self.buckets)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0x811C_9DC5);
        assert_eq!(fnv1a(b"a"), 0xE40C_292C);
        assert_eq!(fnv1a(b"foobar"), 0xBF9C_F968);
    }

    #[test]
    fn ngrams_of_short_token() {
        let s = SubwordIndex { n_min: 3, n_max: 4, buckets: 100 };
        assert_eq!(s.ngrams("ab"), ["<ab", "<ab>", "ab>"]);
        assert_eq!(s.ngrams("a"), ["<a>"]);
        assert!(!s.buckets_for("").is_empty());
    }

    #[test]
    fn deterministic_and_in_range() {
        let s = SubwordIndex { buckets: 97, ..Default::default() };
        let a = s.buckets_for("running");
        assert_eq!(a, s.buckets_for("running"));
        assert!(a.iter().all(|&b| b < 97));
    }
}
