use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Deserialize;

use super::fsio::{digest_bytes, jsonl_bytes, write_jsonl_atomic};
use super::{Cohort, Post, StoreError};

/// Maps the cohort strings found in a corpus file onto [`Cohort`].
///
/// `control` and `topic_flagged` are always understood; aliases such as
/// `sih = topic_flagged` can be added for files produced by other tools.
#[derive(Debug, Clone)]
pub struct CohortMapping {
    aliases: BTreeMap<String, Cohort>,
}

impl Default for CohortMapping {
    fn default() -> Self {
        let mut aliases = BTreeMap::new();
        aliases.insert("control".to_string(), Cohort::Control);
        aliases.insert("topic_flagged".to_string(), Cohort::TopicFlagged);
        Self { aliases }
    }
}

impl CohortMapping {
    pub fn with_alias(mut self, raw: &str, cohort: Cohort) -> Self {
        self.aliases.insert(raw.to_ascii_lowercase(), cohort);
        self
    }

    /// Parses `raw=cohort` pairs, e.g. `sih=topic_flagged`.
    pub fn parse_alias(mut self, spec: &str) -> Result<Self, String> {
        let (raw, target) = spec
            .split_once('=')
            .ok_or_else(|| format!("cohort alias `{spec}` must look like name=control|topic_flagged"))?;
        let cohort = match target.trim() {
            "control" => Cohort::Control,
            "topic_flagged" => Cohort::TopicFlagged,
            other => return Err(format!("unknown cohort `{other}`")),
        };
        self.aliases.insert(raw.trim().to_ascii_lowercase(), cohort);
        Ok(self)
    }

    pub fn resolve(&self, raw: &str) -> Option<Cohort> {
        self.aliases.get(&raw.to_ascii_lowercase()).copied()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPost {
    post_id: String,
    raw_text: String,
    cohort: String,
    #[serde(default)]
    source_hashtags: Vec<String>,
    #[serde(default)]
    created_at: Option<String>,
}

/// An immutable, validated set of posts in file order.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    posts: Vec<Post>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_posts(posts: Vec<Post>) -> Result<Self, StoreError> {
        let mut index = HashMap::with_capacity(posts.len());
        for (i, p) in posts.iter().enumerate() {
            if index.insert(p.post_id.clone(), i).is_some() {
                return Err(StoreError::DuplicatePost(p.post_id.clone()));
            }
        }
        Ok(Self { posts, index })
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn get(&self, post_id: &str) -> Option<&Post> {
        self.index.get(post_id).map(|&i| &self.posts[i])
    }

    pub fn contains(&self, post_id: &str) -> bool {
        self.index.contains_key(post_id)
    }

    pub fn position(&self, post_id: &str) -> Option<usize> {
        self.index.get(post_id).copied()
    }

    /// SHA-256 over the canonical JSONL serialization.
    pub fn digest(&self) -> String {
        digest_bytes(&jsonl_bytes(&self.posts))
    }

    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        write_jsonl_atomic(path, &self.posts)
    }
}

fn normalize_tag(tag: &str) -> String {
    tag.trim().trim_start_matches('#').to_lowercase()
}

/// Parses corpus text. Nothing is returned unless every line is valid.
pub fn parse_corpus(text: &str, origin: &str, mapping: &CohortMapping) -> Result<Corpus, StoreError> {
    let mut posts = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| StoreError::Malformed {
            path: origin.to_string(),
            line: line_no,
            reason,
        };
        let raw: RawPost = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if raw.post_id.trim().is_empty() {
            return Err(malformed("post_id is empty".into()));
        }
        let cohort = mapping
            .resolve(&raw.cohort)
            .ok_or_else(|| malformed(format!("unknown cohort `{}`", raw.cohort)))?;
        if let Some(ts) = &raw.created_at {
            chrono::DateTime::parse_from_rfc3339(ts)
                .map_err(|e| malformed(format!("created_at `{ts}` is not ISO-8601: {e}")))?;
        }
        if seen.insert(raw.post_id.clone(), line_no).is_some() {
            return Err(StoreError::DuplicatePost(raw.post_id));
        }
        posts.push(Post {
            post_id: raw.post_id,
            raw_text: raw.raw_text,
            cohort,
            source_hashtags: raw.source_hashtags.iter().map(|t| normalize_tag(t)).collect(),
            created_at: raw.created_at,
        });
    }
    if posts.is_empty() {
        return Err(StoreError::Empty(origin.to_string()));
    }
    Corpus::from_posts(posts)
}

pub fn ingest_corpus(path: &Path, mapping: &CohortMapping) -> Result<Corpus, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::io(path, e))?;
    parse_corpus(&text, &path.display().to_string(), mapping)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(id: &str) -> String {
        format!(r##"{{"post_id":"{id}","raw_text":"hello","cohort":"control","source_hashtags":["#Dog"],"created_at":null}}"##)
    }

    #[test]
    fn three_unique_lines_load() {
        let text = [line("a"), line("b"), line("c")].join("\n");
        let corpus = parse_corpus(&text, "mem", &CohortMapping::default()).unwrap();
        assert_eq!(corpus.len(), 3);
        assert_eq!(corpus.get("b").unwrap().source_hashtags, vec!["dog"]);
    }

    #[test]
    fn duplicate_id_is_named() {
        let text = [line("a"), line("b"), line("a")].join("\n");
        match parse_corpus(&text, "mem", &CohortMapping::default()) {
            Err(StoreError::DuplicatePost(id)) => assert_eq!(id, "a"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number_and_persists_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("in.jsonl");
        let text = [line("a"), "{not json".to_string(), line("c")].join("\n");
        std::fs::write(&src, text).unwrap();
        match ingest_corpus(&src, &CohortMapping::default()) {
            Err(StoreError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        // only the input file exists
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(
            parse_corpus("\n\n", "mem", &CohortMapping::default()),
            Err(StoreError::Empty(_))
        ));
    }

    #[test]
    fn cohort_aliases() {
        let mapping = CohortMapping::default().parse_alias("sih=topic_flagged").unwrap();
        let text = r#"{"post_id":"x","raw_text":"t","cohort":"SIH"}"#;
        let corpus = parse_corpus(text, "mem", &mapping).unwrap();
        assert_eq!(corpus.posts()[0].cohort, Cohort::TopicFlagged);
        assert!(parse_corpus(text, "mem", &CohortMapping::default()).is_err());
    }
}
