//! Flat `key = value` configuration text.
//!
//! One assignment per line; lines whose first non-blank character is `#` are
//! comments and blank lines are ignored. Keys are unique. A value wrapped in
//! double quotes keeps its inner text verbatim, including edge whitespace.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("config line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("config key `{key}`: invalid value `{value}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(KvError::Syntax { line: line_no })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::Syntax { line: line_no });
            }
            let value = value.trim();
            let value = match value.strip_prefix('"').and_then(|v| v.strip_suffix('"')) {
                Some(inner) if value.len() >= 2 => inner.to_string(),
                _ => value.to_string(),
            };
            if entries.insert(key.to_string(), value).is_some() {
                return Err(KvError::Duplicate {
                    line: line_no,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| KvError::Value {
                key: key.to_string(),
                value: v.clone(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on the first key that is neither in `known` nor starts with one of `prefixes`.
    pub fn reject_unknown(&self, known: &[&str], prefixes: &[&str]) -> Result<(), KvError> {
        for key in self.keys() {
            if !known.contains(&key) && !prefixes.iter().any(|p| key.starts_with(p)) {
                return Err(KvError::UnknownKey(key.to_string()));
            }
        }
        Ok(())
    }

    pub fn with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.entries
            .iter()
            .filter_map(move |(k, v)| k.strip_prefix(prefix).map(|rest| (rest, v.as_str())))
    }

    pub fn insert(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            if v.trim() != v || v.starts_with('"') {
                out.push('"');
                out.push_str(v);
                out.push('"');
            } else {
                out.push_str(v);
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool, KvError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(KvError::Value {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true or false".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let kv = KeyValues::parse("# header\n\n  # indented\nseed = 7\nmarker = \"^\\S+: \"\n").unwrap();
        assert_eq!(kv.get("seed"), Some("7"));
        assert_eq!(kv.get("marker"), Some("^\\S+: "));
        assert_eq!(kv.get_parsed::<u64>("seed").unwrap(), Some(7));
    }

    #[test]
    fn hash_inside_value_is_literal() {
        let mut kv = KeyValues::parse("chars = a#b\n").unwrap();
        assert_eq!(kv.get("chars"), Some("a#b"));
        kv.insert("padded", " x ");
        let round = KeyValues::parse(&kv.to_text()).unwrap();
        assert_eq!(round, kv);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert_eq!(
            KeyValues::parse("a = 1\na = 2").unwrap_err(),
            KvError::Duplicate {
                line: 2,
                key: "a".into()
            }
        );
        assert_eq!(
            KeyValues::parse("just words").unwrap_err(),
            KvError::Syntax { line: 1 }
        );
        let kv = KeyValues::parse("n = abc").unwrap();
        assert!(kv.get_parsed::<u32>("n").is_err());
    }
}
