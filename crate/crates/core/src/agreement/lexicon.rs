use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AgreementError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LexiconClass {
    Yes,
    Maybe,
    No,
    Unknown,
}

impl FromStr for LexiconClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" => Ok(Self::Yes),
            "maybe" => Ok(Self::Maybe),
            "no" => Ok(Self::No),
            "unknown" => Ok(Self::Unknown),
            other => Err(format!("unknown class `{other}` (expected yes, maybe, no or unknown)")),
        }
    }
}

impl fmt::Display for LexiconClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Yes => "yes",
            Self::Maybe => "maybe",
            Self::No => "no",
            Self::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub class: LexiconClass,
    pub note: String,
}

/// Normalized hashtag → class table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashtagLexicon {
    pub entries: BTreeMap<String, LexiconEntry>,
}

impl HashtagLexicon {
    /// Lowercase, without surrounding whitespace or leading `#`.
    pub fn normalize(tag: &str) -> String {
        tag.trim().trim_start_matches('#').to_lowercase()
    }

    pub fn class_of(&self, tag: &str) -> Option<LexiconClass> {
        self.entries.get(&Self::normalize(tag)).map(|e| e.class)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A neutral four-entry lexicon for demos and tests.
    pub fn demo() -> Self {
        parse_lexicon("hashtag,class,note\nbirdwatching,yes,demo topic tag\nbinoculars,maybe,related but ambiguous\nsunset,no,generic popular tag\nweekend,unknown,not yet reviewed\n")
            .expect("demo lexicon parses")
    }
}

#[derive(Deserialize)]
struct Row {
    hashtag: String,
    class: String,
    #[serde(default)]
    note: String,
}

/// Parses `hashtag,class,note` CSV with a header row. Row numbers in errors
/// count the header as row 1.
pub fn parse_lexicon(text: &str) -> Result<HashtagLexicon, AgreementError> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(text.as_bytes());
    let mut entries = BTreeMap::new();
    let mut rows: BTreeMap<String, usize> = BTreeMap::new();
    for (i, rec) in rd.deserialize::<Row>().enumerate() {
        let row = i + 2;
        let r = rec.map_err(|e| AgreementError::Lexicon { row, reason: e.to_string() })?;
        let tag = HashtagLexicon::normalize(&r.hashtag);
        if tag.is_empty() {
            return Err(AgreementError::Lexicon { row, reason: "empty hashtag".into() });
        }
        let class = r.class.parse::<LexiconClass>().map_err(|reason| AgreementError::Lexicon { row, reason })?;
        if let Some(&first) = rows.get(&tag) {
            return Err(AgreementError::DuplicateTag { tag, first, second: row });
        }
        rows.insert(tag.clone(), row);
        entries.insert(tag, LexiconEntry { class, note: r.note });
    }
    Ok(HashtagLexicon { entries })
}

pub fn load_lexicon(path: &Path) -> Result<HashtagLexicon, AgreementError> {
    let text = std::fs::read_to_string(path).map_err(|e| AgreementError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_lexicon(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_has_four_entries() {
        assert_eq!(HashtagLexicon::demo().len(), 4);
    }

    #[test]
    fn bad_class_names_the_row() {
        let err = parse_lexicon("hashtag,class,note\na,yes,\nb,sometimes,\n").unwrap_err();
        assert!(matches!(err, AgreementError::Lexicon { row: 3, .. }), "{err}");
    }

    #[test]
    fn keys_are_normalized_and_unique() {
        let l = parse_lexicon("hashtag,class,note\n#TagX,maybe,x\n").unwrap();
        assert_eq!(l.class_of("tagx"), Some(LexiconClass::Maybe));
        assert_eq!(l.class_of("#TAGX"), Some(LexiconClass::Maybe));
        let dup = parse_lexicon("hashtag,class,note\n#TagX,maybe,\ntagx,yes,\n").unwrap_err();
        assert!(matches!(dup, AgreementError::DuplicateTag { first: 2, second: 3, .. }));
    }
}
