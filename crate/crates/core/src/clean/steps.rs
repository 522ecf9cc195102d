//! The individual normalization operations. Each returns the new text and a
//! change count used for per-step statistics.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Drops whitespace-delimited tokens starting with `@`. Line structure is kept;
/// whitespace inside a line is normalized to single spaces.
pub fn remove_usernames(text: &str) -> (String, usize) {
    let mut removed = 0;
    let lines: Vec<String> = text
        .split('\n')
        .map(|line| {
            line.split_whitespace()
                .filter(|t| {
                    let drop = t.starts_with('@');
                    removed += drop as usize;
                    !drop
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    if removed == 0 {
        return (text.to_string(), 0);
    }
    (lines.join("\n"), removed)
}

const APOSTROPHE_ENTITIES: &[&str] = &["&#x27;", "&#X27;", "&#39;", "&#039;", "&apos;", "&#8217;", "&#8216;", "&rsquo;", "&lsquo;", "& x27;", "&x27;"];
const APOSTROPHE_CHARS: &[char] = &['\u{2019}', '\u{2018}', '\u{02BC}', '\u{2032}', '\u{00B4}', '`', '\u{FF07}', '\u{201B}'];

/// Maps typographic quotes and HTML-entity apostrophes to `'`.
pub fn normalize_apostrophes(text: &str) -> (String, usize) {
    let mut count = 0;
    let mut out = text.to_string();
    for ent in APOSTROPHE_ENTITIES {
        let n = out.matches(ent).count();
        if n > 0 {
            count += n;
            out = out.replace(ent, "'");
        }
    }
    let mut result = String::with_capacity(out.len());
    for c in out.chars() {
        if APOSTROPHE_CHARS.contains(&c) {
            result.push('\'');
            count += 1;
        } else {
            result.push(c);
        }
    }
    (result, count)
}

/// Compatibility decomposition followed by removal of combining marks:
/// `é` -> `e`, and styled letters such as fullwidth or mathematical bold
/// fold to their plain forms.
pub fn strip_accents(text: &str) -> (String, usize) {
    let mut count = 0;
    let mut out = String::with_capacity(text.len());
    let mut buf = String::new();
    for c in text.chars() {
        if c.is_ascii() {
            out.push(c);
            continue;
        }
        buf.clear();
        buf.extend(std::iter::once(c).nfkd().filter(|d| !is_combining_mark(*d)));
        if buf.len() != c.len_utf8() || !buf.starts_with(c) {
            count += 1;
        }
        out.push_str(&buf);
    }
    (out, count)
}

/// Removes every character that is not alphanumeric, whitespace, or in `kept`.
/// The named set `! : ; = ? . \ #` is always removed unless listed in `kept`.
pub fn strip_punctuation(text: &str, kept: &[char]) -> (String, usize) {
    let mut count = 0;
    let out = text
        .chars()
        .filter(|c| {
            let keep = c.is_alphanumeric() || c.is_whitespace() || kept.contains(c);
            count += !keep as usize;
            keep
        })
        .collect();
    (out, count)
}

/// Lowercases. Characters with no lowercase form that still count as
/// uppercase are dropped, as are combining marks introduced by the mapping.
pub fn lowercase(text: &str) -> (String, usize) {
    let mut count = 0;
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        let mut lower = c.to_lowercase();
        if lower.len() == 1 && lower.clone().next() == Some(c) {
            if c.is_uppercase() {
                count += 1;
            } else {
                out.push(c);
            }
            continue;
        }
        count += 1;
        out.extend(lower.by_ref().filter(|l| !l.is_uppercase() && !is_combining_mark(*l)));
    }
    (out, count)
}

/// Collapses every run of three or more identical letters to two.
pub fn collapse_repeats(text: &str) -> (String, usize) {
    let mut count = 0;
    let mut out = String::with_capacity(text.len());
    let mut prev: Option<char> = None;
    let mut run = 0usize;
    for c in text.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            prev = Some(c);
            run = 1;
        }
        if c.is_alphabetic() && run > 2 {
            if run == 3 {
                count += 1;
            }
            continue;
        }
        out.push(c);
    }
    (out, count)
}

/// Removes a leading author-name segment matching `marker` (anchored at the start).
pub fn strip_author_prefix(caption: &str, marker: &Regex) -> (String, usize) {
    match marker.find(caption) {
        Some(m) if m.start() == 0 && !m.is_empty() => (caption[m.end()..].to_string(), 1),
        _ => (caption.to_string(), 0),
    }
}

/// Replaces whole tokens found in `table`, then lowercases the result.
/// Whitespace and line structure are preserved.
pub fn expand_contractions(text: &str, table: &HashMap<String, String>) -> (String, usize) {
    let mut count = 0;
    let mut out = String::with_capacity(text.len());
    let mut token_start: Option<usize> = None;
    let flush = |out: &mut String, tok: &str, count: &mut usize| match table.get(tok) {
        Some(exp) => {
            out.push_str(exp);
            *count += 1;
        }
        None => out.push_str(tok),
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = token_start.take() {
                flush(&mut out, &text[s..i], &mut count);
            }
            out.push(c);
        } else if token_start.is_none() {
            token_start = Some(i);
        }
    }
    if let Some(s) = token_start {
        flush(&mut out, &text[s..], &mut count);
    }
    let (out, _) = lowercase(&out);
    (out, count)
}

/// Newlines become spaces; whitespace runs collapse; ends are trimmed.
pub fn flatten_newlines(text: &str) -> (String, usize) {
    let count = text.chars().filter(|&c| c == '\n').count();
    let out = text.split_whitespace().collect::<Vec<_>>().join(" ");
    (out, count)
}

static PHONE_CANDIDATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[+(]?\d[\d \-+().]*\d\)?").expect("valid phone regex"));

/// Replaces phone-number spans (7 to 15 digits, separators among
/// space `-` `+` `(` `)` `.`) that stand on token boundaries.
/// Amounts such as `$1000000` are left alone. A candidate run with more than
/// 15 digits is split at spaces into the longest groups that fit, so two
/// numbers separated by a space are both replaced.
pub fn redact_phone_numbers(text: &str, fake_phone: &str) -> (String, usize) {
    let mut count = 0;
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let digits = |s: &str| s.chars().filter(char::is_ascii_digit).count();
    for m in PHONE_CANDIDATE.find_iter(text) {
        // trailing separators are not part of the number
        let span = m.as_str().trim_end_matches([' ', '-', '+', '(', '.']);
        let mut pieces: Vec<(usize, usize)> = Vec::new();
        let mut offset = 0;
        for piece in span.split(' ') {
            if !piece.is_empty() {
                pieces.push((m.start() + offset, m.start() + offset + piece.len()));
            }
            offset += piece.len() + 1;
        }
        let mut i = 0;
        while i < pieces.len() {
            let mut best = None;
            for j in i..pieces.len() {
                let n = digits(&text[pieces[i].0..pieces[j].1]);
                if n > 15 {
                    break;
                }
                if n >= 7 {
                    best = Some(j);
                }
            }
            let Some(j) = best else {
                i += 1;
                continue;
            };
            let (start, end) = (pieces[i].0, pieces[j].1);
            let before = text[..start].chars().next_back();
            let after = text[end..].chars().next();
            let bounded_before = before.is_none_or(|c| !(c.is_alphanumeric() || c == '$' || c == '_'));
            let bounded_after = after.is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
            if bounded_before && bounded_after {
                out.push_str(&text[last..start]);
                out.push_str(fake_phone);
                last = end;
                count += 1;
                i = j + 1;
            } else {
                i += 1;
            }
        }
    }
    out.push_str(&text[last..]);
    (out, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEPT: &[char] = &['-', '+', '$', '\'', '_'];

    #[test]
    fn usernames() {
        assert_eq!(remove_usernames("@bob nice pic").0, "nice pic");
        assert_eq!(remove_usernames("email me at bob@mail"), ("email me at bob@mail".into(), 0));
        assert_eq!(remove_usernames("@a @b"), (String::new(), 2));
        assert_eq!(remove_usernames("hi @x\n@y there").0, "hi\nthere");
    }

    #[test]
    fn apostrophes() {
        assert_eq!(normalize_apostrophes("don\u{2019}t").0, "don't");
        assert_eq!(normalize_apostrophes("don&#x27;t").0, "don't");
        assert_eq!(normalize_apostrophes("cat"), ("cat".into(), 0));
    }

    #[test]
    fn accents() {
        assert_eq!(strip_accents("café").0, "cafe");
        assert_eq!(strip_accents("niño").0, "nino");
        assert_eq!(strip_accents("plain ascii"), ("plain ascii".into(), 0));
        assert_eq!(strip_accents("\u{1D41B}\u{FF41}").0, "ba");
    }

    #[test]
    fn punctuation() {
        assert_eq!(strip_punctuation("#dog!", KEPT).0, "dog");
        assert_eq!(strip_punctuation("$100 weekly", KEPT), ("$100 weekly".into(), 0));
        assert_eq!(strip_punctuation("a=b?", KEPT), ("ab".into(), 2));
        assert_eq!(strip_punctuation(r"a\b:c;d.e", KEPT).0, "abcde");
    }

    #[test]
    fn lowercasing() {
        assert_eq!(lowercase("Dog").0, "dog");
        assert_eq!(lowercase("DAISY daisy").0, "daisy daisy");
        assert_eq!(lowercase("123"), ("123".into(), 0));
    }

    #[test]
    fn repeats() {
        assert_eq!(collapse_repeats("awwwwwww"), ("aww".into(), 1));
        assert_eq!(collapse_repeats("looooooove").0, "loove");
        assert_eq!(collapse_repeats("aab"), ("aab".into(), 0));
        assert_eq!(collapse_repeats("$1000").0, "$1000");
    }

    #[test]
    fn author_prefix() {
        let marker = Regex::new(r"^\S+: ").unwrap();
        assert_eq!(strip_author_prefix("someuser: great view", &marker).0, "great view");
        assert_eq!(strip_author_prefix("great view", &marker), ("great view".into(), 0));
        assert_eq!(strip_author_prefix("", &marker), (String::new(), 0));
    }

    #[test]
    fn contractions() {
        let table: HashMap<String, String> = super::super::contractions::DEFAULT_CONTRACTIONS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        assert_eq!(expand_contractions("don't", &table), ("do not".into(), 1));
        assert_eq!(expand_contractions("i'm here", &table).0, "i am here");
        assert_eq!(expand_contractions("rock's", &table), ("rock's".into(), 0));
    }

    #[test]
    fn newlines() {
        assert_eq!(flatten_newlines("a\nb"), ("a b".into(), 1));
        assert_eq!(flatten_newlines("a\n\nb").0, "a b");
        assert_eq!(flatten_newlines("a b"), ("a b".into(), 0));
    }

    #[test]
    fn phones() {
        let fake = "555-555-0123";
        assert_eq!(redact_phone_numbers("+1 (212) 555-8890", fake), (fake.into(), 1));
        assert_eq!(redact_phone_numbers("$100", fake), ("$100".into(), 0));
        assert_eq!(redact_phone_numbers("call 2125558890", fake).0, "call 555-555-0123");
        assert_eq!(redact_phone_numbers("call 212-555-8890 now", fake).0, "call 555-555-0123 now");
        assert_eq!(redact_phone_numbers("$1000000 cash", fake).1, 0);
        assert_eq!(redact_phone_numbers("id abc1234567", fake).1, 0);
        assert_eq!(redact_phone_numbers("i am 25 and 5 ft", fake).1, 0);
        // already fake: detected and rewritten to itself
        assert_eq!(redact_phone_numbers(fake, fake), (fake.into(), 1));
        assert_eq!(redact_phone_numbers("212-555-8890 646-555-2323", fake), (format!("{fake} {fake}"), 2));
    }
}
