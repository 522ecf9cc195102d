//! Emoji to name-token conversion.
//!
//! Platform exports often carry emoji as literal `\uXXXX` escapes (UTF-16
//! surrogate pairs for astral code points); those are decoded first, then the
//! longest known emoji sequence at each position is replaced by its name.

use std::collections::BTreeMap;

use emojis::SkinTone;
use unicode_normalization::UnicodeNormalization;

/// Longest emoji sequence (in chars) considered for a match.
const MAX_SEQ_CHARS: usize = 12;

pub(crate) const UNKNOWN: &str = "emoji_unknown";

/// Decodes literal `\uXXXX` escapes, combining surrogate pairs.
/// Unpaired surrogates and malformed escapes are left as they are.
pub(crate) fn decode_unicode_escapes(text: &str) -> String {
    if !text.contains("\\u") {
        return text.to_string();
    }
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut last = 0;
    while i < bytes.len() {
        let Some(hi) = escape_at(text, i) else {
            i += 1;
            continue;
        };
        let decoded = if (0xD800..0xDC00).contains(&hi) {
            match escape_at(text, i + 6) {
                Some(lo) if (0xDC00..0xE000).contains(&lo) => {
                    let cp = 0x10000 + ((hi - 0xD800) << 10) + (lo - 0xDC00);
                    char::from_u32(cp).map(|c| (c, 12))
                }
                _ => None,
            }
        } else {
            char::from_u32(hi).map(|c| (c, 6))
        };
        match decoded {
            Some((c, len)) => {
                out.push_str(&text[last..i]);
                out.push(c);
                i += len;
                last = i;
            }
            None => i += 1,
        }
    }
    out.push_str(&text[last..]);
    out
}

fn escape_at(text: &str, i: usize) -> Option<u32> {
    let s = text.get(i..i + 6)?;
    let hex = s.strip_prefix("\\u").or_else(|| s.strip_prefix("\\U"))?;
    if !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u32::from_str_radix(hex, 16).ok()
}

/// Snake-cases an emoji's descriptive name: "wilted flower" -> "wilted_flower".
pub(crate) fn snake_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_sep = false;
    for c in name.nfkd().filter(|c| !unicode_normalization::char::is_combining_mark(*c)) {
        if c.is_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.extend(c.to_lowercase());
        } else {
            pending_sep = true;
        }
    }
    out
}

fn is_modifier(c: char) -> bool {
    matches!(c as u32,
        0xFE0E | 0xFE0F | 0x200D | 0x20E3 | 0x1F3FB..=0x1F3FF | 0xE0020..=0xE007F)
}

fn is_pictographic(c: char) -> bool {
    matches!(c as u32,
        0x1F000..=0x1FAFF | 0x2600..=0x27BF | 0x2B00..=0x2BFF | 0x2300..=0x23FF | 0x1FC00..=0x1FFFD)
}

/// Could an emoji sequence start at this char? ASCII only for keycaps.
fn may_start(c: char, next: Option<char>) -> bool {
    if c.is_ascii() {
        matches!(c, '0'..='9' | '#' | '*') && matches!(next, Some('\u{FE0F}' | '\u{20E3}'))
    } else {
        true
    }
}

fn name_of(e: &'static emojis::Emoji) -> String {
    let base = match e.skin_tone() {
        Some(tone) if tone != SkinTone::Default => e.with_skin_tone(SkinTone::Default).unwrap_or(e),
        _ => e,
    };
    snake_name(base.name())
}

/// Replaces emoji with space-padded name tokens. Returns the text and the
/// number of emoji replaced (including unknown ones).
pub(crate) fn name_emojis(text: &str, overrides: &BTreeMap<String, String>) -> (String, usize) {
    let text = decode_unicode_escapes(text);
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = String::with_capacity(text.len());
    let mut count = 0;
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, n)| n);
        if may_start(c, next) {
            let max_j = (i + MAX_SEQ_CHARS).min(chars.len());
            let mut found = None;
            for j in (i + 1..=max_j).rev() {
                let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
                let seq = &text[start..end];
                if let Some(name) = overrides.get(seq) {
                    found = Some((j, name.clone()));
                    break;
                }
                if let Some(e) = emojis::get(seq) {
                    found = Some((j, name_of(e)));
                    break;
                }
            }
            if let Some((j, name)) = found {
                out.push(' ');
                out.push_str(&name);
                out.push(' ');
                count += 1;
                i = j;
                continue;
            }
        }
        if is_modifier(c) {
            i += 1;
            continue;
        }
        if is_pictographic(c) {
            out.push(' ');
            out.push_str(UNKNOWN);
            out.push(' ');
            count += 1;
        } else {
            out.push(c);
        }
        i += 1;
    }
    // keep newlines meaningful but don't leave ragged spacing inside lines
    if count > 0 {
        let lines: Vec<String> = out
            .split('\n')
            .map(|l| l.split(' ').filter(|t| !t.is_empty()).collect::<Vec<_>>().join(" "))
            .collect();
        out = lines.join("\n");
    }
    (out, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(s: &str) -> (String, usize) {
        name_emojis(s, &BTreeMap::new())
    }

    #[test]
    fn wilted_flower_literal_and_escaped() {
        assert_eq!(run("\u{1F940}"), ("wilted_flower".to_string(), 1));
        assert_eq!(run("rose \\ud83e\\udd40 for you").0, "rose wilted_flower for you");
    }

    #[test]
    fn adjacent_emoji_become_two_tokens() {
        assert_eq!(run("hi\u{1F940}\u{1F940}").0, "hi wilted_flower wilted_flower");
    }

    #[test]
    fn plain_text_untouched() {
        assert_eq!(run("no emoji here: 100% $5"), ("no emoji here: 100% $5".to_string(), 0));
        assert_eq!(run("caf\\u00e9").0, "café");
    }

    #[test]
    fn skin_tones_and_zwj_sequences() {
        let (out, n) = run("\u{1F44B}\u{1F3FD}");
        assert_eq!(out, "waving_hand");
        assert_eq!(n, 1);
        let (out, n) = run("\u{1F468}\u{200D}\u{1F469}\u{200D}\u{1F467}");
        assert_eq!(n, 1);
        assert!(out.starts_with("family"), "{out}");
    }

    #[test]
    fn unknown_pictograph() {
        // unassigned code point inside the pictograph block
        assert_eq!(run("x\u{1FAFF}y"), ("x emoji_unknown y".to_string(), 1));
    }

    #[test]
    fn keycap_digits() {
        let (out, n) = run("call 1\u{FE0F}\u{20E3}");
        assert_eq!(n, 1);
        assert_eq!(out, "call keycap_1");
        assert_eq!(run("call 1 2").1, 0);
    }

    #[test]
    fn lone_surrogate_escape_is_left_alone() {
        assert_eq!(run("\\ud83e oops").0, "\\ud83e oops");
    }
}
