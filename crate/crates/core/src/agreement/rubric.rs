use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{HashtagLexicon, LexiconClass};
use crate::store::{LabelValue, Post};

/// One rubric entry. Executable rules drive [`suggest_label`]; the rest are
/// guidance shown to raters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricRule {
    pub id: String,
    pub title: String,
    pub condition: String,
    pub outcome: String,
    pub executable: bool,
    /// Inputs an executable rule reads.
    pub inputs: Vec<String>,
}

fn rule(id: &str, title: &str, condition: &str, outcome: &str, inputs: &[&str]) -> RubricRule {
    RubricRule {
        id: id.into(),
        title: title.into(),
        condition: condition.into(),
        outcome: outcome.into(),
        executable: !inputs.is_empty(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn default_rubric() -> Vec<RubricRule> {
    vec![
        rule("R1", "Topic hashtag", "The post carries a hashtag the lexicon classes as yes.", "yes", &["source_hashtags", "lexicon"]),
        rule(
            "R2",
            "Ambiguous hashtags only",
            "Every lexicon-known hashtag on the post is classed maybe and none is classed yes.",
            "unclear",
            &["source_hashtags", "lexicon"],
        ),
        rule(
            "R3",
            "Profile context",
            "The post itself is non-committal but the poster's profile or other posts place it in the topic.",
            "post_plus_profile basis: yes; post_only basis: unclear or no",
            &[],
        ),
        rule(
            "R4",
            "Third-party comments",
            "Only comments by other accounts point to the topic; the poster gives no such indication.",
            "no",
            &[],
        ),
        rule(
            "R5",
            "Unreadable language",
            "The text is in a language the rater cannot read.",
            "translate first; unclear if no translation is available",
            &[],
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub value: LabelValue,
    pub rule_id: String,
    pub matched_tags: Vec<String>,
}

/// Applies the executable rules in order. Depends only on the post's tag set.
pub fn suggest_label(post: &Post, lexicon: &HashtagLexicon) -> Option<Suggestion> {
    let tags: BTreeSet<String> = post.source_hashtags.iter().map(|t| HashtagLexicon::normalize(t)).collect();
    let of = |class: LexiconClass| -> Vec<String> { tags.iter().filter(|t| lexicon.class_of(t) == Some(class)).cloned().collect() };
    let yes = of(LexiconClass::Yes);
    if !yes.is_empty() {
        return Some(Suggestion {
            value: LabelValue::Yes,
            rule_id: "R1".into(),
            matched_tags: yes,
        });
    }
    let maybe = of(LexiconClass::Maybe);
    let decisive_other = tags.iter().any(|t| matches!(lexicon.class_of(t), Some(LexiconClass::No)));
    if !maybe.is_empty() && !decisive_other {
        return Some(Suggestion {
            value: LabelValue::Unclear,
            rule_id: "R2".into(),
            matched_tags: maybe,
        });
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::Cohort;

    fn post(tags: &[&str]) -> Post {
        Post {
            post_id: "p".into(),
            raw_text: String::new(),
            cohort: Cohort::Control,
            source_hashtags: tags.iter().map(|s| s.to_string()).collect(),
            created_at: None,
        }
    }

    #[test]
    fn yes_tag_fires_rule_one() {
        let s = suggest_label(&post(&["sunset", "BirdWatching"]), &HashtagLexicon::demo()).unwrap();
        assert_eq!((s.value, s.rule_id.as_str()), (LabelValue::Yes, "R1"));
        assert_eq!(s.matched_tags, vec!["birdwatching"]);
    }

    #[test]
    fn maybe_only_suggests_unclear() {
        let s = suggest_label(&post(&["binoculars", "weekend"]), &HashtagLexicon::demo()).unwrap();
        assert_eq!((s.value, s.rule_id.as_str()), (LabelValue::Unclear, "R2"));
        assert!(suggest_label(&post(&["binoculars", "sunset"]), &HashtagLexicon::demo()).is_none());
    }

    #[test]
    fn no_lexicon_tags_no_suggestion() {
        assert!(suggest_label(&post(&["random"]), &HashtagLexicon::demo()).is_none());
        assert!(suggest_label(&post(&[]), &HashtagLexicon::demo()).is_none());
    }

    #[test]
    fn rubric_ids_are_unique() {
        let r = default_rubric();
        let ids: BTreeSet<_> = r.iter().map(|x| &x.id).collect();
        assert_eq!(ids.len(), 5);
        assert_eq!(r.iter().filter(|x| x.executable).count(), 2);
    }
}
