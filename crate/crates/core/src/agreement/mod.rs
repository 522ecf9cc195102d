//! Inter-rater agreement, the hashtag lexicon and the labeling rubric.

mod lexicon;
mod rubric;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::LabelValue;

pub use lexicon::{load_lexicon, parse_lexicon, HashtagLexicon, LexiconClass, LexiconEntry};
pub use rubric::{default_rubric, suggest_label, RubricRule, Suggestion};

#[derive(Debug, Error)]
pub enum AgreementError {
    #[error("the two raters share no comparable (non-removed) labels")]
    NoComparablePairs,
    #[error("lexicon row {row}: {reason}")]
    Lexicon { row: usize, reason: String },
    #[error("duplicate hashtag `{tag}` on lexicon rows {first} and {second}")]
    DuplicateTag { tag: String, first: usize, second: usize },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("strata file: {0}")]
    Strata(String),
}

/// Disagreement classes: `yes` vs `no` is completely incorrect, anything
/// involving exactly one `unclear` is partially incorrect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairKind {
    Same,
    Completely,
    Partially,
}

pub fn classify_pair(a: LabelValue, b: LabelValue) -> Option<PairKind> {
    use LabelValue::*;
    match (a, b) {
        (Removed, _) | (_, Removed) => None,
        _ if a == b => Some(PairKind::Same),
        (Unclear, _) | (_, Unclear) => Some(PairKind::Partially),
        _ => Some(PairKind::Completely),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAgreement {
    /// Posts in the stratum.
    pub universe: usize,
    /// Pairs where both raters gave a non-removed label.
    pub comparable: usize,
    /// `universe - comparable`: a label is missing or removed on either side.
    pub excluded: usize,
    pub same: usize,
    pub completely_incorrect: usize,
    pub partially_incorrect: usize,
    pub percent_same: Option<f64>,
    pub percent_different: Option<f64>,
    pub percent_completely_incorrect: Option<f64>,
    pub percent_partially_incorrect: Option<f64>,
    /// Cohen's kappa over {yes, unclear, no}; an extra beyond plain agreement.
    pub cohen_kappa: Option<f64>,
}

impl StratumAgreement {
    pub fn different(&self) -> usize {
        self.completely_incorrect + self.partially_incorrect
    }

    /// Percentages in tenths of a percent, rounded so that same + different
    /// is exactly 1000 and completely + partially is exactly different
    /// (largest-remainder rounding).
    pub fn rounded_tenths(&self) -> Option<RoundedSplit> {
        if self.comparable == 0 {
            return None;
        }
        let n = self.comparable as u64;
        let top = largest_remainder(&[self.same as u64, self.different() as u64], n, 1000);
        let sub = largest_remainder(&[self.completely_incorrect as u64, self.partially_incorrect as u64], self.different().max(1) as u64, top[1]);
        Some(RoundedSplit {
            same: top[0],
            different: top[1],
            completely_incorrect: sub[0],
            partially_incorrect: sub[1],
        })
    }
}

/// Integer percentages in tenths, e.g. `833` is 83.3%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundedSplit {
    pub same: u64,
    pub different: u64,
    pub completely_incorrect: u64,
    pub partially_incorrect: u64,
}

impl RoundedSplit {
    pub fn fmt_tenths(v: u64) -> String {
        format!("{}.{}%", v / 10, v % 10)
    }
}

/// Apportions `total` units among `counts` (summing to `n`) in proportion,
/// with round-half-up shares and leftovers going to the largest remainders.
fn largest_remainder(counts: &[u64], n: u64, total: u64) -> Vec<u64> {
    let sum: u64 = counts.iter().sum();
    if sum == 0 {
        return vec![0; counts.len()];
    }
    let n = n.max(sum);
    let mut shares: Vec<u64> = counts.iter().map(|&c| c * total / n).collect();
    let mut rest: Vec<(u64, usize)> = counts.iter().enumerate().map(|(i, &c)| (c * total % n, i)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut left = total - shares.iter().sum::<u64>();
    for (_, i) in rest {
        if left == 0 {
            break;
        }
        shares[i] += 1;
        left -= 1;
    }
    shares
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub overall: StratumAgreement,
    pub strata: BTreeMap<String, StratumAgreement>,
}

/// Named post-id sets. Conventional names: `random_sample`,
/// `topic_flagged_sample`, `control_portion`, `topic_flagged_portion`.
pub type Strata = BTreeMap<String, BTreeSet<String>>;

pub fn parse_strata(json: &str) -> Result<Strata, AgreementError> {
    serde_json::from_str(json).map_err(|e| AgreementError::Strata(e.to_string()))
}

fn stratum<'a>(a: &BTreeMap<String, LabelValue>, b: &BTreeMap<String, LabelValue>, universe: impl Iterator<Item = &'a String>) -> StratumAgreement {
    let mut n = 0;
    let mut same = 0;
    let mut completely = 0;
    let mut partially = 0;
    let mut size = 0;
    let cats = [LabelValue::Yes, LabelValue::Unclear, LabelValue::No];
    let mut confusion = [[0usize; 3]; 3];
    for id in universe {
        size += 1;
        let (Some(&va), Some(&vb)) = (a.get(id), b.get(id)) else { continue };
        let Some(kind) = classify_pair(va, vb) else { continue };
        n += 1;
        match kind {
            PairKind::Same => same += 1,
            PairKind::Completely => completely += 1,
            PairKind::Partially => partially += 1,
        }
        let ia = cats.iter().position(|&c| c == va).expect("non-removed");
        let ib = cats.iter().position(|&c| c == vb).expect("non-removed");
        confusion[ia][ib] += 1;
    }
    let pct = |c: usize| (n > 0).then(|| 100.0 * c as f64 / n as f64);
    let kappa = (n > 0).then(|| {
        let nf = n as f64;
        let po = same as f64 / nf;
        let pe: f64 = (0..3)
            .map(|i| {
                let ra: usize = confusion[i].iter().sum();
                let rb: usize = (0..3).map(|j| confusion[j][i]).sum();
                ra as f64 * rb as f64 / (nf * nf)
            })
            .sum();
        (pe < 1.0).then(|| (po - pe) / (1.0 - pe))
    });
    StratumAgreement {
        universe: size,
        comparable: n,
        excluded: size - n,
        same,
        completely_incorrect: completely,
        partially_incorrect: partially,
        percent_same: pct(same),
        percent_different: pct(completely + partially),
        percent_completely_incorrect: pct(completely),
        percent_partially_incorrect: pct(partially),
        cohen_kappa: kappa.flatten(),
    }
}

/// Percent agreement between two raters' effective labels on one basis.
///
/// The overall universe is the union of posts either rater labeled; each
/// stratum's universe is its listed posts.
pub fn compute_irr(a: &BTreeMap<String, LabelValue>, b: &BTreeMap<String, LabelValue>, strata: &Strata) -> Result<AgreementReport, AgreementError> {
    let union: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let overall = stratum(a, b, union.into_iter());
    if overall.comparable == 0 {
        return Err(AgreementError::NoComparablePairs);
    }
    let strata = strata.iter().map(|(name, ids)| (name.clone(), stratum(a, b, ids.iter()))).collect();
    Ok(AgreementReport { overall, strata })
}

/// Plain-text table of a report.
pub fn render_report(r: &AgreementReport) -> String {
    let mut out = format!("{:<24} {:>6} {:>8} {:>8} {:>10} {:>10}\n", "stratum", "pairs", "same", "diff", "complete", "partial");
    let row = |name: &str, s: &StratumAgreement| match s.rounded_tenths() {
        Some(t) => format!(
            "{:<24} {:>6} {:>8} {:>8} {:>10} {:>10}\n",
            name,
            s.comparable,
            RoundedSplit::fmt_tenths(t.same),
            RoundedSplit::fmt_tenths(t.different),
            RoundedSplit::fmt_tenths(t.completely_incorrect),
            RoundedSplit::fmt_tenths(t.partially_incorrect)
        ),
        None => format!("{:<24} {:>6} {:>8}\n", name, 0, "n/a"),
    };
    out.push_str(&row("all", &r.overall));
    for (name, s) in &r.strata {
        out.push_str(&row(name, s));
    }
    out
}
